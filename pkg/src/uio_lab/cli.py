"""Command-line front end.

    uio-lab check <model.json>
    uio-lab design <model.json> [-o gains.json]
    uio-lab simulate <model.json> [--csv out.csv] [--plot out.svg] [--strict]
    uio-lab scenario export <name> -o <model.json>

Exit codes: 0 success, 2 design infeasible or the run diverged, 3 bad
input (model file or arguments), 4 output could not be written.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ctrl import ConvergenceError
from .modelfile import ModelFileError, load_model, write_model
from .poleplace import PlacementError
from .scenarios import (
    SCENARIO_NAMES,
    builtin_scenario,
    controller_gain,
    gains_for_scenario,
)
from .sim import InstabilityError, convergence_time, estimate_disturbance, simulate
from .uio import NoUioError, check_existence, verify_gains

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_BAD_INPUT = 3
EXIT_WRITE_FAILURE = 4


def _fail(message: str, code: int) -> int:
    print(f"uio-lab: {message}", file=sys.stderr)
    return code


def _load(path: Path):
    return load_model(path)


def cmd_check(args) -> int:
    try:
        sc = _load(args.model)
    except (ModelFileError, OSError) as exc:
        return _fail(str(exc), EXIT_BAD_INPUT)
    report = check_existence(sc.system)
    print(f"model: {sc.name}")
    print(f"rank(E)   = {report.rank_e}")
    print(f"rank(C E) = {report.rank_ce}")
    print(f"rank condition: {'ok' if report.rank_condition_ok else 'FAILED'}")
    if report.rank_condition_ok:
        if report.detectable:
            print("detectability: ok")
        else:
            modes = ", ".join(f"{z:.6g}" for z in report.unstable_unobservable_modes)
            print(f"detectability: FAILED (unstable hidden modes: {modes})")
    print(f"observer exists: {'yes' if report.uio_exists else 'no'}")
    return EXIT_OK if report.uio_exists else EXIT_INFEASIBLE


def _matrix_list(M) -> list:
    return [[float(v) for v in row] for row in np.asarray(M)]


def _gains_document(sc) -> dict:
    gains = gains_for_scenario(sc)
    chk = verify_gains(sc.system, gains)
    eig = sorted(np.linalg.eigvals(gains.F), key=lambda z: (z.real, z.imag))
    doc = {
        "name": sc.name,
        "F": _matrix_list(gains.F),
        "T": _matrix_list(gains.T),
        "K": _matrix_list(gains.K),
        "H": _matrix_list(gains.H),
        "K1": _matrix_list(gains.K1),
        "K2": _matrix_list(gains.K2),
        "eig_F": [[float(z.real), float(z.imag)] for z in eig],
        "residuals": {k: float(v) for k, v in chk.residuals.items()},
        "spectral_abscissa": float(chk.spectral_abscissa),
    }
    if sc.lqr is not None:
        doc["kctrl"] = _matrix_list(controller_gain(sc))
    return doc


def cmd_design(args) -> int:
    try:
        sc = _load(args.model)
    except (ModelFileError, OSError) as exc:
        return _fail(str(exc), EXIT_BAD_INPUT)
    try:
        doc = _gains_document(sc)
    except (NoUioError, PlacementError, ConvergenceError, ValueError, RuntimeError) as exc:
        return _fail(f"design failed: {exc}", EXIT_INFEASIBLE)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.output is None:
        sys.stdout.write(text)
        return EXIT_OK
    try:
        Path(args.output).write_text(text, encoding="utf-8")
    except OSError as exc:
        return _fail(f"cannot write {args.output}: {exc}", EXIT_WRITE_FAILURE)
    print(f"gains written to {args.output}")
    return EXIT_OK


def _csv_lines(traj):
    n = traj.x.shape[1]
    m = traj.y.shape[1]
    r = traj.u.shape[1]
    q = traj.d.shape[1]
    header = (
        ["t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"xhat{i + 1}" for i in range(n)]
        + [f"e{i + 1}" for i in range(n)]
        + [f"y{i + 1}" for i in range(m)]
        + [f"u{i + 1}" for i in range(r)]
        + [f"d{i + 1}" for i in range(q)]
        + [f"dhat{i + 1}" for i in range(q)]
    )
    yield ",".join(header)
    blocks = (traj.x, traj.xhat, traj.e, traj.y, traj.u, traj.d, traj.dhat)
    for k in range(traj.times.size):
        row = [repr(float(traj.times[k]))]
        for block in blocks:
            row.extend(repr(float(v)) for v in block[k])
        yield ",".join(row)


def _write_plot(traj, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    n = traj.x.shape[1]
    fig, (ax_states, ax_err) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for i in range(n):
        (line,) = ax_states.plot(traj.times, traj.x[:, i], label=f"x{i + 1}")
        ax_states.plot(
            traj.times, traj.xhat[:, i], linestyle="--", color=line.get_color()
        )
    ax_states.set_ylabel("state (solid) / estimate (dashed)")
    ax_states.legend(loc="upper right", ncol=min(n, 4), fontsize="small")
    err = np.linalg.norm(traj.e, axis=1)
    # semilogy chokes on exact zeros; clip to a representable floor
    ax_err.semilogy(traj.times, np.maximum(err, 1e-300))
    ax_err.set_xlabel("t [s]")
    ax_err.set_ylabel("||x - xhat||")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_simulate(args) -> int:
    try:
        sc = _load(args.model)
    except (ModelFileError, OSError) as exc:
        return _fail(str(exc), EXIT_BAD_INPUT)
    try:
        gains = gains_for_scenario(sc)
        kctrl = None
        if sc.cfg.control_mode == "estimate_feedback":
            kctrl = controller_gain(sc)
        traj = simulate(
            sc.system, gains, sc.cfg, u_ref=sc.u_ref, d_sig=sc.d_sig, kctrl=kctrl
        )
    except (NoUioError, PlacementError, ConvergenceError, InstabilityError) as exc:
        return _fail(f"simulation failed: {exc}", EXIT_INFEASIBLE)
    except (ValueError, RuntimeError) as exc:
        return _fail(f"simulation failed: {exc}", EXIT_INFEASIBLE)
    if args.strict:
        try:
            estimate_disturbance(traj, sc.system, gains, strict=True)
        except ValueError as exc:
            return _fail(f"strict mode: {exc}", EXIT_BAD_INPUT)

    print(f"scenario: {sc.name}")
    print(f"samples: {traj.times.size} (dt = {traj.dt:g} s, t_end = {traj.times[-1]:g} s)")
    try:
        tc = convergence_time(traj, 0.01)
        if math.isinf(tc):
            print("convergence to 1% of initial error: not reached")
        else:
            print(f"convergence to 1% of initial error: t = {tc:.3f} s")
    except ValueError:
        print("convergence to 1% of initial error: undefined (e(0) = 0)")
    final_err = float(np.linalg.norm(traj.e[-1]))
    print(f"final estimation error norm: {final_err:.3e}")

    if args.csv is not None:
        try:
            with open(args.csv, "w", encoding="utf-8", newline="") as fh:
                for line in _csv_lines(traj):
                    fh.write(line + "\n")
        except OSError as exc:
            return _fail(f"cannot write {args.csv}: {exc}", EXIT_WRITE_FAILURE)
        print(f"trajectory written to {args.csv}")
    if args.plot is not None:
        try:
            _write_plot(traj, args.plot)
        except OSError as exc:
            return _fail(f"cannot write {args.plot}: {exc}", EXIT_WRITE_FAILURE)
        print(f"plot written to {args.plot}")
    return EXIT_OK


def cmd_scenario_export(args) -> int:
    try:
        sc = builtin_scenario(args.name)
    except ValueError as exc:
        return _fail(str(exc), EXIT_BAD_INPUT)
    try:
        write_model(sc, args.output)
    except OSError as exc:
        return _fail(f"cannot write {args.output}: {exc}", EXIT_WRITE_FAILURE)
    print(f"scenario {sc.name!r} written to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uio-lab",
        description="Design and simulate disturbance-decoupled state observers.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="test whether an observer exists for a model")
    p_check.add_argument("model", type=Path, help="model file (JSON)")
    p_check.set_defaults(func=cmd_check)

    p_design = sub.add_parser("design", help="compute observer gains for a model")
    p_design.add_argument("model", type=Path, help="model file (JSON)")
    p_design.add_argument(
        "-o", "--output", type=Path, default=None, help="gains JSON path (default: stdout)"
    )
    p_design.set_defaults(func=cmd_design)

    p_sim = sub.add_parser("simulate", help="run a model and report on the estimate")
    p_sim.add_argument("model", type=Path, help="model file (JSON)")
    p_sim.add_argument("--csv", type=Path, default=None, help="write the trajectory as CSV")
    p_sim.add_argument("--plot", type=Path, default=None, help="write a plot (svg/png by extension)")
    p_sim.add_argument(
        "--strict",
        action="store_true",
        help="fail instead of degrading when the grid is too coarse for disturbance recovery",
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_scn = sub.add_parser("scenario", help="work with bundled scenarios")
    scn_sub = p_scn.add_subparsers(dest="scenario_command", required=True)
    p_export = scn_sub.add_parser("export", help="write a bundled scenario as a model file")
    p_export.add_argument("name", help=f"one of: {', '.join(SCENARIO_NAMES)}")
    p_export.add_argument("-o", "--output", type=Path, required=True, help="model file to write")
    p_export.set_defaults(func=cmd_scenario_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())
