"""JSON model files: a complete scenario as a single reviewable document.

The schema is strict: unknown keys anywhere are an error (a typo like
"Fdess" must not silently fall back to defaults), matrices must be
rectangular lists of numbers, and every reported problem names the field
path it was found at. Parsing never runs design computations, so a model
whose observer turns out not to exist still parses cleanly; that failure
belongs to the design step.

Top-level keys:

    name       optional string (defaults to the file stem)
    A, C, E    required matrices
    B          optional matrix (omit or null for an input-free plant)
    poles      list of numbers or [re, im] pairs  } exactly one
    Fdes       square matrix                      } of these two
    lqr        optional {"Q": matrix, "R": matrix}
    sim        required {"x0": vector, optional "t_end", "dt", "xhat0",
               "control_mode"}
    signals    optional {"input": signal, "disturbance": signal}

A signal is {"kind": ...} plus the parameters that kind uses (see
``sim.Signal``). sim.dt defaults to the UIO_LAB_DT environment variable
when set, else 1e-3 s; t_end defaults to 20 s. When "xhat0" is omitted
the observer starts from zero internal state (z = 0, i.e. the initial
estimate is H y(0)); exporting normalizes to the "xhat0" form.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .ctrl import LqrProblem
from .scenarios import Scenario
from .sim import Signal, SimConfig
from .uio import LinearSystem, compute_decoupling, _reduced_system

__all__ = ["ModelFileError", "parse_model", "load_model", "export_model", "write_model"]

_DEFAULT_T_END = 20.0
_DEFAULT_DT = 1e-3
_DT_ENV = "UIO_LAB_DT"

_TOP_KEYS = {"name", "A", "B", "C", "E", "poles", "Fdes", "lqr", "sim", "signals"}
_SIM_KEYS = {"t_end", "dt", "x0", "xhat0", "control_mode"}
_LQR_KEYS = {"Q", "R"}
_SIGNALS_KEYS = {"input", "disturbance"}
_SIGNAL_KEYS_BY_KIND = {
    "zero": set(),
    "constant": {"amplitude"},
    "step": {"amplitude", "start_time"},
    "sine": {"amplitude", "frequency", "phase", "start_time"},
    "pulse": {"amplitude", "start_time", "width"},
}
_SIGNAL_REQUIRED = {
    "zero": set(),
    "constant": {"amplitude"},
    "step": {"amplitude"},
    "sine": {"amplitude", "frequency"},
    "pulse": {"amplitude", "start_time", "width"},
}


class ModelFileError(ValueError):
    """The model file is malformed; the message names the offending field."""


def _require_dict(obj: Any, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ModelFileError(f"{path}: expected an object, got {type(obj).__name__}")
    return obj


def _reject_unknown(obj: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ModelFileError(
            f"{path}: unrecognized key(s) {', '.join(repr(k) for k in unknown)}; "
            f"allowed: {', '.join(sorted(allowed))}"
        )


def _number(v: Any, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelFileError(f"{path}: expected a number, got {v!r}")
    f = float(v)
    if not math.isfinite(f):
        raise ModelFileError(f"{path}: value must be finite, got {f!r}")
    return f


def _vector(obj: Any, path: str) -> list[float]:
    if not isinstance(obj, list) or not obj:
        raise ModelFileError(f"{path}: expected a non-empty list of numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(obj)]


def _matrix(obj: Any, path: str) -> list[list[float]]:
    if not isinstance(obj, list) or not obj:
        raise ModelFileError(f"{path}: expected a non-empty list of rows")
    rows = []
    width = None
    for i, row in enumerate(obj):
        if not isinstance(row, list) or not row:
            raise ModelFileError(f"{path}[{i}]: expected a non-empty list of numbers")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ModelFileError(
                f"{path}[{i}]: row has {len(row)} entries, expected {width} (ragged matrix)"
            )
        rows.append([_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    return rows


def _pole(obj: Any, path: str) -> complex:
    if isinstance(obj, list):
        if len(obj) != 2:
            raise ModelFileError(f"{path}: a complex pole must be a [re, im] pair")
        return complex(_number(obj[0], f"{path}[0]"), _number(obj[1], f"{path}[1]"))
    return complex(_number(obj, path))


def _signal(obj: Any, path: str) -> Signal:
    d = _require_dict(obj, path)
    if "kind" not in d:
        raise ModelFileError(f"{path}: missing required key 'kind'")
    kind = d["kind"]
    if not isinstance(kind, str) or kind not in _SIGNAL_KEYS_BY_KIND:
        raise ModelFileError(
            f"{path}.kind: unknown signal kind {kind!r}; "
            f"expected one of {', '.join(sorted(_SIGNAL_KEYS_BY_KIND))}"
        )
    allowed = _SIGNAL_KEYS_BY_KIND[kind] | {"kind"}
    _reject_unknown(d, allowed, path)
    missing = sorted(_SIGNAL_REQUIRED[kind] - set(d))
    if missing:
        raise ModelFileError(
            f"{path}: signal kind {kind!r} requires {', '.join(repr(k) for k in missing)}"
        )
    params = {k: _number(v, f"{path}.{k}") for k, v in d.items() if k != "kind"}
    try:
        return Signal(kind=kind, **params)
    except ValueError as exc:
        raise ModelFileError(f"{path}: {exc}") from exc


def _default_dt() -> float:
    raw = os.environ.get(_DT_ENV)
    if raw is None or raw.strip() == "":
        return _DEFAULT_DT
    try:
        return float(raw)
    except ValueError:
        raise ModelFileError(
            f"environment variable {_DT_ENV} is not a valid number: {raw!r}"
        ) from None


def parse_model(doc: dict, default_name: str = "model") -> Scenario:
    """Build a Scenario from an already-deserialized model document."""
    _require_dict(doc, "model")
    _reject_unknown(doc, _TOP_KEYS, "model")
    for key in ("A", "C", "E"):
        if key not in doc:
            raise ModelFileError(f"model: missing required matrix {key!r}")
    name = doc.get("name", default_name)
    if not isinstance(name, str) or not name:
        raise ModelFileError("name: expected a non-empty string")

    A = _matrix(doc["A"], "A")
    C = _matrix(doc["C"], "C")
    E = _matrix(doc["E"], "E")
    B = None
    if doc.get("B") is not None:
        B = _matrix(doc["B"], "B")
    try:
        system = LinearSystem(A=A, B=B, C=C, E=E)
    except ValueError as exc:
        raise ModelFileError(f"system matrices: {exc}") from exc

    has_poles = "poles" in doc
    has_fdes = "Fdes" in doc
    if has_poles == has_fdes:
        raise ModelFileError("model: exactly one of 'poles' and 'Fdes' must be given")
    poles = None
    fdes = None
    if has_poles:
        raw = doc["poles"]
        if not isinstance(raw, list) or not raw:
            raise ModelFileError("poles: expected a non-empty list")
        poles = tuple(_pole(p, f"poles[{i}]") for i, p in enumerate(raw))
    else:
        fdes = np.array(_matrix(doc["Fdes"], "Fdes"))
        if fdes.shape != (system.n, system.n):
            raise ModelFileError(
                f"Fdes: must be {system.n} x {system.n}, got {fdes.shape[0]} x {fdes.shape[1]}"
            )

    lqr = None
    if "lqr" in doc:
        block = _require_dict(doc["lqr"], "lqr")
        _reject_unknown(block, _LQR_KEYS, "lqr")
        for key in sorted(_LQR_KEYS):
            if key not in block:
                raise ModelFileError(f"lqr: missing required matrix {key!r}")
        try:
            lqr = LqrProblem(
                A=system.A,
                B=system.B,
                Q=_matrix(block["Q"], "lqr.Q"),
                R=_matrix(block["R"], "lqr.R"),
            )
        except ValueError as exc:
            raise ModelFileError(f"lqr: {exc}") from exc

    if "sim" not in doc:
        raise ModelFileError("model: missing required block 'sim'")
    sim_block = _require_dict(doc["sim"], "sim")
    _reject_unknown(sim_block, _SIM_KEYS, "sim")
    if "x0" not in sim_block:
        raise ModelFileError("sim: missing required vector 'x0'")
    x0 = _vector(sim_block["x0"], "sim.x0")
    if len(x0) != system.n:
        raise ModelFileError(f"sim.x0: expected {system.n} entries, got {len(x0)}")
    t_end = _number(sim_block.get("t_end", _DEFAULT_T_END), "sim.t_end")
    dt = _number(sim_block["dt"], "sim.dt") if "dt" in sim_block else _default_dt()
    mode = sim_block.get("control_mode", "open_loop")
    if not isinstance(mode, str):
        raise ModelFileError("sim.control_mode: expected a string")
    xhat0 = None
    z0 = None
    if "xhat0" in sim_block:
        xhat0 = _vector(sim_block["xhat0"], "sim.xhat0")
        if len(xhat0) != system.n:
            raise ModelFileError(
                f"sim.xhat0: expected {system.n} entries, got {len(xhat0)}"
            )
    else:
        z0 = [0.0] * system.n
    try:
        cfg = SimConfig(
            t_end=t_end, dt=dt, x0=x0, z0=z0, xhat0=xhat0, control_mode=mode
        )
    except ValueError as exc:
        raise ModelFileError(f"sim: {exc}") from exc

    u_ref = Signal.zero()
    d_sig = Signal.zero()
    if "signals" in doc:
        sig_block = _require_dict(doc["signals"], "signals")
        _reject_unknown(sig_block, _SIGNALS_KEYS, "signals")
        if "input" in sig_block:
            u_ref = _signal(sig_block["input"], "signals.input")
        if "disturbance" in sig_block:
            d_sig = _signal(sig_block["disturbance"], "signals.disturbance")

    try:
        return Scenario(
            name=name,
            system=system,
            cfg=cfg,
            u_ref=u_ref,
            d_sig=d_sig,
            poles=poles,
            fdes=fdes,
            lqr=lqr,
        )
    except ValueError as exc:
        raise ModelFileError(f"model: {exc}") from exc


def load_model(path) -> Scenario:
    """Parse a model file from disk. IO errors propagate as OSError."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_model(doc, default_name=path.stem)


def _signal_dict(sig: Signal) -> dict:
    out: dict[str, Any] = {"kind": sig.kind}
    for key in sorted(_SIGNAL_KEYS_BY_KIND[sig.kind]):
        out[key] = getattr(sig, key)
    return out


def _matrix_list(M: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in np.asarray(M)]


def export_model(sc: Scenario) -> dict:
    """Serialize a scenario to the model-file document form.

    The output is normalized: the initial estimate is always written as
    "xhat0" (computing H once if the scenario was given in z0 form), and
    every optional block that is present in the scenario appears
    explicitly, so re-parsing the document reproduces the scenario.
    """
    doc: dict[str, Any] = {
        "name": sc.name,
        "A": _matrix_list(sc.system.A),
        "C": _matrix_list(sc.system.C),
        "E": _matrix_list(sc.system.E),
    }
    if sc.system.r:
        doc["B"] = _matrix_list(sc.system.B)
    if sc.poles is not None:
        doc["poles"] = [
            p.real if p.imag == 0.0 else [p.real, p.imag] for p in sc.poles
        ]
    else:
        doc["Fdes"] = _matrix_list(sc.fdes)
    if sc.lqr is not None:
        doc["lqr"] = {"Q": _matrix_list(sc.lqr.Q), "R": _matrix_list(sc.lqr.R)}
    if sc.cfg.xhat0 is not None:
        xhat0 = sc.cfg.xhat0
    else:
        reduced, _ = _reduced_system(sc.system)
        H, _, _ = compute_decoupling(reduced)
        xhat0 = sc.cfg.z0 + H @ (sc.system.C @ sc.cfg.x0)
    doc["sim"] = {
        "t_end": sc.cfg.t_end,
        "dt": sc.cfg.dt,
        "x0": [float(v) for v in sc.cfg.x0],
        "xhat0": [float(v) for v in xhat0],
        "control_mode": sc.cfg.control_mode,
    }
    doc["signals"] = {
        "input": _signal_dict(sc.u_ref),
        "disturbance": _signal_dict(sc.d_sig),
    }
    return doc


def write_model(sc: Scenario, path) -> None:
    """Write a scenario to disk in model-file form (stable key order)."""
    doc = export_model(sc)
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
