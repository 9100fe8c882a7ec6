"""Compare the jitted integration kernel against the pure numpy fallback.

Runs the quarter-car scenario (4 states, feedback mode, 20 s at 1 ms) through
both kernels and reports wall time and the worst output difference. Invoke as

    python benchmarks/bench_sim.py [repeats]
"""

import sys
import time

import numpy as np

from uio_lab import _kernels, scenarios, sim


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 5

    sc = scenarios.builtin_scenario("example2")
    gains = scenarios.gains_for_scenario(sc)
    kctrl = scenarios.controller_gain(sc)
    M, bu, bd = sim._joint_matrices(sc.system, gains, kctrl)

    cfg = sc.cfg
    y0 = sc.system.C @ cfg.x0
    z0 = cfg.xhat0 - gains.H @ y0 if cfg.xhat0 is not None else cfg.z0
    w0 = np.concatenate([cfg.x0, z0])
    u, d = sc.u_ref, sc.d_sig

    def run(kernel):
        return kernel(
            M, bu, bd, u.code, u.params, d.code, d.params, w0, cfg.dt, cfg.nsteps
        )

    print(f"steps: {cfg.nsteps}, joint dimension: {w0.size}")
    print(f"jit kernel available: {_kernels.JIT_ENABLED}")

    t_py, (w_py, bad_py) = _best_of(lambda: run(_kernels.rk4_affine_py), repeats)
    print(f"numpy fallback: {t_py * 1e3:8.2f} ms (best of {repeats})")

    if not _kernels.JIT_ENABLED:
        print("numba unavailable or disabled (UIO_LAB_DISABLE_JIT); nothing to compare")
        return

    run(_kernels.rk4_affine)  # compile outside the timed region
    t_jit, (w_jit, bad_jit) = _best_of(lambda: run(_kernels.rk4_affine), repeats)
    print(f"jitted kernel:  {t_jit * 1e3:8.2f} ms (best of {repeats})")
    print(f"speedup: {t_py / t_jit:.1f}x")

    diff = float(np.max(np.abs(w_jit - w_py)))
    print(f"max |difference|: {diff:.3e}")
    if diff != 0.0 or bad_jit != bad_py:
        print("WARNING: kernels disagree")
        sys.exit(1)


if __name__ == "__main__":
    main()
