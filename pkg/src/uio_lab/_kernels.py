"""Fixed-step integration loops, compiled with numba when available.

The RK4 loop is the only place in the package where Python-level overhead
matters, so its body is built twice from one source: a plain-Python copy
(always importable, used as the fallback and as the benchmark baseline)
and an njit-compiled copy. Both produce bit-identical trajectories; see
benchmarks/bench_sim.py.

Set UIO_LAB_DISABLE_JIT=1 to force the plain path even when numba is
installed. Closures cannot use numba's on-disk cache, so the jit path
pays a one-time compile cost per process on first use.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "JIT_ENABLED",
    "SIG_ZERO",
    "SIG_CONSTANT",
    "SIG_STEP",
    "SIG_SINE",
    "SIG_PULSE",
    "signal_value",
    "signal_series",
    "rk4_affine",
    "signal_value_py",
    "signal_series_py",
    "rk4_affine_py",
]

SIG_ZERO = 0
SIG_CONSTANT = 1
SIG_STEP = 2
SIG_SINE = 3
SIG_PULSE = 4


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    _HAVE_NUMBA = False

JIT_ENABLED = _HAVE_NUMBA and not _env_flag("UIO_LAB_DISABLE_JIT")


def _build(compiled: bool):
    if compiled:
        wrap = numba.njit(fastmath=False)
    else:

        def wrap(fn):
            return fn

    @wrap
    def signal_value(code, params, t):
        # params layout: [amplitude, start_time, frequency, phase, width]
        amp = params[0]
        start = params[1]
        if code == 0:
            return 0.0
        if code == 1:
            return amp
        if code == 2:
            return amp if t >= start else 0.0
        if code == 3:
            if t < start:
                return 0.0
            return amp * np.sin(params[2] * (t - start) + params[3])
        if code == 4:
            return amp if (t >= start and t < start + params[4]) else 0.0
        return np.nan

    @wrap
    def signal_series(code, params, times):
        out = np.empty(times.shape[0])
        for i in range(times.shape[0]):
            out[i] = signal_value(code, params, times[i])
        return out

    @wrap
    def rk4_affine(M, bu, bd, u_code, u_params, d_code, d_params, w0, dt, nsteps):
        """Integrate dw/dt = M w + bu * su(t) + bd * sd(t) over a uniform grid.

        Returns (W, bad) where W is (nsteps + 1, len(w0)) with W[k] the
        state at t = k*dt, and bad is the first step index at which the
        state went non-finite (-1 when the run stayed finite; rows from
        bad onward then just repeat the offending state).
        """
        N = w0.shape[0]
        W = np.empty((nsteps + 1, N))
        w = w0.copy()
        for j in range(N):
            W[0, j] = w[j]
        bad = -1
        half = 0.5 * dt
        sixth = dt / 6.0
        for k in range(nsteps):
            t = k * dt
            su0 = signal_value(u_code, u_params, t)
            sd0 = signal_value(d_code, d_params, t)
            suh = signal_value(u_code, u_params, t + half)
            sdh = signal_value(d_code, d_params, t + half)
            su1 = signal_value(u_code, u_params, t + dt)
            sd1 = signal_value(d_code, d_params, t + dt)
            k1 = M @ w + bu * su0 + bd * sd0
            k2 = M @ (w + half * k1) + bu * suh + bd * sdh
            k3 = M @ (w + half * k2) + bu * suh + bd * sdh
            k4 = M @ (w + dt * k3) + bu * su1 + bd * sd1
            w = w + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ok = True
            for j in range(N):
                if not np.isfinite(w[j]):
                    ok = False
            for j in range(N):
                W[k + 1, j] = w[j]
            if not ok:
                bad = k + 1
                for kk in range(k + 2, nsteps + 1):
                    for j in range(N):
                        W[kk, j] = w[j]
                break
        return W, bad

    return signal_value, signal_series, rk4_affine


signal_value_py, signal_series_py, rk4_affine_py = _build(False)

if JIT_ENABLED:
    signal_value, signal_series, rk4_affine = _build(True)
else:
    signal_value, signal_series, rk4_affine = (
        signal_value_py,
        signal_series_py,
        rk4_affine_py,
    )
