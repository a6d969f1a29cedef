"""Explicit Runge-Kutta integrators for array-valued ODEs ``dy/dt = f(t, y)``.

``y`` may be any complex ndarray (state vectors or density matrices); no
flattening is done.  Both integrators land exactly on every requested output
time and yield ``(t, y)`` pairs lazily so large states need not be stored.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import IntegrationError

# Dormand-Prince 5(4), Hairer/Norsett/Wanner table
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)  # b - b_hat


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0


def _error_norm(err, y, y_new, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1-D grid")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def dopri5(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    times: Sequence[float],
    rtol: float = 1e-8,
    atol: float = 1e-12,
    first_step: float | None = None,
    max_step: float = np.inf,
    max_steps: int = 10_000_000,
    stats: StepStats | None = None,
) -> Iterator[tuple[float, np.ndarray]]:
    """Adaptive Dormand-Prince 5(4) with PI step-size control.

    Yields ``(times[0], y0)`` first.  Raises :class:`IntegrationError` with the
    reached time when the step size underflows or the state becomes non-finite.
    """
    times = _check_times(times)
    stats = stats if stats is not None else StepStats()
    t = float(times[0])
    y = np.array(y0, dtype=complex)
    yield t, y.copy()
    if len(times) == 1:
        return

    safety, fac_min, fac_max, beta = 0.9, 0.2, 10.0, 0.04
    expo = 0.2 - 0.75 * beta
    err_old = 1e-4

    k1 = f(t, y)
    stats.evaluations += 1
    span = times[-1] - t
    if first_step is None:
        d0 = np.sqrt(np.mean(np.abs(y / (atol + rtol * np.abs(y))) ** 2))
        d1 = np.sqrt(np.mean(np.abs(k1 / (atol + rtol * np.abs(y))) ** 2))
        h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
        h = min(h, span)
    else:
        h = first_step
    h = min(h, max_step)

    for t_out in times[1:]:
        while t < t_out:
            if stats.accepted + stats.rejected >= max_steps:
                raise IntegrationError(f"exceeded {max_steps} steps", t=t)
            last = t + h >= t_out
            h_try = t_out - t if last else h
            if h_try <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
                raise IntegrationError(f"step size underflow at t={t!r}", t=t)
            k = [k1]
            for s in range(1, 7):
                ys = y + h_try * sum(a * ki for a, ki in zip(_A[s], k) if a != 0.0)
                k.append(f(t + _C[s] * h_try, ys))
            stats.evaluations += 6
            y_new = ys  # stage 7 is evaluated at the 5th-order solution (FSAL)
            err = h_try * sum(e * ki for e, ki in zip(_E, k) if e != 0.0)
            en = _error_norm(err, y, y_new, rtol, atol)
            if not np.isfinite(en):
                raise IntegrationError(f"non-finite state at t={t!r}", t=t)
            fac11 = max(en, 1e-300) ** expo
            if en <= 1.0:
                fac = fac11 / err_old ** beta
                fac = min(1 / fac_min, max(1 / fac_max, fac / safety))
                err_old = max(en, 1e-4)
                t = t_out if last else t + h_try
                y = y_new
                k1 = k[6]
                stats.accepted += 1
                if not last or h_try >= h:
                    h = min(h_try / fac, max_step)
            else:
                stats.rejected += 1
                h = h_try / min(1 / fac_min, fac11 / safety)
        yield t, y.copy()


def rk4(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    times: Sequence[float],
    dt: float,
    stats: StepStats | None = None,
) -> Iterator[tuple[float, np.ndarray]]:
    """Classical fixed-step RK4; each output interval is split into ``ceil(gap/dt)`` equal steps.

    The sequence of floating-point operations depends only on the inputs,
    so repeated runs are bitwise identical.
    """
    times = _check_times(times)
    if dt <= 0:
        raise ValueError("dt must be positive")
    stats = stats if stats is not None else StepStats()
    t = float(times[0])
    y = np.array(y0, dtype=complex)
    yield t, y.copy()
    for t_out in times[1:]:
        n = max(1, int(np.ceil((t_out - t) / dt - 1e-9)))
        h = (t_out - t) / n
        t_start = t
        for i in range(n):
            ti = t_start + i * h
            k1 = f(ti, y)
            k2 = f(ti + h / 2, y + (h / 2) * k1)
            k3 = f(ti + h / 2, y + (h / 2) * k2)
            k4 = f(ti + h, y + h * k3)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            stats.accepted += 1
            stats.evaluations += 4
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={t_out!r}", t=t_out)
        t = float(t_out)
        yield t, y.copy()
