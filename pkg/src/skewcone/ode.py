"""Adaptive Dormand-Prince 5(4) integrator with cubic Hermite dense output.

The state may have any shape; batches of independent trajectories are
integrated together by stacking them along trailing axes, which shares the
step sequence and keeps the Python overhead per step constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Dormand & Prince (1980) tableau
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
# difference between the 5th and embedded 4th order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


class IntegrationError(RuntimeError):
    """Step size underflow or a non-finite state."""

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last valid time {last_time:.6g})")
        self.last_time = last_time


@dataclass
class Solution:
    """Accepted step endpoints plus derivatives for Hermite interpolation."""

    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    t_eval: np.ndarray
    y_eval: np.ndarray
    n_steps: int
    n_rejected: int
    dense: bool = True

    def __call__(self, tq) -> np.ndarray:
        """Cubic Hermite interpolation between accepted steps."""
        if not self.dense:
            raise ValueError("solution was computed without dense output")
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        idx = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, len(self.t) - 2)
        t0, t1 = self.t[idx], self.t[idx + 1]
        h = t1 - t0
        s = (tq - t0) / h
        shape = (-1,) + (1,) * (self.y.ndim - 1)
        s = s.reshape(shape)
        h = h.reshape(shape)
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return (h00 * self.y[idx] + h10 * h * self.dy[idx]
                + h01 * self.y[idx + 1] + h11 * h * self.dy[idx + 1])


def _error_norm(err, y, y_new, tol):
    scale = tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))
    return float(np.max(np.abs(err) / scale))


def solve(fun, t_span, y0, tol: float = 1e-8, t_eval=None, h0: float | None = None,
          max_step: float = np.inf, dense: bool = False) -> Solution:
    """Integrate ``y' = fun(t, y)`` over ``t_span`` (forward or backward).

    The local error of every accepted step is below ``tol`` in the mixed
    norm ``|err| <= tol (1 + |y|)`` componentwise.  Steps are shortened to
    land exactly on each ``t_eval`` point, so outputs there carry no
    interpolation error.  ``dense=True`` keeps every accepted step for
    Hermite interpolation via ``Solution.__call__``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0, t1 = float(t_span[0]), float(t_span[1])
    direction = 1.0 if t1 >= t0 else -1.0
    y = np.array(y0, dtype=float, copy=True)
    if not np.all(np.isfinite(y)):
        raise IntegrationError("non-finite initial state", t0)
    if t_eval is None:
        t_eval = np.array([t1])
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(direction * np.diff(t_eval) < 0):
        raise ValueError("t_eval must be monotone in the integration direction")
    if t_eval.size and (direction * (t_eval[0] - t0) < -1e-12 or direction * (t_eval[-1] - t1) > 1e-12):
        raise ValueError("t_eval outside t_span")

    y_out = np.empty((len(t_eval),) + y.shape)
    k_out = 0
    while k_out < len(t_eval) and t_eval[k_out] == t0:
        y_out[k_out] = y
        k_out += 1

    t = t0
    f = np.asarray(fun(t, y), dtype=float)
    if h0 is None:
        d0 = np.max(np.abs(y)) + 1e-12
        d1 = np.max(np.abs(f)) + 1e-12
        h0 = min(0.01 * d0 / d1, abs(t1 - t0)) if abs(t1 - t0) > 0 else 0.0
        h0 = max(h0, 1e-6 * tol ** 0.2)
    h = min(abs(h0), max_step)
    ts, ys, dys = ([t], [y.copy()], [f.copy()]) if dense else ([], [], [])
    n_steps = n_rej = 0
    k = [None] * 7
    span = abs(t1 - t0)
    while direction * (t1 - t) > 1e-14 * max(1.0, abs(t1)):
        target = t_eval[k_out] if k_out < len(t_eval) else t1
        h = min(h, max_step)
        step = h
        clipped = False
        if abs(target - t) <= step * (1 + 1e-12):
            step = abs(target - t)
            clipped = True
        if step < 1e-14 * max(1.0, abs(t)) and not clipped:
            raise IntegrationError("step size underflow", t)
        hs = direction * step
        k[0] = f
        for i in range(1, 7):
            dy = hs * sum(a * k[j] for j, a in enumerate(_A[i]) if a != 0.0)
            k[i] = np.asarray(fun(t + _C[i] * hs, y + dy), dtype=float)
        y_new = y + hs * sum(b * k[j] for j, b in enumerate(_B) if b != 0.0)
        err = hs * sum(e * k[j] for j, e in enumerate(_E) if e != 0.0)
        if not np.all(np.isfinite(y_new)):
            err_norm = np.inf
        else:
            err_norm = _error_norm(err, y, y_new, tol)
        if err_norm <= 1.0:
            t = target if clipped else t + hs
            y = y_new
            f = k[6]
            n_steps += 1
            if dense:
                ts.append(t)
                ys.append(y.copy())
                dys.append(f.copy())
            while k_out < len(t_eval) and direction * (t_eval[k_out] - t) <= 1e-12 * max(1.0, span):
                y_out[k_out] = y
                k_out += 1
            factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm ** -0.2)
            # a clipped step says nothing about the natural step length
            h = max(h, step * factor) if clipped else step * factor
        else:
            n_rej += 1
            factor = MIN_FACTOR if not np.isfinite(err_norm) else max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
            h = step * factor
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError("step size underflow", t)
    while k_out < len(t_eval):
        y_out[k_out] = y
        k_out += 1
    if dense:
        return Solution(np.array(ts), np.array(ys), np.array(dys), t_eval, y_out, n_steps, n_rej)
    return Solution(np.array([t0, t]), np.array([np.asarray(y0, dtype=float), y]),
                    np.array([np.zeros_like(y), f]), t_eval, y_out, n_steps, n_rej, dense=False)
