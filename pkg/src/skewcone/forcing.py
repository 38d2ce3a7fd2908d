"""Quasi-periodic forcing on a torus hull.

The hull of a finite trigonometric sum with rationally independent
frequencies is the torus T^m with the linear flow ``theta -> theta + omega t``.
Every object here is immutable, so base points and forcing specs can be
shared freely between batch runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Continued-fraction denominators above this bound are treated as "irrational".
MAX_DENOMINATOR = 10**6


class ForcingDomainError(ValueError):
    """State passed to a forcing evaluator lies outside the declared box."""


def _wrap(angles: np.ndarray) -> np.ndarray:
    out = np.mod(angles, TWO_PI)
    # mod can return exactly 2*pi for tiny negative inputs
    out[out >= TWO_PI] = 0.0
    return out


def wrap_signed(angles: np.ndarray | float) -> np.ndarray:
    """Map angles to the interval [-pi, pi)."""
    return np.mod(np.asarray(angles, dtype=float) + math.pi, TWO_PI) - math.pi


def is_rational_ratio(a: float, b: float, max_denominator: int = MAX_DENOMINATOR) -> bool:
    """True when ``a/b`` is reproduced by a convergent with a small denominator.

    The ratio is declared rational if some continued-fraction convergent with
    denominator at most ``max_denominator`` matches it to double precision.
    """
    if b == 0.0:
        raise ValueError("zero frequency")
    ratio = a / b
    approx = Fraction(ratio).limit_denominator(max_denominator)
    return abs(float(approx) - ratio) <= 4.0 * np.finfo(float).eps * max(1.0, abs(ratio))


@dataclass(frozen=True)
class RotationVector:
    """Frequencies of the linear flow on the torus (rad per unit time)."""

    omega: tuple[float, ...]
    check_irrational: bool = True

    def __post_init__(self):
        omega = tuple(float(w) for w in np.atleast_1d(self.omega))
        if len(omega) < 1:
            raise ValueError("rotation needs at least one frequency")
        if not all(math.isfinite(w) for w in omega):
            raise ValueError("frequencies must be finite")
        object.__setattr__(self, "omega", omega)
        if self.check_irrational and len(omega) >= 2:
            nonzero = [w for w in omega if w != 0.0]
            pairs = [(a, b) for i, a in enumerate(nonzero) for b in nonzero[i + 1:]]
            if not any(not is_rational_ratio(a, b) for a, b in pairs):
                raise ValueError(
                    f"no pair of frequencies in {omega} has an irrational ratio "
                    f"(checked to denominator {MAX_DENOMINATOR})"
                )

    @property
    def m(self) -> int:
        return len(self.omega)

    def as_array(self) -> np.ndarray:
        return np.array(self.omega)


@dataclass(frozen=True)
class TorusPoint:
    """A point of the hull, angles reduced to [0, 2 pi)."""

    angles: tuple[float, ...]

    def __post_init__(self):
        a = _wrap(np.atleast_1d(np.asarray(self.angles, dtype=float)).copy())
        object.__setattr__(self, "angles", tuple(float(v) for v in a))

    @classmethod
    def zero(cls, m: int) -> "TorusPoint":
        return cls((0.0,) * m)

    def as_array(self) -> np.ndarray:
        return np.array(self.angles)

    def distance(self, other: "TorusPoint") -> float:
        """Max-norm distance on the torus."""
        d = wrap_signed(self.as_array() - other.as_array())
        return float(np.max(np.abs(d)))


def advance_base(theta: TorusPoint, rot: RotationVector, t: float) -> TorusPoint:
    """Flow the base point: ``theta . t``."""
    if len(theta.angles) != rot.m:
        raise ValueError("torus point and rotation have different dimensions")
    return TorusPoint(tuple(theta.as_array() + rot.as_array() * t))


def base_angles(theta) -> np.ndarray:
    """Angles of a TorusPoint, or a raw angle array of shape (m,) or (m, batch)."""
    if isinstance(theta, TorusPoint):
        return theta.as_array()
    return np.asarray(theta, dtype=float)


def angles_at(theta: TorusPoint, rot: RotationVector, t) -> np.ndarray:
    """Unwrapped angles ``theta + omega t``; shape (m,) or (m, len(t))."""
    t = np.asarray(t, dtype=float)
    base = theta.as_array()
    om = rot.as_array()
    if t.ndim == 0:
        return base + om * float(t)
    return base[:, None] + om[:, None] * t[None, :]


Coefficient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Mode:
    """One harmonic ``coeff(x) * trig(k . angles)``.

    ``coeff`` is either a constant amplitude vector (one entry per state
    component) or a callable of the state returning such a vector.
    """

    k: tuple[int, ...]
    coeff: object
    trig: str = "sin"

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if self.trig not in ("sin", "cos"):
            raise ValueError(f"trig must be 'sin' or 'cos', got {self.trig!r}")
        if not callable(self.coeff):
            object.__setattr__(self, "coeff", np.asarray(self.coeff, dtype=float))

    def amplitude(self, x: np.ndarray) -> np.ndarray:
        if callable(self.coeff):
            return np.asarray(self.coeff(x), dtype=float)
        c = self.coeff
        if c.ndim == 0:
            return np.full(x.shape, float(c))
        # broadcast over trailing batch axes of x
        return c.reshape(c.shape + (1,) * (x.ndim - 1)) * np.ones_like(x)


@dataclass(frozen=True)
class ForcingSpec:
    """Finite trigonometric forcing ``F(theta, x)`` with state box ``|x_i| <= box``."""

    modes: tuple[Mode, ...]
    rotation: RotationVector
    box: float = math.inf
    bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        for mode in self.modes:
            if len(mode.k) != self.rotation.m:
                raise ValueError(f"mode {mode.k} does not match torus dimension {self.rotation.m}")

    def sup_bound(self) -> float:
        """Declared bound, or the sum of constant amplitudes when not declared."""
        if self.bound is not None:
            return float(self.bound)
        total = 0.0
        for mode in self.modes:
            if callable(mode.coeff):
                return math.inf
            total += float(np.max(np.abs(mode.coeff))) if mode.coeff.size else 0.0
        return total


def eval_forcing(spec: ForcingSpec, theta, x) -> np.ndarray:
    """Evaluate ``sum_k coeff_k(x) trig(k . angles)``.

    ``theta`` may be a TorusPoint or a raw angle array; ``x`` has the state
    index first and arbitrary trailing batch axes.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > spec.box):
        raise ForcingDomainError(f"state outside the box |x_i| <= {spec.box}")
    angles = theta.as_array() if isinstance(theta, TorusPoint) else np.asarray(theta, dtype=float)
    out = np.zeros_like(x)
    for mode in spec.modes:
        phase = np.tensordot(np.array(mode.k, dtype=float), angles, axes=(0, 0))
        trig = np.sin(phase) if mode.trig == "sin" else np.cos(phase)
        out = out + mode.amplitude(x) * trig
    return out


def quasi_periodic(amplitude: Sequence[float] | float, rotation: RotationVector, n: int,
                   box: float = math.inf) -> ForcingSpec:
    """``amplitude * sum_j sin(theta_j)`` applied to every component."""
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (n,)).copy()
    modes = []
    for j in range(rotation.m):
        k = [0] * rotation.m
        k[j] = 1
        modes.append(Mode(tuple(k), amp))
    return ForcingSpec(tuple(modes), rotation, box=box)


def find_almost_period(samples, dt: float, eps: float, horizon: float | None = None):
    """Smallest grid shift ``tau`` with ``sup_t |f(t + tau) - f(t)| < eps``.

    ``samples`` holds f on a uniform grid of step ``dt`` starting at 0
    (scalar samples or rows of vectors).  Shifts are searched over
    ``(0, horizon/2]``; the sup is taken over every pair of samples that
    the shift leaves inside the record.  Returns None when no shift works.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    f = np.asarray(samples, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    count = f.shape[0]
    if horizon is None:
        horizon = (count - 1) * dt
    max_shift = int(math.floor(horizon / 2.0 / dt + 1e-9))
    max_shift = min(max_shift, count - 1)
    for k in range(1, max_shift + 1):
        gap = np.max(np.abs(f[k:] - f[:-k]))
        if gap < eps:
            return k * dt
    return None


def return_times(theta0: TorusPoint, rot: RotationVector, target: TorusPoint, eta: float,
                 t_min: float, t_max: float) -> np.ndarray:
    """Times in ``[t_min, t_max]`` where ``theta0 . t`` comes within ``eta`` of ``target``.

    The first frequency's lattice ``t = t* + 2 pi k / omega_0`` is enumerated;
    inside each window where coordinate 0 is within ``eta`` the remaining
    coordinates are checked and the time minimising the max-norm mismatch is
    kept (one return per window).
    """
    om = rot.as_array()
    if om[0] == 0.0:
        raise ValueError("first frequency must be nonzero for lattice enumeration")
    base = theta0.as_array()
    tgt = target.as_array()
    period = TWO_PI / abs(om[0])
    offset = wrap_signed(tgt[0] - base[0]) / om[0]
    k0 = math.floor((t_min - offset) / period) - 1
    k1 = math.ceil((t_max - offset) / period) + 1
    ks = np.arange(k0, k1 + 1)
    centers = offset + ks * period
    half_window = eta / abs(om[0])
    # mismatch is piecewise linear in t inside a window; sample it finely
    fine = np.linspace(-half_window, half_window, 41)
    t = centers[:, None] + fine[None, :]
    mism = np.abs(wrap_signed(base[:, None, None] + om[:, None, None] * t[None] - tgt[:, None, None]))
    worst = mism.max(axis=0)
    best = np.argmin(worst, axis=1)
    t_best = t[np.arange(len(ks)), best]
    ok = (worst[np.arange(len(ks)), best] < eta) & (t_best >= t_min) & (t_best <= t_max)
    return t_best[ok]
