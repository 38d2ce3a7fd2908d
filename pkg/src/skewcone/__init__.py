"""Cone conditions and skew-product flows for forced tridiagonal and parabolic systems."""

from . import cocycle, cones, errors, forcing, ode, omega, parabolic, separation, tridiag

__version__ = "0.1.0"

__all__ = ["cocycle", "cones", "errors", "forcing", "ode", "omega", "parabolic", "separation", "tridiag",
           "__version__"]
