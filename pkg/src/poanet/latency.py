"""Polynomial link-latency family shared by every link of a network.

A link's travel time is ``free_flow_time * f(x / capacity)`` where ``f`` is a
polynomial with f(0) = 1. The same ``f`` is shared by all links; only the
free-flow time and capacity differ per link. Marginal (externality-inclusive)
latencies and the flow integral of the latency are available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import NegativeCongestionRatio

__all__ = [
    "LatencyFunction",
    "bpr",
    "evaluate_f",
    "link_latency",
    "marginal_latency",
    "beckmann_term",
]


@dataclass(frozen=True)
class LatencyFunction:
    """Dimensionless congestion factor f(z) = sum_i coefficients[i] * z**i.

    ``coefficients[0]`` must be exactly 1 so that f(0) = 1.  ``offset_c`` is
    the kernel offset the coefficients were estimated under; it is recorded
    for provenance only and does not enter evaluation.
    """

    coefficients: tuple[float, ...]
    offset_c: float = 0.0
    # Derivative coefficients, cached at construction.
    _deriv: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = tuple(float(b) for b in self.coefficients)
        if len(coeffs) == 0:
            raise ValueError("latency function needs at least the constant coefficient")
        if coeffs[0] != 1.0:
            raise ValueError(f"constant coefficient must be exactly 1, got {coeffs[0]!r}")
        if not all(np.isfinite(coeffs)):
            raise ValueError("latency coefficients must be finite")
        if self.offset_c < 0:
            raise ValueError("kernel offset must be nonnegative")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(
            self, "_deriv", tuple(npoly.polyder(np.asarray(coeffs)).tolist()) or (0.0,)
        )

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def value(self, z):
        """f(z) for scalar or array z >= 0."""
        z = _check_ratio(z)
        return npoly.polyval(z, self.coefficients)

    def derivative(self, z):
        """df/dz for scalar or array z >= 0."""
        z = _check_ratio(z)
        return npoly.polyval(z, self._deriv)

    def marginal_value(self, z):
        """f(z) + z * df/dz, the factor behind externality-inclusive latency."""
        z = _check_ratio(z)
        return npoly.polyval(z, self.coefficients) + z * npoly.polyval(z, self._deriv)

    def integral(self, z):
        """Antiderivative F(z) = sum_i coefficients[i] * z**(i+1) / (i+1), F(0) = 0."""
        z = _check_ratio(z)
        anti = npoly.polyint(np.asarray(self.coefficients))
        return npoly.polyval(z, anti)

    def as_marginal(self) -> "LatencyFunction":
        """Latency function whose plain value equals this one's marginal value.

        The transform multiplies coefficient i by (i + 1); the constant term
        stays 1, so the result is itself a valid latency function.
        """
        coeffs = tuple((i + 1) * b for i, b in enumerate(self.coefficients))
        return LatencyFunction(coeffs, offset_c=self.offset_c)

    def is_nondecreasing_on(self, z_max: float, grid: int = 256) -> bool:
        """Check f is non-decreasing on [0, z_max] on a uniform grid."""
        if z_max <= 0:
            return True
        zs = np.linspace(0.0, float(z_max), grid)
        vals = self.value(zs)
        return bool(np.all(np.diff(vals) >= -1e-12 * max(1.0, float(np.max(np.abs(vals))))))

    def to_json_dict(self) -> dict:
        return {
            "degree": self.degree,
            "offset_c": self.offset_c,
            "coefficients": list(self.coefficients),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "LatencyFunction":
        coeffs = tuple(float(b) for b in data["coefficients"])
        if "degree" in data and int(data["degree"]) != len(coeffs) - 1:
            raise ValueError("degree field inconsistent with coefficient count")
        return cls(coeffs, offset_c=float(data.get("offset_c", 0.0)))


def bpr() -> LatencyFunction:
    """The standard quartic volume-delay factor 1 + 0.15 z^4."""
    return LatencyFunction((1.0, 0.0, 0.0, 0.0, 0.15))


def _check_ratio(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise NegativeCongestionRatio("congestion ratio must be nonnegative")
    if z.ndim == 0:
        return float(z)
    return z


def evaluate_f(f: LatencyFunction, z):
    """Dimensionless congestion factor at ratio z."""
    return f.value(z)


def link_latency(link, x, f: LatencyFunction):
    """Travel time of ``link`` at flow x (hours). Flow may exceed capacity."""
    x = _check_ratio(x)
    return link.free_flow_time * f.value(x / link.capacity)


def marginal_latency(link, x, f: LatencyFunction):
    """d/dx of x * t(x): the travel time a marginal user imposes, self included."""
    x = _check_ratio(x)
    return link.free_flow_time * f.marginal_value(x / link.capacity)


def beckmann_term(link, x, f: LatencyFunction):
    """Integral of the link travel time from 0 to flow x, in closed form."""
    x = _check_ratio(x)
    return link.free_flow_time * link.capacity * f.integral(x / link.capacity)
