"""Fog attenuation model.

The fog transmittance ``Ia = exp(-T)`` where the optical depth ``T`` is
Gamma distributed with shape ``k`` and rate ``z = 4.343 / (beta * l)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "FOG_PRESETS",
    "FogParams",
    "fog_preset",
    "fog_pdf",
    "fog_cdf",
    "fog_mean",
    "fog_sample",
]

# (shape k, scale beta) per fog type
FOG_PRESETS: dict[str, tuple[float, float]] = {
    "dense": (36.05, 11.91),
    "thick": (6.00, 23.00),
    "moderate": (5.49, 12.06),
    "light": (2.32, 13.12),
}

_DB_PER_NEPER = 4.343


@dataclass(frozen=True)
class FogParams:
    """Fog statistics for a link of length ``l`` kilometres."""

    k: float
    beta: float
    l: float

    def __post_init__(self) -> None:
        for name in ("k", "beta", "l"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"fog parameter {name} must be positive, got {value}")

    @property
    def z(self) -> float:
        """Rate of the optical-depth Gamma law."""
        return _DB_PER_NEPER / (self.beta * self.l)


def fog_preset(name: str, l: float) -> FogParams:
    """Return the tabulated fog parameters for ``name`` at link length ``l`` km."""
    try:
        k, beta = FOG_PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(FOG_PRESETS))
        raise DomainError(f"unknown fog preset {name!r}; expected one of {known}") from None
    return FogParams(k=k, beta=beta, l=l)


def _as_unit_interval(ia):
    arr = np.asarray(ia, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(arr > 1.0):
        raise DomainError("fog transmittance must lie in (0, 1]")
    return arr


def fog_pdf(p: FogParams, ia):
    """Density of the fog transmittance at ``ia`` (scalar or array)."""
    arr = _as_unit_interval(ia)
    k, z = p.k, p.z
    depth = -np.log(arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_f = (k * math.log(z) - math.lgamma(k)
                 + special.xlogy(k - 1.0, depth) + (z - 1.0) * np.log(arr))
        out = np.exp(log_f)
    if k < 1.0:
        out = np.where(depth == 0.0, np.inf, out)
    return float(out) if out.ndim == 0 else out


def fog_cdf(p: FogParams, ia):
    """``P(Ia <= ia)``, the regularised upper incomplete gamma of ``z ln(1/ia)``."""
    arr = _as_unit_interval(ia)
    out = special.gammaincc(p.k, -p.z * np.log(arr))
    return float(out) if np.ndim(out) == 0 else out


def fog_mean(p: FogParams) -> float:
    """Mean transmittance ``(z / (z + 1))**k``."""
    z = p.z
    return math.exp(-p.k * math.log1p(1.0 / z))


def fog_sample(p: FogParams, rng: np.random.Generator, size=None):
    """Draw fog transmittances ``exp(-T)`` with ``T ~ Gamma(k, rate z)``.

    numpy's gamma generator (Marsaglia-Tsang squeeze with the shape boost
    for ``k < 1``) is valid for every positive shape.
    """
    depth = rng.gamma(p.k, 1.0 / p.z, size=size)
    return np.exp(-depth)
