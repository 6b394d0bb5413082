"""Pointing error between two moving platforms.

Platform motion perturbs the transmitter position ``(x, y, z)`` and the
beam angles ``(theta, phi)`` around their means. Linearising the beam
footprint on the receiver plane gives a zero-mean bivariate Gaussian
displacement whose radial part is Hoyt distributed. The collected power
fraction then follows from the Gaussian beam overlap with the lens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SingularGeometryError
from .specfun import bessel_i0e, erf

__all__ = [
    "PointingGeometry",
    "DerivedPointing",
    "derive_pointing",
    "ip_pdf",
    "ip_mean",
    "ip_map",
    "hoyt_sample",
    "geometric_sample",
]

# standard deviations of (x, y, z) in units of sigma * r0 and of
# (theta, phi) in units of sigma * r0 / L
_POSITION_SPREAD = (0.8, 0.27, 0.53)
_ANGLE_SPREAD = (0.44, 0.9)
_SINGULAR = 1e-12
_MAX_RETRIES = 10


@dataclass(frozen=True)
class PointingGeometry:
    """Link geometry and platform fluctuation scale.

    Attributes
    ----------
    L : float
        Link distance in metres.
    alpha_d, beta_d : float
        Azimuth and polar angle of the transmitter as seen from the
        receiver, in radians.
    sigma : float
        Dimensionless fluctuation scale.
    r0 : float
        Receiver lens radius in metres.
    wL : float
        Beam width at distance ``L`` in metres.
    """

    L: float
    alpha_d: float
    beta_d: float
    sigma: float
    r0: float
    wL: float

    def __post_init__(self) -> None:
        for name in ("L", "r0", "wL"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be positive, got {value}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")
        if not 0.0 < self.beta_d < math.pi:
            raise DomainError(f"beta_d must lie in (0, pi), got {self.beta_d}")

    @property
    def mean_position(self) -> tuple[float, float, float]:
        sb = math.sin(self.beta_d)
        return (self.L * sb * math.cos(self.alpha_d),
                self.L * sb * math.sin(self.alpha_d),
                self.L * math.cos(self.beta_d))

    @property
    def sigmas(self) -> tuple[float, float, float, float, float]:
        """Standard deviations of ``(x, y, z, theta, phi)``."""
        s = self.sigma * self.r0
        sa = s / self.L
        return (s * _POSITION_SPREAD[0], s * _POSITION_SPREAD[1], s * _POSITION_SPREAD[2],
                sa * _ANGLE_SPREAD[0], sa * _ANGLE_SPREAD[1])


@dataclass(frozen=True)
class DerivedPointing:
    """Scenario constants of the pointing-error model."""

    mu_r: tuple[float, float, float]
    sigmas: tuple[float, float, float, float, float]
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    Sigma_IG: tuple[tuple[float, float], tuple[float, float]]
    lambda1: float
    lambda2: float
    q: float
    Omega: float
    v1: float
    v2: float
    t1: float
    t2: float
    t: float
    A0: float
    xi: float
    wL: float
    geometry: PointingGeometry | None = field(default=None, compare=False)

    @property
    def exponent(self) -> float:
        """Power of ``ip/A0`` in the density, ``(1+q^2) xi / (2q)``."""
        return (1.0 + self.q**2) * self.xi / (2.0 * self.q)

    @property
    def bessel_rate(self) -> float:
        """Bessel argument per unit log-attenuation, ``(1-q^2) xi / (2q)``."""
        return (1.0 - self.q**2) * self.xi / (2.0 * self.q)


def _symmetric_eigenvalues(s11: float, s12: float, s22: float) -> tuple[float, float]:
    half_trace = 0.5 * (s11 + s22)
    radius = math.hypot(0.5 * (s11 - s22), s12)
    large = half_trace + radius
    det = s11 * s22 - s12 * s12
    # the small root from the determinant avoids cancellation
    small = det / large if large > 0.0 else 0.0
    return large, max(small, 0.0)


def _collection_factor(v: float, geometric: float) -> float:
    return math.sqrt(math.pi) * erf(v) / (2.0 * v * math.exp(-v * v) * geometric)


def derive_pointing(g: PointingGeometry) -> DerivedPointing:
    """Derive the Hoyt parameters, collection constants and jitter of ``g``.

    The angles are evaluated at their means, which coincide with the
    boresight angles because the beam is aimed at the lens centre.
    """
    mu_theta = g.alpha_d
    mu_phi = g.beta_d
    cos_t = math.cos(mu_theta)
    sin_p = math.sin(mu_phi)
    if abs(cos_t) < _SINGULAR or abs(sin_p) < _SINGULAR:
        raise SingularGeometryError(
            "footprint linearisation is singular for cos(alpha_d) = 0 or sin(beta_d) = 0")
    if not g.sigma > 0.0:
        raise DomainError("sigma must be positive to define a finite jitter")
    mu_x, mu_y, mu_z = g.mean_position
    sx, sy, sz, st, sp = g.sigmas
    tan_t = math.tan(mu_theta)
    cot_p = math.cos(mu_phi) / sin_p

    c1 = -tan_t
    c2 = -mu_x / cos_t**2
    c3 = -mu_x / (sin_p**2 * cos_t)
    c4 = -mu_x * cot_p * tan_t / cos_t
    c5 = -cot_p / cos_t

    s11 = sy**2 + c1**2 * sx**2 + c2**2 * st**2
    s12 = c1 * c5 * sx**2 + c2 * c4 * st**2
    s22 = sz**2 + c3**2 * sp**2 + c4**2 * st**2 + c5**2 * sx**2
    lam1, lam2 = _symmetric_eigenvalues(s11, s12, s22)
    q = math.sqrt(lam2 / lam1)
    if q == 0.0:
        raise DomainError("degenerate displacement covariance (q = 0)")
    omega = lam1 + lam2

    v1 = g.r0 / g.wL * math.sqrt(math.pi / 2.0)
    proj = abs(sin_p * cos_t)
    v2 = v1 * proj
    t1 = _collection_factor(v1, 1.0)
    t2 = _collection_factor(v2, proj**2)
    t = 0.5 * (t1 + t2)
    a0 = erf(v1) * erf(v2)
    xi = (1.0 + q * q) * t * g.wL**2 / (4.0 * q * omega)
    return DerivedPointing(
        mu_r=(mu_x, mu_y, mu_z),
        sigmas=(sx, sy, sz, st, sp),
        c1=c1, c2=c2, c3=c3, c4=c4, c5=c5,
        Sigma_IG=((s11, s12), (s12, s22)),
        lambda1=lam1, lambda2=lam2, q=q, Omega=omega,
        v1=v1, v2=v2, t1=t1, t2=t2, t=t, A0=a0, xi=xi, wL=g.wL,
        geometry=g,
    )


_i0e = np.vectorize(bessel_i0e, otypes=[float])


def ip_pdf(d: DerivedPointing, ip):
    """Density of the collected power fraction on ``(0, A0]``."""
    arr = np.asarray(ip, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(arr > d.A0 * (1.0 + 1e-15)):
        raise DomainError("collected power fraction must lie in (0, A0]")
    w = np.maximum(math.log(d.A0) - np.log(arr), 0.0)
    b = d.bessel_rate
    # (ip/A0)^(e-1) I0(b w) = exp(-(e - 1 - b) w) * i0e(b w), e - b = q xi
    log_f = math.log(d.xi / d.A0) - (d.q * d.xi - 1.0) * w
    out = np.exp(log_f) * _i0e(b * w)
    return float(out) if out.ndim == 0 else out


def ip_mean(d: DerivedPointing) -> float:
    """Mean collected power fraction ``A0 xi / sqrt((1 + q xi)(1 + xi/q))``."""
    return d.A0 * d.xi / math.sqrt((1.0 + d.q * d.xi) * (1.0 + d.xi / d.q))


def ip_map(d: DerivedPointing, s):
    """Collected power fraction for a radial displacement ``s`` in metres."""
    s = np.asarray(s, dtype=float)
    out = d.A0 * np.exp(-2.0 * s * s / (d.t * d.wL**2))
    return float(out) if out.ndim == 0 else out


def hoyt_sample(d: DerivedPointing, rng: np.random.Generator, size=None):
    """Radial displacement from independent Gaussians with variances ``lambda1, lambda2``."""
    u1 = rng.normal(0.0, math.sqrt(d.lambda1), size=size)
    u2 = rng.normal(0.0, math.sqrt(d.lambda2), size=size)
    return np.hypot(u1, u2)


def _footprint(x, y, z, theta, phi):
    cos_t = np.cos(theta)
    by = y - x * np.tan(theta)
    bz = z - x * (np.cos(phi) / np.sin(phi)) / cos_t
    return by, bz


def geometric_sample(g: PointingGeometry, rng: np.random.Generator, size=None):
    """Radial displacement of the exact footprint centre from its mean.

    Draws that land within ``1e-12`` of a ``tan``/``cot`` singularity are
    redrawn, at most ten times.
    """
    shape = () if size is None else size
    mx, my, mz = g.mean_position
    sx, sy, sz, st, sp = g.sigmas

    def draw(n_shape):
        return (rng.normal(mx, sx, n_shape), rng.normal(my, sy, n_shape),
                rng.normal(mz, sz, n_shape), rng.normal(g.alpha_d, st, n_shape),
                rng.normal(g.beta_d, sp, n_shape))

    x, y, z, th, ph = (np.atleast_1d(v) for v in draw(shape))
    for _ in range(_MAX_RETRIES):
        bad = (np.abs(np.cos(th)) < _SINGULAR) | (np.abs(np.sin(ph)) < _SINGULAR)
        if not bad.any():
            break
        nb = int(bad.sum())
        x[bad], y[bad], z[bad], th[bad], ph[bad] = draw(nb)
    else:
        raise SingularGeometryError("could not avoid a singular pointing draw")
    by0, bz0 = _footprint(mx, my, mz, g.alpha_d, g.beta_d)
    by, bz = _footprint(x, y, z, th, ph)
    s = np.hypot(by - by0, bz - bz0)
    return float(s[0]) if size is None else s.reshape(shape)
