"""Composite fog and pointing-error channel statistics.

The received irradiance is ``I = Ia * Ip``. Writing ``Y = ln(A0 / I)``,
``Y`` is the sum of the fog optical depth (Gamma with shape ``k`` and
rate ``z``) and the pointing log-loss ``W = ln(A0 / Ip)`` whose density
is ``xi * exp(-a w) * I0(b w)``. Every density here is evaluated through
the double series for the density of ``Y``::

    f_Y(y) = 2 z^k xi / Gamma(k) * exp(-z y) * y^(k-1) * (y/2)
             * sum_m (b y/2)^(2m) / (m!)^2 * G_(2m)(-varpi y/2)

    G_j(c) = sum_n C(k-1, n) (-1)^n K_(j+n)(c),   K_j(c) = int_0^1 u^j e^(-c u) du

with ``varpi = 2 z - (1 + q^2) xi / q``. ``K_j(c) c^(j+1) / j!`` is the
regularised lower incomplete gamma function, so each term is the
incomplete-gamma term of the binomially expanded series written in a
scale-free form. The SNR is ``gamma = mu (I / E[I])^r`` with ``r = 1``
for heterodyne and ``r = 2`` for intensity-modulation direct detection,
so ``Y = ln(gamma_max / gamma) / r``.

Two CDF paths exist. For integer ``k`` the outer integral has a closed
form (a hypergeometric term minus a finite sum of incomplete gamma
functions). Any ``k`` can use adaptive quadrature of the series density.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError
from .fog import FogParams, fog_mean, fog_pdf
from .pointing import DerivedPointing, ip_mean
from .quadrature import integrate
from .specfun import SeriesControl, hyp2f1

__all__ = [
    "Detection",
    "ChannelModel",
    "PathFloat",
    "composite_irradiance_pdf",
    "irradiance_bin_probabilities",
    "log_loss_pdf",
    "snr_pdf",
    "snr_cdf",
    "snr_pdf_fog_only",
    "snr_cdf_fog_only",
    "effective_avg_snr_db",
    "scaled_avg_snr_db",
    "mean_log_loss",
    "db_to_linear",
    "linear_to_db",
]

_EPS = 2.0**-53
_M_CHUNK = 24
# give up on the binomial series when it cancels by more than this factor
_MAX_CANCELLATION = 1e6
# mass beyond the tail cut of Y
_TAIL_MASS = 1e-16


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


class Detection(enum.IntEnum):
    """Detection technique; the value is the SNR exponent ``r``."""

    HD = 1
    IMDD = 2

    @classmethod
    def parse(cls, text: str) -> "Detection":
        key = text.strip().lower().replace("/", "").replace("-", "")
        if key in ("hd", "heterodyne", "1"):
            return cls.HD
        if key in ("imdd", "im", "2"):
            return cls.IMDD
        raise DomainError(f"unknown detection mode {text!r}; expected 'hd' or 'imdd'")


class PathFloat(float):
    """A float tagged with the evaluation path that produced it."""

    path: str

    def __new__(cls, value: float, path: str) -> "PathFloat":
        obj = super().__new__(cls, value)
        obj.path = path
        return obj

    def __repr__(self) -> str:
        return f"PathFloat({float(self)!r}, path={self.path!r})"

    def __reduce__(self):
        return (PathFloat, (float(self), self.path))


@dataclass(frozen=True)
class ChannelModel:
    """Composite channel with average electrical SNR ``mu`` (linear)."""

    fog: FogParams
    pointing: DerivedPointing
    r: Detection
    mu: float
    series: SeriesControl = field(default_factory=SeriesControl)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and self.mu > 0.0):
            raise DomainError(f"mu must be positive, got {self.mu}")
        object.__setattr__(self, "r", Detection(int(self.r)))

    @classmethod
    def from_db(cls, fog: FogParams, pointing: DerivedPointing, r, mu_db: float,
                series: SeriesControl | None = None) -> "ChannelModel":
        return cls(fog, pointing, Detection(int(r)), db_to_linear(mu_db),
                   series if series is not None else SeriesControl())

    def with_mu_db(self, mu_db: float) -> "ChannelModel":
        return replace(self, mu=db_to_linear(mu_db))

    @property
    def k(self) -> float:
        return self.fog.k

    @property
    def z(self) -> float:
        return self.fog.z

    @property
    def varpi(self) -> float:
        d = self.pointing
        return 2.0 * self.fog.z - (1.0 + d.q**2) * d.xi / d.q

    @property
    def mean_irradiance(self) -> float:
        return fog_mean(self.fog) * ip_mean(self.pointing)

    @property
    def mean_ratio(self) -> float:
        """``E[I] / A0``."""
        d = self.pointing
        return fog_mean(self.fog) * d.xi / math.sqrt((1.0 + d.q * d.xi) * (1.0 + d.xi / d.q))

    @property
    def gamma_max(self) -> float:
        return self.mu / self.mean_ratio ** int(self.r)

    @property
    def integer_k(self) -> bool:
        return float(self.fog.k).is_integer()

    def log_loss(self, gamma) -> np.ndarray:
        """``Y = ln(gamma_max / gamma) / r`` for SNR values ``gamma``."""
        g = np.asarray(gamma, dtype=float)
        return (math.log(self.gamma_max) - np.log(g)) / int(self.r)

    def snr_at(self, y) -> np.ndarray:
        return self.gamma_max * np.exp(-int(self.r) * np.asarray(y, dtype=float))


# ---------------------------------------------------------------------------
# building blocks


def _log_unit_moments(c: float, jmax: int) -> np.ndarray:
    """``log int_0^1 u^j exp(-c u) du`` for ``j = 0..jmax``."""
    j = np.arange(jmax + 1, dtype=float)
    if c == 0.0:
        return -np.log1p(j)
    out = np.empty(jmax + 1)
    if c > 0.0:
        low = j + 1.0 <= c
        if low.any():
            a = j[low] + 1.0
            out[low] = special.gammaln(a) - a * math.log(c) + np.log(special.gammainc(a, c))
        high = ~low
        if high.any():
            # exp(-c) * sum_n c^n / ((j+1)(j+2)...(j+1+n)), ratios below one
            jj = j[high]
            term = 1.0 / (jj + 1.0)
            total = term.copy()
            for n in range(1, 100_000):
                term = term * (c / (jj + 1.0 + n))
                total += term
                if np.all(term <= _EPS * total):
                    break
            out[high] = -c + np.log(total)
        return out
    d = -c
    # sum_n d^n / (n! (j+n+1)) written with Poisson weights exp(-d) d^n / n!
    nmax = int(d + 12.0 * math.sqrt(d) + 40.0)
    n = np.arange(nmax + 1, dtype=float)
    weights = np.exp(n * math.log(d) - special.gammaln(n + 1.0) - d)
    total = (weights[None, :] / (j[:, None] + n[None, :] + 1.0)).sum(axis=1)
    return d + np.log(total)


def _binomial_weights(k: float, count: int) -> np.ndarray:
    """``(-1)^n C(k-1, n)`` for ``n < count`` (exactly zero past ``k-1`` for integer k)."""
    n = np.arange(count - 1, dtype=float)
    ratios = (n - (k - 1.0)) / (n + 1.0)
    return np.concatenate([[1.0], np.cumprod(ratios)])


def _log_inner_kummer(js: np.ndarray, c: float, k: float) -> np.ndarray:
    """``log G_j(c)`` from the confluent hypergeometric closed form.

    ``G_j(c) = B(j+1, k) exp(-c) 1F1(k; j+1+k; c)`` for ``c >= 0`` and
    ``B(j+1, k) 1F1(j+1; j+1+k; -c)`` otherwise; both series have
    positive terms.
    """
    js = np.asarray(js, dtype=float)
    log_beta = special.gammaln(js + 1.0) + math.lgamma(k) - special.gammaln(js + 1.0 + k)
    d = abs(c)
    top = np.full_like(js, k) if c >= 0.0 else js + 1.0
    bottom = js + 1.0 + k
    log_term = np.full_like(js, -d)
    total = np.exp(log_term)
    cap = int(d + 40.0 * math.sqrt(d) + 400.0)
    if d > 0.0:
        log_d = math.log(d)
        for i in range(cap):
            log_term = log_term + np.log(top + i) + log_d - np.log(bottom + i) - math.log(i + 1.0)
            term = np.exp(log_term)
            total += term
            if i > d and np.all(term <= _EPS * total):
                break
        else:
            raise ConvergenceError("confluent series for the binomial sum did not converge")
    shift = 0.0 if c >= 0.0 else d
    return log_beta + np.log(total) + shift


def _log_inner(log_k: np.ndarray, js: np.ndarray, c: float, k: float,
               weights: np.ndarray, ctrl: SeriesControl) -> np.ndarray:
    """``log G_j(c)`` from the binomially expanded series, with a closed-form fallback."""
    count = weights.size
    idx = js[:, None] + np.arange(count)[None, :]
    ratios = np.exp(log_k[idx] - log_k[js][:, None])
    terms = weights[None, :] * ratios
    total = terms.sum(axis=1)
    magnitude = np.abs(terms).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = (total > 0.0) & (magnitude <= _MAX_CANCELLATION * total)
        if not float(k).is_integer():
            # terms decay like n^-(k+1), so the tail is about |t_N| N / k
            tail = np.abs(terms[:, -1]) * count / k
            ok &= tail <= ctrl.abs_tol * total
    out = np.empty(js.size)
    out[ok] = log_k[js[ok]] + np.log(total[ok])
    if not ok.all():
        out[~ok] = _log_inner_kummer(js[~ok], c, k)
    return out


def _log_density_y_point(m: ChannelModel, y: float) -> float:
    if y <= 0.0:
        return -math.inf
    ctrl = m.series
    k, z = m.fog.k, m.fog.z
    d = m.pointing
    half = 0.5 * y
    c = -m.varpi * half
    bb = d.bessel_rate * half
    count = int(k) if float(k).is_integer() else ctrl.max_terms
    weights = _binomial_weights(k, max(count, 1))
    log_prefactor = (math.log(2.0) + k * math.log(z) + math.log(d.xi) - math.lgamma(k)
                     - z * y + (k - 1.0) * math.log(y) + math.log(half))

    jmax = 2 * _M_CHUNK + weights.size
    log_k = _log_unit_moments(c, jmax)
    log_bb = math.log(bb) if bb > 0.0 else -math.inf
    log_tol = math.log(ctrl.abs_tol)
    acc = -math.inf
    prev = -math.inf
    m0 = 0
    while True:
        ms = np.arange(m0, min(m0 + _M_CHUNK, ctrl.max_terms))
        if ms.size == 0:
            raise ConvergenceError(
                f"density series in m did not converge within {ctrl.max_terms} terms at y={y:g}")
        js = 2 * ms
        need = int(js[-1]) + weights.size
        if need > jmax:
            jmax = max(need, 2 * jmax)
            log_k = _log_unit_moments(c, jmax)
        log_g = _log_inner(log_k, js, c, k, weights, ctrl)
        with np.errstate(invalid="ignore"):
            log_terms = np.where(ms == 0, 0.0, 2.0 * ms * log_bb) - 2.0 * special.gammaln(ms + 1.0) + log_g
        if bb == 0.0:
            return log_prefactor + float(log_terms[0])
        for lt in log_terms:
            acc = np.logaddexp(acc, lt)
            if lt < prev and lt < acc + log_tol:
                return log_prefactor + float(acc)
            prev = lt
        m0 += _M_CHUNK


def log_loss_pdf(m: ChannelModel, y):
    """Density of the log-loss ``Y = ln(A0 / I)`` (scalar or array)."""
    arr = np.asarray(y, dtype=float)
    flat = np.array([math.exp(_log_density_y_point(m, float(v))) for v in arr.ravel()])
    out = flat.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def _tail_cut(m: ChannelModel) -> float:
    """A value of ``Y`` beyond which less than ``1e-16`` of the mass lies."""
    k, z = m.fog.k, m.fog.z
    rate = m.pointing.q * m.pointing.xi  # P(W > w) <= exp(-q xi w)

    def tail(y: float) -> float:
        return float(special.gammaincc(k, 0.5 * z * y)) + math.exp(-0.5 * rate * y)

    hi = 2.0 * (k / z + 1.0 / rate) + 1.0
    while tail(hi) > _TAIL_MASS:
        hi *= 1.5
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if tail(mid) > _TAIL_MASS:
            lo = mid
        else:
            hi = mid
    return hi


def _mode_hint(m: ChannelModel) -> float:
    k, z = m.fog.k, m.fog.z
    return max(k - 1.0, 0.0) / z + 1.0 / (m.pointing.q * m.pointing.xi)


def _y_integral(m: ChannelModel, y1: float, y2: float, weight=None) -> float:
    """``int_{y1}^{y2} w(y) f_Y(y) dy`` by adaptive quadrature."""
    cut = _tail_cut(m)
    y2 = min(y2, cut)
    if y2 <= y1:
        return 0.0

    def integrand(ys: np.ndarray) -> np.ndarray:
        vals = log_loss_pdf(m, ys)
        return vals if weight is None else vals * weight(ys)

    hint = _mode_hint(m)
    points = tuple(p for p in (0.5 * hint, hint, 2.0 * hint, 4.0 * hint) if y1 < p < y2)
    value, _ = integrate(integrand, y1, y2, epsabs=1e-14, epsrel=1e-11, limit=2000,
                         breakpoints=points)
    return value


# ---------------------------------------------------------------------------
# densities


def composite_irradiance_pdf(m: ChannelModel, I):
    """Density of the received irradiance on ``(0, A0]``."""
    arr = np.asarray(I, dtype=float)
    a0 = m.pointing.A0
    if np.any(~(arr > 0.0)) or np.any(arr > a0 * (1.0 + 1e-15)):
        raise DomainError("irradiance must lie in (0, A0]")
    y = np.maximum(math.log(a0) - np.log(arr), 0.0)
    out = log_loss_pdf(m, y) / arr
    return float(out) if np.ndim(out) == 0 else out


def irradiance_bin_probabilities(m: ChannelModel, edges) -> np.ndarray:
    """Probability of each irradiance bin ``[edges[i], edges[i+1]]``.

    Edges must be increasing and lie in ``[0, A0]``; a zero edge maps to
    the tail cut of ``Y``.
    """
    edges = np.asarray(edges, dtype=float)
    a0 = m.pointing.A0
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0.0):
        raise DomainError("bin edges must be an increasing sequence")
    if edges[0] < 0.0 or edges[-1] > a0 * (1.0 + 1e-15):
        raise DomainError("bin edges must lie in [0, A0]")
    with np.errstate(divide="ignore"):
        ys = np.maximum(np.log(a0 / edges), 0.0)
    return np.array([_y_integral(m, float(lo), float(hi)) for hi, lo in zip(ys, ys[1:])])


def snr_pdf(m: ChannelModel, gamma):
    """Density of the instantaneous SNR on ``(0, gamma_max]``."""
    arr = np.asarray(gamma, dtype=float)
    gmax = m.gamma_max
    if np.any(~(arr > 0.0)) or np.any(arr > gmax * (1.0 + 1e-12)):
        raise DomainError("SNR outside the support (0, gamma_max]")
    y = np.maximum(m.log_loss(arr), 0.0)
    out = log_loss_pdf(m, y) / (int(m.r) * arr)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# closed form for integer k


def _hyp_term(k_int: int, mm: int, n: int, x: float) -> float:
    # 2F1(1, k+2m+1; 2m+n+2; x); the Pfaff map keeps the argument inside (-1, 1)
    a2, c2 = k_int + 2 * mm + 1.0, 2 * mm + n + 2.0
    if x <= -0.5:
        return hyp2f1(1.0, c2 - a2, c2, x / (x - 1.0)) / (1.0 - x)
    return hyp2f1(1.0, a2, c2, x)


def _closed_moment_sum(m: ChannelModel, d: float, rate: float, with_full: bool) -> float:
    """Closed-form ``int_d^inf`` (``with_full``) or ``int_0^d`` of ``exp(-(rate-z) y) f_Y``.

    With ``with_full`` the result is ``P(Y >= d)`` and ``rate`` must equal
    ``z``. Otherwise returns ``int_0^d exp(-(rate - z) y) f_Y(y) dy``.
    """
    ctrl = m.series
    k_int = int(m.fog.k)
    z = m.fog.z
    pt = m.pointing
    b = -0.5 * m.varpi
    bz = b + rate
    bq = pt.bessel_rate
    log_pref = math.log(2.0) + k_int * math.log(z) + math.log(pt.xi) - math.lgamma(k_int)
    x_hyp = b / (b + z)
    binom = [math.comb(k_int - 1, n) * (-1) ** n for n in range(k_int)]

    if d > 0.0:
        log_d = math.log(d)
        jmax = 2 * _M_CHUNK + 2 * k_int + 2
        log_k1 = _log_unit_moments(bz * d, jmax)
        log_k2 = _log_unit_moments(b * d, jmax)
        exp_cd = math.exp(-rate * d)

    total = 0.0
    log_tol = math.log(ctrl.abs_tol)
    prev = math.inf
    for mm in range(ctrl.max_terms):
        if mm > 0 and bq == 0.0:
            break
        log_coef = (2 * mm * math.log(0.5 * bq) if mm > 0 else 0.0) - 2.0 * math.lgamma(mm + 1.0) - math.log(2.0)
        block = 0.0
        for n in range(k_int):
            a = 2 * mm + n + 1
            p = k_int - 1 - n
            part = 0.0
            if with_full:
                log_full = math.lgamma(k_int + 2 * mm + 1.0) - math.log(a) - (k_int + 2 * mm + 1.0) * math.log(b + z)
                part += math.exp(log_coef + log_full) * _hyp_term(k_int, mm, n, x_hyp)
            if d > 0.0:
                if a + p + 1 > jmax:
                    jmax = 2 * (a + p + 1)
                    log_k1 = _log_unit_moments(bz * d, jmax)
                    log_k2 = _log_unit_moments(b * d, jmax)
                inner = 0.0
                for i in range(p + 1):
                    log_w = math.lgamma(p + 1.0) - math.lgamma(i + 1.0) - (p - i + 1) * math.log(rate)
                    lead = log_coef + log_w + (a + i) * log_d
                    inner += math.exp(lead + log_k1[a + i - 1]) - exp_cd * math.exp(lead + log_k2[a - 1])
                part = part - inner if with_full else inner
            block += binom[n] * part
        total += block
        mag = abs(block)
        if mm > 0 and (mag == 0.0 or (mag < prev and math.log(mag) < log_tol + math.log(abs(total) + 1e-300))):
            break
        prev = mag
    else:
        raise ConvergenceError(f"closed-form series did not converge within {ctrl.max_terms} terms")
    return math.exp(log_pref) * total


def _check_x(x: float) -> None:
    if not (x > 0.0) or math.isnan(x):
        raise DomainError(f"SNR threshold must be positive, got {x}")


def snr_cdf(m: ChannelModel, x: float, method: str = "auto") -> PathFloat:
    """``P(gamma <= x)``, tagged ``"closed"`` or ``"quadrature"``.

    ``method="auto"`` uses the closed form when ``k`` is an integer and
    adaptive quadrature of the series density otherwise.
    """
    _check_x(x)
    path = _choose_path(m, method)
    if x >= m.gamma_max:
        return PathFloat(1.0, path)
    y = float(m.log_loss(x))
    if path == "closed":
        value = _closed_moment_sum(m, y, m.fog.z, with_full=True)
    else:
        value = _y_integral(m, y, math.inf)
    return PathFloat(min(max(value, 0.0), 1.0), path)


def _choose_path(m: ChannelModel, method: str) -> str:
    if method not in ("auto", "closed", "quadrature"):
        raise DomainError(f"unknown evaluation method {method!r}")
    if method == "closed" and not m.integer_k:
        raise DomainError("the closed-form path requires an integer fog shape k")
    if method == "auto":
        return "closed" if m.integer_k else "quadrature"
    return method


# ---------------------------------------------------------------------------
# fog-only limit


def _fog_only_gamma_max(m: ChannelModel) -> float:
    return m.mu / fog_mean(m.fog) ** int(m.r)


def snr_pdf_fog_only(m: ChannelModel, gamma):
    """SNR density when the pointing error is negligible.

    With ``Ip = A0`` the SNR is ``mu (Ia / E[Ia])^r`` on
    ``(0, mu / E[Ia]^r]``.
    """
    arr = np.asarray(gamma, dtype=float)
    gmax = _fog_only_gamma_max(m)
    if np.any(~(arr > 0.0)) or np.any(arr > gmax * (1.0 + 1e-12)):
        raise DomainError("SNR outside the fog-only support")
    r = int(m.r)
    ia = np.minimum(fog_mean(m.fog) * (arr / m.mu) ** (1.0 / r), 1.0)
    out = fog_pdf(m.fog, ia) * ia / (r * arr)
    return float(out) if np.ndim(out) == 0 else out


def snr_cdf_fog_only(m: ChannelModel, x: float) -> float:
    _check_x(x)
    gmax = _fog_only_gamma_max(m)
    if x >= gmax:
        return 1.0
    depth = math.log(gmax / x) / int(m.r)
    return float(special.gammaincc(m.fog.k, m.fog.z * depth))


# ---------------------------------------------------------------------------
# average SNR summaries


def mean_log_loss(m: ChannelModel) -> float:
    """``E[Y] = k/z + (1 + q^2) / (2 q xi)``."""
    d = m.pointing
    return m.fog.k / m.fog.z + (1.0 + d.q**2) / (2.0 * d.q * d.xi)


def effective_avg_snr_db(m: ChannelModel, gamma_ref_db: float = 7.1) -> float:
    """Mean SNR in dB over beams whose SNR clears ``gamma_ref_db``.

    The default reference is the lowest code threshold of the default
    ACM table, i.e. the mean over beams that can carry data.
    """
    gmax_db = linear_to_db(m.gamma_max)
    y_ref = (gmax_db - gamma_ref_db) * math.log(10.0) / (10.0 * int(m.r))
    if y_ref <= 0.0:
        raise DomainError("reference SNR is above gamma_max; no beam qualifies")
    if y_ref >= _tail_cut(m):
        mean_y = mean_log_loss(m)
    else:
        mass = _y_integral(m, 0.0, y_ref)
        if mass <= 0.0:
            raise DomainError("no probability mass above the reference SNR")
        mean_y = _y_integral(m, 0.0, y_ref, weight=lambda ys: ys) / mass
    return gmax_db - 10.0 * int(m.r) * mean_y / math.log(10.0)


def scaled_avg_snr_db(m: ChannelModel) -> float:
    """``mu`` scaled by the normalised mean channel gain ``(E[I] / A0)^r``, in dB."""
    return linear_to_db(m.mu * m.mean_ratio ** int(m.r))
