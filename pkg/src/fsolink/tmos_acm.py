"""Threshold-based beam selection and adaptive coded modulation.

A beam is selected when its SNR clears ``gamma_T``, so the SNR of a
selected beam follows the composite density truncated to
``[gamma_T, gamma_max]``. The ACM table splits that support into code
regions ``[gamma_T_u, gamma_T_(u+1))``; the top code keeps everything up
to ``gamma_max``. Regions below ``gamma_T`` are clipped away.

All integrals run in the log-loss variable ``y = ln(gamma_max / gamma) / r``
where the region boundaries become a sorted partition of ``[0, y_T]``.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .composite import (
    ChannelModel,
    PathFloat,
    _choose_path,
    _closed_moment_sum,
    _fog_only_gamma_max,
    _y_integral,
    db_to_linear,
    snr_pdf,
)
from .errors import DegenerateTruncationError, DomainError
from .quadrature import integrate

__all__ = [
    "AcmCode",
    "AcmCodeTable",
    "TmosConfig",
    "tmos_pdf",
    "selection_probability",
    "outage_probability",
    "ansb",
    "region_probabilities",
    "ase",
    "system_ase",
    "code_ber",
    "avg_ber",
    "avg_ber_fog_only",
    "tmos_summary",
]

_DEGENERATE = 1e-12
_EPS = 2.0**-53

# exp(-x) expanded in powers of x: stop, cap and growth guard
_L_TOL = 1e-10
_L_CAP = 60
_L_GROWTH = 20
# relative rounding the alternating sum may accumulate before it is rejected
_L_CANCELLATION = 1e-6
# with x = b gamma / M above this, 60 terms cannot reach the stop tolerance
_L_SCREEN = 20.0


@dataclass(frozen=True)
class AcmCode:
    """One row of the code table; ``BER(gamma) = a exp(-b gamma / M)``."""

    u: int
    M: int
    a: float
    b: float
    gamma_T_db: float

    @property
    def rate(self) -> float:
        return self.u + 0.5

    @property
    def gamma_T(self) -> float:
        return db_to_linear(self.gamma_T_db)

    def ber(self, gamma):
        return self.a * np.exp(-self.b * np.asarray(gamma, dtype=float) / self.M)


_DEFAULT_ROWS = (
    (1, 4, 896.0704, 10.7367, 7.1),
    (2, 8, 404.4353, 6.8043, 11.8),
    (3, 16, 996.5492, 8.7345, 14.0),
    (4, 32, 443.1272, 8.2282, 17.0),
    (5, 64, 296.6007, 7.9270, 20.1),
    (6, 128, 327.4874, 8.2036, 23.0),
    (7, 256, 404.2837, 7.8824, 26.2),
    (8, 512, 310.5283, 8.2425, 29.0),
)


@dataclass(frozen=True)
class AcmCodeTable:
    """Trellis-coded M-QAM codes ordered by switching threshold."""

    rows: tuple[AcmCode, ...]
    target_ber: float = 1e-3

    def __post_init__(self) -> None:
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        if not rows:
            raise DomainError("code table is empty")
        for i, row in enumerate(rows, start=1):
            if row.u != i:
                raise DomainError(f"code indices must run 1..N, found {row.u} at position {i}")
            if row.M != 2 ** (row.u + 1):
                raise DomainError(f"code {row.u}: constellation size must be {2 ** (row.u + 1)}")
            if not (row.a > 0.0 and row.b > 0.0):
                raise DomainError(f"code {row.u}: BER fit parameters must be positive")
        th = [row.gamma_T_db for row in rows]
        if any(b <= a for a, b in zip(th, th[1:])):
            raise DomainError("code thresholds must be strictly increasing")
        if not 0.0 < self.target_ber < 1.0:
            raise DomainError("target BER must lie in (0, 1)")

    @classmethod
    def default(cls) -> "AcmCodeTable":
        return cls(tuple(AcmCode(*row) for row in _DEFAULT_ROWS))

    @classmethod
    def from_csv(cls, path, target_ber: float = 1e-3) -> "AcmCodeTable":
        """Read columns ``u, M, a, b, gamma_T_db`` (header required)."""
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"u", "M", "a", "b", "gamma_T_db"} - set(reader.fieldnames or ())
            if missing:
                raise DomainError(f"{path}: missing columns {sorted(missing)}")
            for line, rec in enumerate(reader, start=2):
                try:
                    rows.append(AcmCode(int(rec["u"]), int(rec["M"]), float(rec["a"]),
                                        float(rec["b"]), float(rec["gamma_T_db"])))
                except (TypeError, ValueError) as exc:
                    raise DomainError(f"{path}:{line}: {exc}") from None
        return cls(tuple(rows), target_ber)

    @property
    def n_max(self) -> int:
        return len(self.rows)

    @property
    def thresholds(self) -> list[float]:
        """Linear switching thresholds."""
        return [row.gamma_T for row in self.rows]

    @property
    def rates(self) -> np.ndarray:
        return np.array([row.rate for row in self.rows])

    def region_count(self, gamma_max: float) -> int:
        """Number of thresholds at or below ``gamma_max`` (the index ``N``)."""
        return bisect.bisect_right(self.thresholds, gamma_max)

    def code_for(self, gamma):
        """Code index per SNR (0 below the first threshold); ties go up."""
        return np.searchsorted(self.thresholds, np.asarray(gamma, dtype=float), side="right")


@dataclass(frozen=True)
class TmosConfig:
    """Selection threshold, beam count and outage threshold (dB).

    The outage threshold defaults to the selection threshold.
    """

    gamma_T_db: float = 14.0
    H: int = 5
    gamma_TH_OUT_db: float | None = None

    def __post_init__(self) -> None:
        if self.gamma_TH_OUT_db is None:
            object.__setattr__(self, "gamma_TH_OUT_db", self.gamma_T_db)
        if int(self.H) != self.H or self.H < 1:
            raise DomainError(f"beam count must be a positive integer, got {self.H}")
        if not math.isfinite(self.gamma_T_db):
            raise DomainError("selection threshold must be finite")
        if self.gamma_TH_OUT_db < self.gamma_T_db:
            raise DomainError("outage threshold must not be below the selection threshold")

    @property
    def gamma_T(self) -> float:
        return db_to_linear(self.gamma_T_db)

    @property
    def gamma_TH_OUT(self) -> float:
        return db_to_linear(self.gamma_TH_OUT_db)


# ---------------------------------------------------------------------------
# masses over a partition of the log-loss axis


class _Masses:
    """``P(y_a <= Y <= y_b)`` with caching of the closed-form tail values."""

    def __init__(self, m: ChannelModel, path: str):
        self.m = m
        self.path = path
        self._tail: dict[float, float] = {}

    def tail(self, d: float) -> float:
        if d <= 0.0:
            return 1.0
        if d not in self._tail:
            self._tail[d] = _closed_moment_sum(self.m, d, self.m.fog.z, with_full=True)
        return self._tail[d]

    def between(self, ya: float, yb: float) -> float:
        if yb <= ya:
            return 0.0
        if self.path == "closed":
            return max(self.tail(ya) - self.tail(yb), 0.0)
        return _y_integral(self.m, ya, yb)

    def partition(self, ys) -> np.ndarray:
        return np.array([self.between(a, b) for a, b in zip(ys, ys[1:])])


def _y_of(m: ChannelModel, gamma: float) -> float:
    return max(math.log(m.gamma_max / gamma) / int(m.r), 0.0)


def _selection_limit(m: ChannelModel, c: TmosConfig) -> float:
    if c.gamma_T >= m.gamma_max:
        return 0.0
    return _y_of(m, c.gamma_T)


def _regions(gamma_max: float, r: int, c: TmosConfig, t: AcmCodeTable):
    """Non-empty code regions clipped to ``[gamma_T, gamma_max]`` as ``(index, y_lo, y_hi)``."""
    ths = t.thresholds
    n = t.region_count(gamma_max)
    out = []
    for i in range(n):
        lo = max(ths[i], c.gamma_T)
        hi = gamma_max if i == n - 1 else min(ths[i + 1], gamma_max)
        if lo < hi:
            out.append((i, math.log(gamma_max / hi) / r, math.log(gamma_max / lo) / r))
    return out


def _require_selection(mass: float) -> None:
    if mass < _DEGENERATE:
        raise DegenerateTruncationError(
            f"probability of clearing the selection threshold is {mass:.3g}; truncated law undefined")


def selection_probability(m: ChannelModel, c: TmosConfig, method: str = "auto") -> PathFloat:
    """``1 - F(gamma_T)``, the probability that one beam is selected."""
    path = _choose_path(m, method)
    y_t = _selection_limit(m, c)
    return PathFloat(min(_Masses(m, path).between(0.0, y_t), 1.0), path)


# ---------------------------------------------------------------------------
# selection statistics


def tmos_pdf(m: ChannelModel, c: TmosConfig, gamma, method: str = "auto"):
    """Density of the selected-beam SNR, zero outside ``[gamma_T, gamma_max]``."""
    sel = selection_probability(m, c, method)
    _require_selection(sel)
    arr = np.asarray(gamma, dtype=float)
    if np.any(~(arr > 0.0)):
        raise DomainError("SNR must be positive")
    inside = (arr >= c.gamma_T) & (arr <= m.gamma_max)
    out = np.zeros(arr.shape)
    if inside.any():
        out[inside] = np.asarray(snr_pdf(m, arr[inside])) / sel
    return float(out) if out.ndim == 0 else out


def outage_probability(m: ChannelModel, c: TmosConfig, method: str = "auto") -> PathFloat:
    """``(F(gamma_TH_OUT) - F(gamma_T)) / (1 - F(gamma_T))``."""
    gmax = m.gamma_max
    if c.gamma_TH_OUT > gmax * (1.0 + 1e-12):
        raise DomainError("outage threshold lies above gamma_max")
    path = _choose_path(m, method)
    masses = _Masses(m, path)
    y_t = _selection_limit(m, c)
    y_out = _y_of(m, min(c.gamma_TH_OUT, gmax))
    pieces = masses.partition([0.0, y_out, y_t])
    sel = pieces.sum()
    _require_selection(sel)
    return PathFloat(min(max(pieces[1] / sel, 0.0), 1.0), path)


def ansb(m: ChannelModel, c: TmosConfig, method: str = "auto") -> PathFloat:
    """Average number of selected beams ``H (1 - F(gamma_T))`` for i.i.d. beams."""
    sel = selection_probability(m, c, method)
    return PathFloat(c.H * sel, sel.path)


def _region_masses(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, path: str):
    regions = _regions(m.gamma_max, int(m.r), c, t)
    y_t = _selection_limit(m, c)
    cuts = sorted({0.0, y_t, *(y for _, lo, hi in regions for y in (lo, hi))})
    cuts = [y for y in cuts if y <= y_t]
    pieces = _Masses(m, path).partition(cuts)
    sel = float(pieces.sum())
    per_code = np.zeros(t.n_max)
    for i, lo, hi in regions:
        a, b = cuts.index(lo), cuts.index(hi)
        per_code[i] = pieces[a:b].sum()
    return regions, per_code, sel


def region_probabilities(m: ChannelModel, c: TmosConfig, t: AcmCodeTable,
                         method: str = "auto") -> np.ndarray:
    """Probability ``F_u`` that the selected beam uses code ``u``."""
    path = _choose_path(m, method)
    _, per_code, sel = _region_masses(m, c, t, path)
    _require_selection(sel)
    return per_code / sel


def ase(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, method: str = "auto") -> PathFloat:
    """Average spectral efficiency of a selected beam, ``sum_u R_u F_u``."""
    path = _choose_path(m, method)
    _, per_code, sel = _region_masses(m, c, t, path)
    _require_selection(sel)
    return PathFloat(float(np.dot(t.rates, per_code)) / sel, path)


def system_ase(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, method: str = "auto") -> PathFloat:
    """Sum rate over all selected beams, ``ANSB * ASE``; zero when no beam qualifies."""
    path = _choose_path(m, method)
    _, per_code, sel = _region_masses(m, c, t, path)
    if sel < _DEGENERATE:
        return PathFloat(0.0, path)
    # H * sel * (sum R_u per_code / sel)
    return PathFloat(c.H * float(np.dot(t.rates, per_code)), path)


# ---------------------------------------------------------------------------
# bit error rate


def code_ber(t: AcmCodeTable, u: int, gamma):
    """BER of code ``u`` at linear SNR ``gamma``."""
    if not 1 <= u <= t.n_max:
        raise DomainError(f"code index must lie in 1..{t.n_max}, got {u}")
    arr = np.asarray(gamma, dtype=float)
    if np.any(~(arr > 0.0)):
        raise DomainError("SNR must be positive")
    out = t.rows[u - 1].ber(arr)
    return float(out) if out.ndim == 0 else out


class _Unusable(Exception):
    """The power series cannot deliver the requested accuracy."""


def _exp_series(x: float, moment) -> float | None:
    """``sum_l (-x)^l / l! * value_l`` or None when the series is unusable.

    ``moment(l)`` returns ``(value_l, magnitude_l)`` where the magnitude
    bounds the quantities whose difference gave ``value_l``; it feeds the
    rounding-error guard.
    """
    if x > _L_SCREEN:
        return None
    total = 0.0
    rounding = 0.0
    growth = 0
    prev = 0.0
    log_x = math.log(x) if x > 0.0 else -math.inf
    try:
        for l in range(_L_CAP):
            value, magnitude = moment(l)
            coef = 1.0 if l == 0 else math.exp(l * log_x - math.lgamma(l + 1.0))
            term = (-1.0) ** l * coef * value
            total += term
            rounding += coef * (magnitude + abs(value))
            growth = growth + 1 if abs(total) > abs(prev) else 0
            if growth >= _L_GROWTH:
                return None
            prev = total
            if abs(term) <= _L_TOL * abs(total) and (l > 0 or value == 0.0):
                break
        else:
            return None
    except _Unusable:
        return None
    if rounding * _EPS > _L_CANCELLATION * abs(total):
        return None
    return total


def _ber_region_quadrature(m: ChannelModel, code: AcmCode, lo: float, hi: float) -> float:
    scale = code.b * m.gamma_max / code.M
    r = int(m.r)
    return _y_integral(m, lo, hi, weight=lambda ys: code.a * np.exp(-scale * np.exp(-r * ys)))


def _ber_region_closed(m: ChannelModel, code: AcmCode, lo: float, hi: float) -> float | None:
    """Closed-form region integral, expanding in powers of ``b gamma_max / M``.

    Each power integrates ``exp(-r l y) f_Y`` from zero to the region
    edges, so the edge values nearly cancel and their rounding is
    amplified by the full ``exp(b gamma_max / M)``.
    """
    r = int(m.r)
    z = m.fog.z
    x = code.b * m.gamma_max / code.M

    def moment(l: int):
        rate = z + r * l
        upper = _closed_moment_sum(m, hi, rate, with_full=False)
        lower = _closed_moment_sum(m, lo, rate, with_full=False)
        return max(upper - lower, 0.0), abs(upper) + abs(lower)

    total = _exp_series(x, moment)
    return None if total is None else code.a * total


def avg_ber(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, method: str = "auto") -> PathFloat:
    """Rate-weighted average BER of the selected beam.

    The closed path expands each code's exponential BER in powers of the
    SNR and integrates every power in closed form (integer ``k``). Codes
    whose series cannot converge within the term cap fall back to
    quadrature, and the result is then tagged ``"quadrature"``.
    """
    path = _choose_path(m, method)
    regions, per_code, sel = _region_masses(m, c, t, path)
    _require_selection(sel)
    weight = float(np.dot(t.rates, per_code))
    if weight <= 0.0:
        raise DegenerateTruncationError("no selected-beam mass falls in any code region")
    used = path
    errors = 0.0
    for i, lo, hi in regions:
        code = t.rows[i]
        value = None
        if path == "closed":
            value = _ber_region_closed(m, code, lo, hi)
            if value is None:
                used = "quadrature"
        if value is None:
            value = _ber_region_quadrature(m, code, lo, hi)
        errors += code.rate * value
    return PathFloat(errors / weight, used)


def avg_ber_fog_only(m: ChannelModel, c: TmosConfig, t: AcmCodeTable,
                     method: str = "auto") -> PathFloat:
    """Average BER when the pointing loss is negligible (``Ip = A0``).

    The SNR is ``mu (Ia / E[Ia])^r`` and the log-loss is the fog optical
    depth itself, so every power of the SNR integrates to a regularised
    lower incomplete gamma function for any ``k``. ``method`` is
    ``"auto"``/``"closed"`` (series with quadrature fallback) or
    ``"quadrature"``.
    """
    if method not in ("auto", "closed", "quadrature"):
        raise DomainError(f"unknown evaluation method {method!r}")
    k, z = m.fog.k, m.fog.z
    r = int(m.r)
    gmax = _fog_only_gamma_max(m)
    regions = _regions(gmax, r, c, t)
    y_t = 0.0 if c.gamma_T >= gmax else math.log(gmax / c.gamma_T) / r
    sel = float(special.gammainc(k, z * y_t))
    _require_selection(sel)

    def mass(lo, hi):
        return float(special.gammainc(k, z * hi) - special.gammainc(k, z * lo))

    weight = sum(t.rows[i].rate * mass(lo, hi) for i, lo, hi in regions)
    if weight <= 0.0:
        raise DegenerateTruncationError("no selected-beam mass falls in any code region")
    used = "quadrature" if method == "quadrature" else "closed"
    errors = 0.0
    for i, lo, hi in regions:
        code = t.rows[i]
        x_top = code.b * gmax * math.exp(-r * lo) / code.M

        def moment(l, lo=lo, hi=hi):
            # int_lo^hi exp(-r l (y - lo)) Gamma(k, z) density dy, from the
            # smaller of the two incomplete-gamma tails so nothing cancels
            rate = z + r * l
            if rate * lo > k:
                diff = special.gammaincc(k, rate * lo) - special.gammaincc(k, rate * hi)
            else:
                diff = special.gammainc(k, rate * hi) - special.gammainc(k, rate * lo)
            if diff <= 0.0:
                if rate * lo > 600.0:
                    raise _Unusable
                return 0.0, 0.0
            value = math.exp(k * math.log(z / rate) + r * l * lo + math.log(diff))
            return value, value

        value = None if method == "quadrature" else _exp_series(x_top, moment)
        if value is None:
            used = "quadrature"
            scale = code.b * gmax / code.M
            log_norm = k * math.log(z) - math.lgamma(k)

            def integrand(ys):
                dens = np.exp(log_norm + special.xlogy(k - 1.0, ys) - z * ys)
                return np.exp(-scale * np.exp(-r * ys)) * dens

            value, _ = integrate(integrand, lo, hi, epsabs=1e-16, epsrel=1e-11, limit=2000)
        errors += code.rate * code.a * value
    return PathFloat(errors / weight, used)


def tmos_summary(m: ChannelModel, c: TmosConfig, t: AcmCodeTable, method: str = "auto",
                 with_ber: bool = True) -> dict:
    """Every selection metric from one shared partition of the log-loss axis.

    Returns ``selection``, ``outage``, ``ansb``, ``ase``, ``system_ase``
    and ``ber`` as :class:`PathFloat` values plus the array ``regions`` of
    code probabilities. Metrics that are undefined at this ``mu`` (no
    selectable mass, outage threshold above ``gamma_max``) are None.
    """
    path = _choose_path(m, method)
    regions = _regions(m.gamma_max, int(m.r), c, t)
    y_t = _selection_limit(m, c)
    outage_defined = c.gamma_TH_OUT <= m.gamma_max * (1.0 + 1e-12)
    y_out = _y_of(m, min(c.gamma_TH_OUT, m.gamma_max))
    cuts = {0.0, y_t, *(y for _, lo, hi in regions for y in (lo, hi))}
    if outage_defined:
        cuts.add(min(y_out, y_t))
    cuts = sorted(y for y in cuts if y <= y_t)
    pieces = _Masses(m, path).partition(cuts)
    sel = float(pieces.sum())
    per_code = np.zeros(t.n_max)
    for i, lo, hi in regions:
        per_code[i] = pieces[cuts.index(lo):cuts.index(hi)].sum()
    rate_mass = float(np.dot(t.rates, per_code))

    out = {"selection": PathFloat(sel, path), "ansb": PathFloat(c.H * sel, path),
           "system_ase": PathFloat(c.H * rate_mass, path),
           "outage": None, "ase": None, "ber": None, "regions": None}
    if sel < _DEGENERATE:
        return out
    out["regions"] = per_code / sel
    if outage_defined:
        a = cuts.index(min(y_out, y_t))
        out["outage"] = PathFloat(min(max(pieces[a:].sum() / sel, 0.0), 1.0), path)
    out["ase"] = PathFloat(rate_mass / sel, path)
    if with_ber and rate_mass > 0.0:
        used = path
        errors = 0.0
        for i, lo, hi in regions:
            code = t.rows[i]
            value = _ber_region_closed(m, code, lo, hi) if path == "closed" else None
            if value is None:
                if path == "closed":
                    used = "quadrature"
                value = _ber_region_quadrature(m, code, lo, hi)
            errors += code.rate * value
        out["ber"] = PathFloat(errors / rate_mass, used)
    return out
