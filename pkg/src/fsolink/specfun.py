"""Special-function kernels used by the channel formulas.

Only the functions the closed-form channel statistics need are provided:
the error function, log-gamma, the lower incomplete gamma function with
its continuation to negative arguments, the modified Bessel function I0,
the Gauss hypergeometric function on (-1, 1), generalised binomial
coefficients and a closed form for the exponentially weighted moments of
the incomplete gamma function.

All kernels are pure functions of their arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConvergenceError, DomainError

__all__ = [
    "SeriesControl",
    "KahanSum",
    "erf",
    "log_gamma",
    "lower_inc_gamma",
    "bessel_i0",
    "bessel_i0e",
    "hyp2f1",
    "gen_binomial",
    "gamma_exp_moment",
]

_EPS = 2.0**-53
_KERNEL_MAX_TERMS = 200_000
_HUGE = 1e300


@dataclass(frozen=True)
class SeriesControl:
    """Truncation rule for the infinite sums in the channel formulas.

    Attributes
    ----------
    abs_tol : float
        A sum stops once the latest term is below ``abs_tol`` times the
        magnitude of the partial sum.
    max_terms : int
        Hard cap on the number of terms.
    """

    abs_tol: float = 1e-12
    max_terms: int = 500

    def __post_init__(self) -> None:
        if not self.abs_tol > 0.0:
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol}")
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms}")

    def doubled(self) -> "SeriesControl":
        return SeriesControl(self.abs_tol, 2 * self.max_terms)


class KahanSum:
    """Running compensated sum (Kahan-Babuska variant)."""

    __slots__ = ("total", "comp")

    def __init__(self, start: float = 0.0) -> None:
        self.total = float(start)
        self.comp = 0.0

    def add(self, x: float) -> float:
        t = self.total + x
        if abs(self.total) >= abs(x):
            self.comp += (self.total - t) + x
        else:
            self.comp += (x - t) + self.total
        self.total = t
        return t

    @property
    def value(self) -> float:
        return self.total + self.comp


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise OverflowError(f"{name}: intermediate result is not representable")


def _is_int(x: float) -> bool:
    return float(x).is_integer()


def erf(x: float) -> float:
    """Error function, exactly odd in its argument."""
    x = float(x)
    if math.isnan(x):
        raise DomainError("erf of NaN")
    return math.copysign(math.erf(abs(x)), x)


def log_gamma(x: float) -> float:
    """Natural logarithm of the gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"log_gamma requires a finite x > 0, got {x}")
    return math.lgamma(x)


def _gamma_sign(x: float) -> float:
    # sign of Gamma(x) for x not a nonpositive integer
    if x > 0.0:
        return 1.0
    return -1.0 if math.ceil(-x) % 2 == 1 else 1.0


def _rgamma(x: float) -> float:
    """1/Gamma(x), zero at the poles."""
    if x <= 0.0 and _is_int(x):
        return 0.0
    if x > 171.0:
        return 0.0 if x > 1e4 else math.exp(-math.lgamma(x))
    return 1.0 / math.gamma(x)


def _lig_series_negative(a: float, x: float) -> float:
    # x < 0, integer a: x^a * sum_j |x|^j / (j! (a+j)), all terms positive
    ax = -x
    acc = KahanSum()
    term = 1.0  # |x|^j / j!
    for j in range(_KERNEL_MAX_TERMS):
        contrib = term / (a + j)
        acc.add(contrib)
        _check_finite("lower_inc_gamma", acc.total)
        if j > ax and contrib <= _EPS * acc.total:
            break
        term *= ax / (j + 1)
        _check_finite("lower_inc_gamma", term)
    else:
        raise ConvergenceError("lower_inc_gamma series did not converge")
    log_mag = a * math.log(ax) + math.log(acc.value)
    if log_mag > 709.0:
        raise OverflowError("lower_inc_gamma: result exceeds the float range")
    sign = -1.0 if int(a) % 2 == 1 else 1.0
    return sign * math.exp(log_mag)


def _lig_series_positive(a: float, x: float) -> float:
    # gamma(a, x) = x^a e^{-x} sum_n x^n / (a (a+1) ... (a+n)), positive terms
    acc = KahanSum()
    term = 1.0 / a
    for n in range(_KERNEL_MAX_TERMS):
        acc.add(term)
        if term <= _EPS * acc.total:
            break
        term *= x / (a + n + 1)
    else:
        raise ConvergenceError("lower_inc_gamma series did not converge")
    log_val = a * math.log(x) - x + math.log(acc.value)
    if log_val > 709.0:
        raise OverflowError("lower_inc_gamma: result exceeds the float range")
    return math.exp(log_val)


def _upper_reg_cf(a: float, x: float) -> float:
    # Q(a, x) by the modified Lentz continued fraction, valid for x > a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _KERNEL_MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) <= _EPS:
            break
    else:
        raise ConvergenceError("incomplete gamma continued fraction did not converge")
    return math.exp(a * math.log(x) - x - math.lgamma(a)) * h


def lower_inc_gamma(a: float, x: float) -> float:
    """Lower incomplete gamma function ``gamma(a, x)``.

    For negative ``x`` the entire power series continuation is used; the
    result is real only for integer ``a``.

    Raises
    ------
    DomainError
        If ``a <= 0`` or if ``x < 0`` with non-integer ``a``.
    OverflowError
        If the result or an intermediate term is not representable.
    """
    a = float(a)
    x = float(x)
    if not a > 0.0 or not math.isfinite(a):
        raise DomainError(f"lower_inc_gamma requires a > 0, got {a}")
    if not math.isfinite(x):
        raise DomainError(f"lower_inc_gamma requires finite x, got {x}")
    if x == 0.0:
        return 0.0
    if x < 0.0:
        if not _is_int(a):
            raise DomainError("negative argument requires integer a for a real result")
        return _lig_series_negative(a, x)
    if x <= a + 1.0:
        return _lig_series_positive(a, x)
    q = _upper_reg_cf(a, x)
    lg = math.lgamma(a)
    if lg > 709.0:
        raise OverflowError("lower_inc_gamma: Gamma(a) exceeds the float range")
    return math.exp(lg) * (1.0 - q)


def _i0_series(ax: float) -> float:
    acc = KahanSum()
    term = 1.0
    h = 0.25 * ax * ax
    for m in range(_KERNEL_MAX_TERMS):
        acc.add(term)
        _check_finite("bessel_i0", acc.total)
        if m > 0.5 * ax and term <= _EPS * acc.total:
            break
        term *= h / ((m + 1) * (m + 1))
    return acc.value


def _i0e_asymptotic(ax: float) -> float:
    # e^{-x} I0(x) ~ (2 pi x)^{-1/2} sum_k ((2k-1)!!)^2 / (k! (8x)^k)
    acc = KahanSum()
    term = 1.0
    for k in range(60):
        acc.add(term)
        nxt = term * (2 * k + 1) ** 2 / ((k + 1) * 8.0 * ax)
        if abs(nxt) <= _EPS * abs(acc.total) or abs(nxt) > abs(term):
            break
        term = nxt
    return acc.value / math.sqrt(2.0 * math.pi * ax)


def bessel_i0(x: float) -> float:
    """Modified Bessel function of the first kind of order zero."""
    ax = abs(float(x))
    if math.isnan(ax):
        raise DomainError("bessel_i0 of NaN")
    if ax > 713.0:
        raise OverflowError(f"bessel_i0({x}) exceeds the float range")
    return _i0_series(ax)


def bessel_i0e(x: float) -> float:
    """Exponentially scaled Bessel function ``exp(-|x|) * I0(x)``."""
    ax = abs(float(x))
    if math.isnan(ax):
        raise DomainError("bessel_i0e of NaN")
    if ax <= 40.0:
        return _i0_series(ax) * math.exp(-ax)
    return _i0e_asymptotic(ax)


def _hyp2f1_series(a: float, b: float, c: float, x: float) -> float:
    acc = KahanSum()
    term = 1.0
    ax = abs(x)
    for n in range(_KERNEL_MAX_TERMS):
        acc.add(term)
        if not math.isfinite(acc.total):
            raise OverflowError("hyp2f1 series overflow")
        ratio = (a + n) * (b + n) / ((c + n) * (n + 1)) * x
        nxt = term * ratio
        if nxt == 0.0:
            break
        # the term ratio tends to x; bound the remaining tail geometrically
        r = max(abs(ratio), ax)
        if r < 1.0 and abs(nxt) / (1.0 - r) <= _EPS * abs(acc.total):
            acc.add(nxt)
            break
        term = nxt
    else:
        raise ConvergenceError("hyp2f1 series did not converge")
    return acc.value


def hyp2f1(a: float, b: float, c: float, x: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; x) for ``|x| < 1``.

    Above ``x = 0.8`` the 1-x linear transformation is used when
    ``c - a - b`` is not an integer; otherwise the direct series is summed
    (it converges geometrically with ratio ``x``). Negative ``x`` goes
    through the Pfaff transformation, which maps it into (0, 1/2).
    """
    a, b, c, x = float(a), float(b), float(c), float(x)
    if not abs(x) < 1.0:
        raise DomainError(f"hyp2f1 is restricted to |x| < 1, got x={x}")
    if c <= 0.0 and _is_int(c):
        raise DomainError(f"hyp2f1: c must not be a nonpositive integer, got {c}")
    if x == 0.0:
        return 1.0
    if x < 0.0:
        # Pfaff: pick the form whose series has the fewest sign changes
        z = x / (x - 1.0)
        if (c - b >= 0.0) or (c - a < 0.0 and abs(c - b) <= abs(c - a)):
            return (1.0 - x) ** (-a) * _hyp2f1_series(a, c - b, c, z)
        return (1.0 - x) ** (-b) * _hyp2f1_series(b, c - a, c, z)
    s = c - a - b
    if x > 0.8 and not _is_int(s):
        y = 1.0 - x
        g1 = math.gamma(c) * math.gamma(s) * _rgamma(c - a) * _rgamma(c - b)
        g2 = math.gamma(c) * math.gamma(-s) * _rgamma(a) * _rgamma(b)
        f1 = _hyp2f1_series(a, b, 1.0 - s, y) if g1 != 0.0 else 0.0
        f2 = _hyp2f1_series(c - a, c - b, 1.0 + s, y) if g2 != 0.0 else 0.0
        return g1 * f1 + y**s * g2 * f2
    return _hyp2f1_series(a, b, c, x)


def gen_binomial(k_minus_1: float, n: int) -> float:
    """Binomial coefficient C(alpha, n) for real ``alpha`` and integer ``n >= 0``."""
    alpha = float(k_minus_1)
    if n < 0 or int(n) != n:
        raise DomainError(f"gen_binomial requires an integer n >= 0, got {n}")
    n = int(n)
    if _is_int(alpha):
        ia = int(alpha)
        if ia >= 0:
            return float(math.comb(ia, n)) if n <= ia else 0.0
        # C(-p, n) = (-1)^n C(p + n - 1, n)
        return (-1.0) ** n * float(math.comb(n - ia - 1, n))
    if n <= 200:
        # the running product keeps full relative accuracy near the integers
        value = 1.0
        for j in range(n):
            value *= (alpha - j) / (j + 1.0)
        return value
    top = alpha + 1.0
    bottom = alpha - n + 1.0
    log_mag = math.lgamma(top) - math.lgamma(n + 1.0) - math.lgamma(bottom)
    return _gamma_sign(top) * _gamma_sign(bottom) * math.exp(log_mag)


def gamma_exp_moment(
    a: float, b: float, c: float, k: int, alpha: float, beta: float
) -> float:
    """Closed form of ``int_alpha^beta gamma(a, b x) exp(-c x) x^k dx``.

    Integration by parts on the power ``x^k`` gives a finite sum of
    incomplete gamma functions, so ``k`` must be a nonnegative integer.

    Parameters
    ----------
    a : float
        Incomplete gamma order, ``a > 0``.
    b, c : float
        Rates; ``c != 0``. Negative ``b`` or ``b + c`` require integer ``a``.
    k : int
        Power of ``x``.
    alpha, beta : float
        Integration limits with ``0 <= alpha < beta``.
    """
    a, b, c = float(a), float(b), float(c)
    alpha, beta = float(alpha), float(beta)
    if not a > 0.0:
        raise DomainError(f"gamma_exp_moment requires a > 0, got {a}")
    if int(k) != k or k < 0:
        raise DomainError(f"gamma_exp_moment requires an integer k >= 0, got {k}")
    if c == 0.0:
        raise DomainError("gamma_exp_moment requires c != 0")
    if not 0.0 <= alpha < beta:
        raise DomainError(f"gamma_exp_moment requires 0 <= alpha < beta, got [{alpha}, {beta}]")
    if (b < 0.0 or b + c < 0.0) and not _is_int(a):
        raise DomainError("negative rate requires integer a")
    k = int(k)
    value, cond = _gamma_exp_moment_parts(a, b, c, k, alpha, beta)
    # integration by parts divides by c^(k+1); when the terms cancel badly
    # and c*beta is moderate, sum the Taylor series of exp(-c x) instead
    if cond > 1e4 and abs(c) * beta <= 8.0 and b > 0.0:
        value = _gamma_exp_moment_taylor(a, b, c, k, alpha, beta)
    _check_finite("gamma_exp_moment", value)
    return value


def _gamma_exp_moment_parts(
    a: float, b: float, c: float, k: int, alpha: float, beta: float
) -> tuple[float, float]:
    bc = b + c
    g_lo = lower_inc_gamma(a, b * alpha)
    g_hi = lower_inc_gamma(a, b * beta)
    e_lo = math.exp(-c * alpha)
    e_hi = math.exp(-c * beta)
    terms = []
    log_kfact = math.lgamma(k + 1.0)
    for i in range(k + 1):
        coef = math.exp(log_kfact - math.lgamma(i + 1.0)) / c ** (k - i + 1)
        if b != 0.0:
            scale = b**a * bc ** (-a - i)
            diff = lower_inc_gamma(a + i, bc * beta) - lower_inc_gamma(a + i, bc * alpha)
            terms.append(coef * scale * diff)
        terms.append(-coef * g_hi * e_hi * beta**i)
        terms.append(coef * g_lo * e_lo * alpha**i)
    value = math.fsum(terms)
    mag = math.fsum(abs(t) for t in terms)
    cond = mag / abs(value) if value != 0.0 else math.inf
    return value, cond


def _power_moment(a: float, b: float, p: int, x: float) -> float:
    # int_0^x gamma(a, b t) t^p dt
    if x == 0.0:
        return 0.0
    return (x ** (p + 1) * lower_inc_gamma(a, b * x)
            - lower_inc_gamma(a + p + 1, b * x) / b ** (p + 1)) / (p + 1)


def _gamma_exp_moment_taylor(
    a: float, b: float, c: float, k: int, alpha: float, beta: float
) -> float:
    acc = KahanSum()
    coef = 1.0
    for j in range(_KERNEL_MAX_TERMS):
        p = k + j
        moment = _power_moment(a, b, p, beta) - _power_moment(a, b, p, alpha)
        term = coef * moment
        acc.add(term)
        if j > abs(c) * beta and abs(term) <= _EPS * abs(acc.total):
            break
        coef *= -c / (j + 1)
    else:
        raise ConvergenceError("gamma_exp_moment Taylor series did not converge")
    return acc.value
