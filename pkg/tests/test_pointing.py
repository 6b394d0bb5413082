import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from fsolink.errors import DomainError, SingularGeometryError
from fsolink.pointing import (
    PointingGeometry,
    derive_pointing,
    geometric_sample,
    hoyt_sample,
    ip_map,
    ip_mean,
    ip_pdf,
)


def geometry(sigma=0.5, **kw):
    base = dict(L=500.0, alpha_d=math.pi / 8, beta_d=5 * math.pi / 8, sigma=sigma, r0=0.1, wL=0.3)
    base.update(kw)
    return PointingGeometry(**base)


@pytest.fixture(scope="module")
def d1():
    return derive_pointing(geometry(1.0))


def test_mean_position():
    g = geometry()
    x, y, z = g.mean_position
    assert math.sqrt(x * x + y * y + z * z) == pytest.approx(500.0, rel=1e-14)
    assert y / x == pytest.approx(math.tan(math.pi / 8), rel=1e-14)


def test_covariance_is_linearised_footprint_covariance(d1):
    # Sigma = J diag(sigmas^2) J^T with J the footprint Jacobian
    J = np.array([[d1.c1, 1.0, 0.0, d1.c2, 0.0],
                  [d1.c5, 0.0, 1.0, d1.c4, d1.c3]])
    cov = J @ np.diag(np.square(d1.sigmas)) @ J.T
    assert np.allclose(np.array(d1.Sigma_IG), cov, rtol=1e-13, atol=0)
    lam = np.linalg.eigvalsh(cov)
    assert d1.lambda1 == pytest.approx(lam[1], rel=1e-12)
    assert d1.lambda2 == pytest.approx(lam[0], rel=1e-10)
    assert d1.Omega == pytest.approx(np.trace(cov), rel=1e-14)
    assert 0.0 < d1.q <= 1.0


def test_jitter_scales_as_inverse_square_of_sigma():
    base = derive_pointing(geometry(1.0)).xi
    for s in (0.1, 0.5, 2.5):
        assert derive_pointing(geometry(s)).xi == pytest.approx(base / s**2, rel=1e-12)


def test_collection_constants(d1):
    assert d1.A0 == pytest.approx(special.erf(d1.v1) * special.erf(d1.v2), rel=1e-14)
    assert d1.A0 < 1.0
    assert d1.t == pytest.approx(0.5 * (d1.t1 + d1.t2), rel=1e-15)


def test_singular_geometry():
    with pytest.raises(SingularGeometryError):
        derive_pointing(geometry(alpha_d=math.pi / 2))
    with pytest.raises(DomainError):
        geometry(beta_d=0.0)
    with pytest.raises(DomainError):
        derive_pointing(geometry(0.0))
    with pytest.raises(DomainError):
        geometry(r0=-0.1)


def test_density_normalised(d1):
    # in w = ln(A0/ip) the density is smooth on (0, inf)
    f = lambda w: ip_pdf(d1, d1.A0 * math.exp(-w)) * d1.A0 * math.exp(-w)
    total, _ = integrate.quad(f, 0.0, 700.0, points=[1.0 / d1.xi], epsabs=1e-12, epsrel=1e-11, limit=400)
    assert abs(total - 1.0) < 1e-8


def test_mean_against_quadrature(d1):
    f = lambda w: ip_pdf(d1, d1.A0 * math.exp(-w)) * (d1.A0 * math.exp(-w)) ** 2
    ref, _ = integrate.quad(f, 0.0, 700.0, points=[1.0 / d1.xi], epsabs=1e-14, epsrel=1e-11, limit=400)
    assert ip_mean(d1) == pytest.approx(ref, rel=1e-7)


def _displacement_cdf(lam1, lam2, r2):
    # P(lam1 Z1^2 + lam2 Z2^2 <= r2) for independent standard normals
    zmax = math.sqrt(r2 / lam1)
    f = lambda z: stats.chi2.cdf((r2 - lam1 * z * z) / lam2, 1) * stats.norm.pdf(z)
    val, _ = integrate.quad(f, -zmax, zmax, epsabs=1e-13, epsrel=1e-11)
    return val


def test_density_matches_gaussian_displacement_law(d1):
    # upper tail of ip equals the probability of a small displacement
    for frac in (0.9, 0.5, 0.1, 1e-3):
        x = d1.A0 * frac
        upper, _ = integrate.quad(lambda u: ip_pdf(d1, u), x, d1.A0, epsabs=0, epsrel=1e-11, limit=200)
        r2 = 0.5 * d1.t * d1.wL**2 * math.log(1.0 / frac)
        assert upper == pytest.approx(_displacement_cdf(d1.lambda1, d1.lambda2, r2), rel=1e-7)


def test_density_domain(d1):
    with pytest.raises(DomainError):
        ip_pdf(d1, 0.0)
    with pytest.raises(DomainError):
        ip_pdf(d1, d1.A0 * 1.01)


def test_map_at_reference_displacement(d1):
    s = d1.wL * math.sqrt(d1.t / 2.0)
    assert ip_map(d1, s) == pytest.approx(d1.A0 / math.e, rel=1e-14)
    assert ip_map(d1, 0.0) == d1.A0


def test_hoyt_second_moment(d1):
    s = hoyt_sample(d1, np.random.default_rng(3), 400_000)
    se = np.std(s * s) / math.sqrt(s.size)
    assert abs(np.mean(s * s) - d1.Omega) < 4 * se


def test_geometric_sampler_agrees_with_linearisation():
    g = geometry(0.5)
    d = derive_pointing(g)
    s = geometric_sample(g, np.random.default_rng(11), 200_000)
    assert np.mean(s * s) == pytest.approx(d.Omega, rel=0.05)
    assert isinstance(geometric_sample(g, np.random.default_rng(1)), float)
