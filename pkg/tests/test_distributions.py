import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate, special, stats

from gdvar import DomainError, Family, GdParams, ParameterError
from gdvar import cdf, density, fisher_scaling, log_density, quantile, sample, score, sf
from gdvar._special import digamma, gammainc_lower, gammainc_lower_inv, gammainc_upper, trigamma
from gdvar.distributions import WPD_SHAPE_INFORMATION, uniform_open

FAMILIES = [Family.PARETO_IV, Family.WEIBULL_PARETO_IV, Family.GAMMA_PARETO_IV,
            Family.RAYLEIGH_PARETO_IV]
DYNAMIC = FAMILIES[1:]


def params_for(kind, alpha, p1, p2):
    return GdParams(alpha, p1) if kind == Family.PARETO_IV else GdParams(alpha, p1, p2)


# --- special functions against mpmath -------------------------------------


@pytest.mark.parametrize("x", [1e-3, 0.2, 0.9, 1.0, 2.5, 6.5, 13.0, 80.0, 1e4])
def test_polygamma_matches_mpmath(x):
    assert digamma(x) == pytest.approx(float(mp.digamma(x)), rel=1e-13, abs=1e-13)
    assert trigamma(x) == pytest.approx(float(mp.polygamma(1, x)), rel=1e-12)


@pytest.mark.parametrize("a", [0.05, 0.5, 1.0, 3.7, 40.0])
@pytest.mark.parametrize("t", [1e-4, 0.3, 1.0, 4.0, 60.0])
def test_incomplete_gamma_matches_mpmath(a, t):
    p = float(mp.gammainc(a, 0, t, regularized=True))
    q = float(mp.gammainc(a, t, mp.inf, regularized=True))
    assert gammainc_lower(a, t) == pytest.approx(p, rel=1e-11, abs=1e-300)
    assert gammainc_upper(a, t) == pytest.approx(q, rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("a", [0.05, 0.7, 2.0, 25.0])
def test_incomplete_gamma_inverse(a):
    for u in [1e-10, 1e-4, 0.1, 0.5, 0.9, 1 - 1e-6]:
        t = gammainc_lower_inv(a, u)
        assert t == pytest.approx(special.gammaincinv(a, u), rel=1e-9)


# --- closed-form spot values -----------------------------------------------


def test_wpd_unit_point():
    # alpha = beta = c = 1 at x = 1: g = 1 / (1 + x)^2
    assert log_density("wpd", GdParams(1, 1, 1), 1.0) == pytest.approx(math.log(0.25), abs=1e-15)
    assert cdf("wpd", GdParams(1, 1, 1), 1.0) == pytest.approx(0.5, abs=1e-15)


def test_rpd_unit_point():
    # ln(1 + x) = 1 at x = e - 1: g = e^{-1} e^{-1/2}
    assert log_density("rpd", GdParams(1, 1, 1), math.e - 1) == pytest.approx(-1.5, abs=1e-14)


def test_rpd_closed_form_quantile():
    x = quantile("rpd", GdParams(2.0, 1.0, 1.0), 1 - math.exp(-0.5))
    assert x == pytest.approx((math.e - 1) ** 2, rel=1e-13)


def test_wpd_cdf_example():
    assert cdf("wpd", GdParams(1, 1, 2), math.e - 1) == pytest.approx(1 - math.exp(-1), rel=1e-14)


def test_gpd_theta_one_cdf():
    for a, c in [(0.5, 0.3), (1.0, 1.0), (2.0, 4.0)]:
        x = np.geomspace(1e-3, 1e3, 25)
        expected = -np.expm1(-np.log1p(x ** (1 / a)) / c)
        assert np.allclose(cdf("gpd", GdParams(a, c, 1.0), x), expected, rtol=1e-12, atol=0)


def test_digamma_at_one_is_minus_euler():
    assert digamma(1.0) == pytest.approx(-float(mp.euler), abs=1e-15)


def test_wpd_cdf_closed_form():
    x, a, b, c = 0.7, 0.6, 1.3, 2.0
    L = math.log1p(x ** (1 / a))
    assert cdf("wpd", GdParams(a, b, c), x) == pytest.approx(1 - math.exp(-((b * L) ** c)), rel=1e-14)


def test_gpd_theta_one_is_weibull_case():
    # theta = 1: L / c ~ Exp(1), i.e. WPD with beta = 1/c and shape 1
    x = np.geomspace(1e-3, 50, 30)
    a = density("gpd", GdParams(0.8, 2.0, 1.0), x)
    b = density("wpd", GdParams(0.8, 0.5, 1.0), x)
    assert np.allclose(a, b, rtol=1e-12)


def test_quantile_examples():
    # c = 1 reduction: F = 1 - 1/(1 + x) at alpha = beta = 1
    assert quantile("wpd", GdParams(1, 1, 1), 0.5) == pytest.approx(1.0, rel=1e-14)
    assert quantile("wpd", GdParams(1, 1, 1), 0.75) == pytest.approx(3.0, rel=1e-14)


def test_gpd_cdf_matches_scipy_gamma():
    p = GdParams(1.3, 0.7, 2.4)
    x = np.geomspace(1e-4, 1e3, 40)
    L = np.log1p(x ** (1 / p.alpha))
    assert np.allclose(cdf("gpd", p, x), stats.gamma.cdf(L / p.p1, p.p2), rtol=1e-11, atol=1e-300)


# --- normalization, cdf, quantile round trip over a 3x3x3 grid -------------

GRID = [(a, p1, p2) for a in (0.5, 1.0, 2.5) for p1 in (0.4, 1.0, 3.0) for p2 in (0.6, 1.0, 2.2)]


SPLIT = [1e-10, 1e-6, 1e-3, 0.05, 0.25, 0.5, 0.75, 0.95, 0.999, 1 - 1e-6, 1 - 1e-10]


def integral_of_density(kind, p):
    """Quadrature between quantile split points plus the two analytic tails."""
    # integrate g(e^z) e^z over z = ln x; the tails span hundreds of decades
    knots = []
    for u in SPLIT:
        try:
            knots.append(math.log(quantile(kind, p, u)))
        except ArithmeticError:  # quantile beyond the float range
            break
    knots = np.array(knots)
    total = float(cdf(kind, p, np.exp(knots[0])))
    for lo, hi in zip(knots[:-1], knots[1:]):
        val, _ = integrate.quad(lambda z: math.exp(log_density(kind, p, math.exp(z)) + z), lo, hi,
                                limit=200, epsabs=1e-15, epsrel=1e-12)
        total += val
    return total + float(sf(kind, p, np.exp(knots[-1])))


@pytest.mark.parametrize("kind", FAMILIES)
def test_normalization_and_cdf_consistency(kind):
    for a, p1, p2 in GRID:
        p = params_for(kind, a, p1, p2)
        val = integral_of_density(kind, p)
        assert abs(val - 1) < 1e-6, (kind, a, p1, p2, val)
        assert cdf(kind, p, 0.0) == 0.0
        x = np.geomspace(1e-2, 1e2, 9)
        h = 1e-6 * x
        lower = cdf(kind, p, x) < 0.5
        # difference whichever tail function is small to avoid cancellation
        fc = (cdf(kind, p, x + h) - cdf(kind, p, x - h)) / (2 * h)
        fs = (sf(kind, p, x - h) - sf(kind, p, x + h)) / (2 * h)
        deriv = np.where(lower, fc, fs)
        g = density(kind, p, x)
        ok = g > 1e-200
        assert np.allclose(deriv[ok], g[ok], rtol=1e-5, atol=0)
        assert np.allclose(cdf(kind, p, x) + sf(kind, p, x), 1.0, atol=1e-14)


@pytest.mark.parametrize("kind", FAMILIES)
def test_quantile_round_trip(kind):
    u = np.concatenate([[1e-8, 1e-4], np.linspace(0.01, 0.99, 99), [1 - 1e-6]])
    for a, p1, p2 in GRID:
        p = params_for(kind, a, p1, p2)
        assert np.max(np.abs(cdf(kind, p, quantile(kind, p, u)) - u)) < 1e-9


def test_wpd_c_one_is_pareto_iv():
    x = np.geomspace(1e-4, 1e4, 200)
    for a, d in [(0.5, 0.4), (1.0, 1.0), (2.5, 3.0)]:
        w = log_density("wpd", GdParams(a, d, 1.0), x)
        p = log_density("pareto4", GdParams(a, d), x)
        assert np.max(np.abs(np.exp(w - p) - 1)) < 1e-12


# --- domain handling --------------------------------------------------------


def test_domain_errors():
    p = GdParams(1, 1, 1)
    with pytest.raises(DomainError):
        log_density("wpd", p, 0.0)
    with pytest.raises(DomainError):
        cdf("wpd", p, -1.0)
    with pytest.raises(DomainError):
        quantile("wpd", p, 1.0)
    with pytest.raises(ParameterError):
        log_density("wpd", GdParams(-1, 1, 1), 1.0)
    with pytest.raises(ParameterError):
        cdf("gpd", GdParams(1, 1, float("nan")), 1.0)
    assert cdf("wpd", p, 0.0) == 0.0


def test_family_parsing():
    assert Family.parse("WPD") is Family.WEIBULL_PARETO_IV
    assert Family.parse("gamma-pareto-iv") is Family.GAMMA_PARETO_IV
    assert Family.parse(3) is Family.RAYLEIGH_PARETO_IV
    with pytest.raises(ValueError):
        Family.parse("normal")


# --- sampling ---------------------------------------------------------------


def test_uniform_open_interval():
    u = uniform_open(np.random.default_rng(0), 10**6)
    assert u.min() > 0 and u.max() < 1


@pytest.mark.parametrize("kind", DYNAMIC)
def test_sample_matches_cdf(kind):
    p = GdParams(0.9, 1.4, 1.7)
    x = sample(kind, p, 10**6, rng_seed=5)
    assert stats.kstest(x, lambda t: cdf(kind, p, t)).statistic < 0.002
    assert np.array_equal(x[:1000], sample(kind, p, 1000, rng_seed=5))


def test_quantile_inverts_cdf_in_x():
    x = np.geomspace(1e-3, 1e3, 60)
    for kind in FAMILIES:
        p = params_for(kind, 0.9, 1.3, 1.8)
        u = cdf(kind, p, x)
        ok = (u > 1e-12) & (u < 1 - 1e-9)
        assert np.allclose(quantile(kind, p, u[ok]), x[ok], rtol=1e-7)


# --- scores ---------------------------------------------------------------


@pytest.mark.parametrize("kind", DYNAMIC)
def test_scores_match_finite_differences(kind):
    for a, p1, p2 in GRID:
        p = GdParams(a, p1, p2)
        for x in (0.05, 0.7, 4.0):
            s = score(kind, p, x)
            for which, analytic in (("p1", s.d_p1), ("p2", s.d_p2)):
                h = 1e-6 * (p1 if which == "p1" else p2)
                up = GdParams(a, p1 + h, p2) if which == "p1" else GdParams(a, p1, p2 + h)
                dn = GdParams(a, p1 - h, p2) if which == "p1" else GdParams(a, p1, p2 - h)
                fd = (log_density(kind, up, x) - log_density(kind, dn, x)) / (2 * h)
                assert abs(fd - analytic) <= 1e-4 * max(abs(analytic), 1e-2), (kind, p, x, which)


def test_fisher_scaling_values():
    f = fisher_scaling("wpd", GdParams(1, 2.0, 3.0))
    assert f.s_p1 == pytest.approx(-(3.0 / 2.0) ** 2)
    assert f.s_p2 == pytest.approx(-WPD_SHAPE_INFORMATION / 9.0)
    g = fisher_scaling("gpd", GdParams(1, 2.0, 3.0))
    assert g.s_p1 == pytest.approx(-3.0 / 4.0)
    assert g.s_p2 == pytest.approx(-special.polygamma(1, 3.0), rel=1e-12)
    r = fisher_scaling("rpd", GdParams(1, 2.0, 3.0))
    assert (r.s_p1, r.s_p2) == pytest.approx((-1.0, -4.0 / 9.0))
    assert fisher_scaling("wpd", GdParams(1, 0.5, 2.0)).s_p1 == pytest.approx(-16.0)
    r = fisher_scaling("rpd", GdParams(1, 3.0, 2.0))
    assert (r.s_p1, r.s_p2) == pytest.approx((-4.0 / 9.0, -1.0))
    assert fisher_scaling("pareto4", GdParams(1, 2.0)).s_p1 == pytest.approx(-0.25)


def test_wpd_shape_information_constant():
    # 1 + Gamma''(2) computed independently with mpmath
    assert WPD_SHAPE_INFORMATION == pytest.approx(float(1 + mp.diff(mp.gamma, 2, 2)), rel=1e-12)
