import math

import numpy as np
import pytest
from scipy import optimize, special

from gdvar import DcsCoefficients, FilterError, FilterState, GdParams
from gdvar import filter_step, log_density, run_filter, score, simulate, standardized_score
from gdvar.distributions import WPD_SHAPE_INFORMATION
from gdvar.estimation import fit_static


def wpd_hand_step(lam, v, x, alpha, coeffs, q, unit=False):
    """Direct substitution: log-density, standardized scores and the update."""
    beta, c = math.exp(lam), math.exp(v)
    L = math.log(1 + x ** (1 / alpha))
    jac = x ** (1 / alpha - 1) / (alpha * (1 + x ** (1 / alpha)))
    w = (beta * L) ** c
    ll = math.log(c) + c * math.log(beta) + (c - 1) * math.log(L) - w + math.log(jac)
    g_beta = c / beta * (1 - w)
    g_c = 1 / c + math.log(beta * L) * (1 - w)
    # s = grad * chain / (E[d2] * chain^2), chain = exp(link)
    s_lam = g_beta * beta / (-(c / beta) ** 2 * beta**2)
    info_c = -1.0 if unit else -WPD_SHAPE_INFORMATION / c**2
    s_v = g_c * c / (info_c * (1.0 if unit else c * c))
    lam_n = coeffs.A1 + q + coeffs.B1 * lam + coeffs.C1 * s_lam
    v_n = coeffs.A2 + coeffs.B2 * v + coeffs.C2 * s_v
    return ll, s_lam, s_v, lam_n, v_n


COEFFS = DcsCoefficients(0.12, 0.7, 0.25, 0.05, 0.6, 0.15, 0.8)


@pytest.mark.parametrize("unit", [False, True])
def test_three_day_hand_oracle(unit):
    x = [0.35, 2.4, 0.08]
    q = [0.0, 0.03, -0.02]
    s0 = FilterState(0.1, 0.2)
    path = run_filter("wpd", x, COEFFS, q, initial_state=s0, next_q=0.01,
                      shape_scaling="unit" if unit else "fisher")
    lam, v = s0.lam, s0.v
    total = 0.0
    for t in range(3):
        assert path.lam[t] == pytest.approx(lam, abs=1e-12)
        assert path.v[t] == pytest.approx(v, abs=1e-12)
        nq = q[t + 1] if t < 2 else 0.01
        ll, s_lam, s_v, lam, v = wpd_hand_step(lam, v, x[t], COEFFS.alpha_static, COEFFS, nq, unit)
        assert path.loglik_increments[t] == pytest.approx(ll, abs=1e-12)
        assert path.std_score_lam[t] == pytest.approx(s_lam, abs=1e-12)
        assert path.std_score_v[t] == pytest.approx(s_v, abs=1e-12)
        total += ll
    assert path.next_state.lam == pytest.approx(lam, abs=1e-12)
    assert path.next_state.v == pytest.approx(v, abs=1e-12)
    assert path.loglik == pytest.approx(total, abs=1e-12)


def test_gpd_standardized_score_formula():
    lam, v, alpha, x = 0.3, 0.5, 1.2, 0.9
    c, theta = math.exp(lam), math.exp(v)
    L = math.log1p(x ** (1 / alpha))
    g_c = -theta / c + L / c**2
    g_theta = -math.log(c) - special.digamma(theta) + math.log(L)
    s = standardized_score("gpd", FilterState(lam, v), alpha, x)
    assert s[0] == pytest.approx(-c * g_c / theta, rel=1e-12)
    assert s[1] == pytest.approx(-g_theta / (theta * special.polygamma(1, theta)), rel=1e-12)


def test_rpd_standardized_score_formula():
    # sigma = 2, delta = 1 and ln(1 + x^{1/alpha}) = 1
    sigma, delta, alpha = 2.0, 1.0, 1.0
    x = math.e - 1
    g_sigma = -2 / sigma + delta**2 / sigma**3
    g_delta = 2 / delta - delta / sigma**2
    s = standardized_score("rpd", FilterState(sigma, math.log(delta)), alpha, x)
    assert s[0] == pytest.approx(-(sigma**2) * g_sigma / 4, rel=1e-12)
    assert s[1] == pytest.approx(-delta * g_delta / 4, rel=1e-12)


def test_zero_score_maps_to_zero():
    lam, v, alpha = 0.2, 0.4, 1.0
    beta, c = math.exp(lam), math.exp(v)
    # (beta L)^c = 1 zeroes the scale score
    x = math.expm1(1 / beta) ** alpha
    assert standardized_score("wpd", FilterState(lam, v), alpha, x)[0] == pytest.approx(0, abs=1e-14)
    g_c = lambda y: score("wpd", GdParams(alpha, beta, c), y).d_p2  # noqa: E731
    root = optimize.brentq(g_c, 0.01, x)
    assert standardized_score("wpd", FilterState(lam, v), alpha, root)[1] == pytest.approx(0, abs=1e-9)


def test_filter_step_matches_run_filter():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.05, 3, 25)
    q = rng.normal(0, 0.05, 25)
    s0 = FilterState(-0.1, 0.3)
    path = run_filter("gpd", x, COEFFS, q, initial_state=s0)
    state, total = s0, 0.0
    for t in range(25):
        assert (path.lam[t], path.v[t]) == (state.lam, state.v)
        state, ll, _ = filter_step("gpd", state, COEFFS, q[t + 1] if t < 24 else 0.0, x[t])
        total += ll
    assert path.loglik == pytest.approx(total, rel=1e-13)
    assert path.loglik == pytest.approx(path.loglik_increments.sum(), rel=1e-13)


@pytest.mark.parametrize("kind", ["wpd", "gpd", "rpd"])
def test_stored_scores_match_distribution_scores(kind):
    rng = np.random.default_rng(4)
    x = rng.uniform(0.05, 3, 30)
    s0 = FilterState(1.0 if kind == "rpd" else 0.1, 0.2)
    c = DcsCoefficients(0.2 if kind == "rpd" else 0.05, 0.8, 0.1, 0.02, 0.7, 0.05, 1.1)
    path = run_filter(kind, x, c, initial_state=s0)
    for t in range(30):
        p = path.params_at(t)
        sv = score(kind, p, x[t])
        assert path.score_p1[t] == pytest.approx(sv.d_p1, rel=1e-12, abs=1e-12)
        assert path.score_p2[t] == pytest.approx(sv.d_p2, rel=1e-12, abs=1e-12)
        assert path.loglik_increments[t] == pytest.approx(log_density(kind, p, x[t]), rel=1e-12)


@pytest.mark.parametrize("kind", ["wpd", "gpd", "rpd"])
def test_stationary_null_is_input_independent(kind):
    c = DcsCoefficients(0.1, 0.5, 0.0, 0.05, 0.3, 0.0, 1.0)
    s0 = FilterState(0.4, 0.1)
    rng = np.random.default_rng(5)
    q = rng.normal(0, 0.1, 50)
    a = run_filter(kind, rng.uniform(0.1, 2, 50), c, q, initial_state=s0)
    b = run_filter(kind, rng.uniform(0.1, 2, 50), c, q, initial_state=s0)
    assert np.array_equal(a.lam, b.lam) and np.array_equal(a.v, b.v)
    # deterministic AR(1) in each link, approaching A / (1 - B)
    far = run_filter(kind, np.ones(400), c, initial_state=s0)
    assert far.lam[-1] == pytest.approx(0.1 / 0.5, abs=1e-12)
    assert far.v[-1] == pytest.approx(0.05 / 0.7, abs=1e-12)


@pytest.mark.parametrize("kind", ["wpd", "gpd", "rpd"])
def test_seasonal_additivity_is_exact(kind):
    rng = np.random.default_rng(6)
    x = rng.uniform(0.1, 2, 40)
    q = rng.normal(0, 0.05, 40)
    s0 = FilterState(0.5, 0.1)
    c = DcsCoefficients(0.2, 0.6, 0.05, 0.05, 0.5, 0.02, 1.0)
    path = run_filter(kind, x, c, q, initial_state=s0)
    state = s0
    gpd = kind == "gpd"
    for t in range(40):
        assert path.lam[t] == state.lam and path.v[t] == state.v
        qn = q[t + 1] if t < 39 else 0.0
        ct = DcsCoefficients(c.A1 + (0 if gpd else qn), c.B1, c.C1, c.A2 + (qn if gpd else 0),
                             c.B2, c.C2, c.alpha_static)
        state, _, _ = filter_step(kind, state, ct, 0.0, x[t])


def test_gpd_seasonal_enters_shape_equation():
    c = DcsCoefficients(0.1, 0.6, 0.0, 0.05, 0.5, 0.0, 1.0)
    x = np.ones(5)
    q = np.array([0, 0.1, 0.1, 0.1, 0.1])
    a = run_filter("gpd", x, c, q, initial_state=FilterState(0, 0))
    b = run_filter("gpd", x, c, initial_state=FilterState(0, 0))
    assert np.array_equal(a.lam, b.lam) and not np.array_equal(a.v, b.v)
    w = run_filter("wpd", x, c, q, initial_state=FilterState(0, 0))
    assert not np.array_equal(w.lam, b.lam) and np.array_equal(w.v, b.v)


def test_constant_state_equals_static_likelihood():
    c = DcsCoefficients(0.3, 0.0, 0.0, -0.2, 0.0, 0.0, 0.9)
    x = np.random.default_rng(7).uniform(0.1, 3, 60)
    path = run_filter("wpd", x, c, initial_state=FilterState(0.3, -0.2))
    p = GdParams(0.9, math.exp(0.3), math.exp(-0.2))
    assert path.loglik == pytest.approx(float(np.sum(log_density("wpd", p, x))), rel=1e-13)


def test_single_day_and_default_initial_state():
    x = np.random.default_rng(8).uniform(0.1, 3, 80)
    mild = DcsCoefficients(0.0, 0.5, 0.05, 0.0, 0.5, 0.02, 0.8)
    static = fit_static("wpd", x, alpha=0.8)
    path = run_filter("wpd", x[:1], mild, initial_state=FilterState(0.1, 0.2))
    p = GdParams(0.8, math.exp(0.1), math.exp(0.2))
    assert path.loglik == pytest.approx(log_density("wpd", p, x[0]), rel=1e-14)
    default = run_filter("wpd", x, mild)
    assert default.lam[0] == pytest.approx(math.log(static.params.p1))
    assert default.v[0] == pytest.approx(math.log(static.params.p2))


def test_unit_shape_scaling_keeps_shape_driven():
    c = DcsCoefficients(0.1, 0.5, 0.0, 0.05, 0.3, 0.2, 1.0)
    rng = np.random.default_rng(9)
    a = run_filter("wpd", rng.uniform(0.1, 2, 20), c, initial_state=FilterState(0, 0), shape_scaling="unit")
    b = run_filter("wpd", rng.uniform(0.1, 2, 20), c, initial_state=FilterState(0, 0), shape_scaling="unit")
    assert not np.array_equal(a.v, b.v)


def test_filtered_scale_tracks_truth():
    true = DcsCoefficients(0.23, 0.95, -0.06, 0.047, 0.9, -0.03, 1.0)
    x, (lam, _) = simulate("wpd", true, 2000, rng_seed=11)
    path = run_filter("wpd", x, true)
    assert np.corrcoef(np.exp(path.lam), np.exp(lam))[0, 1] > 0.9


def test_simulation_is_seeded():
    a, _ = simulate("gpd", COEFFS, 100, rng_seed=1)
    b, _ = simulate("gpd", COEFFS, 100, rng_seed=1)
    assert np.array_equal(a, b)


def test_filter_error_carries_day():
    c = DcsCoefficients(0.0, 0.0, -50.0, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(FilterError) as err:
        run_filter("wpd", [1.0, 1e300, 1.0, 1.0], c, initial_state=FilterState(0, 0))
    assert err.value.day in (1, 2)


def test_rpd_sigma_clamp_is_counted():
    c = DcsCoefficients(-0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    path = run_filter("rpd", [1.0, 1.0, 1.0], c, initial_state=FilterState(1.0, 0.0))
    assert path.clamped_days == 3
    assert np.all(path.lam[1:] == 1e-8)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        run_filter("pareto4", [1.0], COEFFS)
    with pytest.raises(ValueError):
        run_filter("wpd", [1.0, 2.0], COEFFS, seasonal=[0.0])
    with pytest.raises(ValueError):
        run_filter("wpd", [1.0], COEFFS, shape_scaling="other")
    # zeros are floored rather than rejected
    path = run_filter("wpd", [0.0, 1.0], COEFFS, initial_state=FilterState(0, 0))
    assert np.isfinite(path.loglik)
