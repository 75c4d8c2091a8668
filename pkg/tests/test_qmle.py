import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parmon import AR, GARCH11, ChangeScenario, InvalidArgument, MeanShift, Window, fit, loglik, q_term, simulate
from parmon.qmle import estimate_F, estimate_G, inv_sqrt, inv_sqrt_checked, sandwich, standardize

from conftest import GARCH_THETA0, central_gradient


def test_window_validation():
    with pytest.raises(InvalidArgument):
        Window(0, 5)
    with pytest.raises(InvalidArgument):
        Window(5, 4)
    assert Window(3, 7).card == 5


def test_loglik_is_minus_half_sum_of_q(garch, garch_path):
    th = np.array([0.02, 0.2, 0.3])
    w = Window(10, 200)
    total = sum(q_term(garch, th, garch_path, t, derivatives=0).value for t in range(10, 201))
    assert loglik(garch, th, garch_path, w) == pytest.approx(-0.5 * total, rel=1e-12)


def test_q_term_rejects_out_of_range(garch, garch_path):
    with pytest.raises(InvalidArgument):
        q_term(garch, GARCH_THETA0, garch_path, 0)


@pytest.mark.parametrize("model,theta", [
    (AR(1, intercept=False), [0.3]),
    (AR(2), [0.1, 0.4, -0.2]),
    (GARCH11(), [0.02, 0.25, 0.45]),
    (MeanShift(), [0.3]),
    (MeanShift(AR(1, intercept=False), [0.3]), [0.2]),
    (MeanShift(GARCH11(), [0.02, 0.2, 0.3]), [0.1]),
])
def test_derivatives_match_central_differences(model, theta, garch_path):
    x = garch_path[:300] * 3.0
    lo, hi = 5, 300
    th = np.array(theta, float)
    _, g, H = model.q_terms(th, x, lo, hi)
    g_fd = central_gradient(lambda v: model.q_terms(v, x, lo, hi)[0], th, 1e-6)
    H_fd = central_gradient(lambda v: model.q_terms(v, x, lo, hi)[1], th, 1e-6)
    assert np.max(np.abs(g - g_fd)) <= 1e-5 * np.max(np.abs(g))
    assert np.max(np.abs(H - H_fd)) <= 1e-4 * np.max(np.abs(H))


def test_ar_fit_is_ordinary_least_squares():
    m = AR(2)
    x = simulate(m, ChangeScenario(np.array([0.5, 0.3, -0.2]), 400, 0), seed=1)
    res = fit(m, x, Window(1, 400))
    Z = m.design(x, 1, 400)
    ols = np.linalg.lstsq(Z, x, rcond=None)[0]
    np.testing.assert_allclose(res.theta_hat, ols, atol=1e-8)
    assert res.converged and res.well_conditioned


def test_garch_fit_recovers_parameters():
    g = GARCH11()
    th = np.array([0.05, 0.15, 0.6])
    x = simulate(g, ChangeScenario(th, 6000, 0), seed=8)
    res = fit(g, x, Window(1, 6000))
    assert res.converged
    assert np.all(np.abs(res.theta_hat - th) <= [0.02, 0.05, 0.1])


def test_fit_is_deterministic(garch, garch_path):
    a = fit(garch, garch_path, Window(1, 400))
    b = fit(garch, garch_path, Window(1, 400))
    np.testing.assert_array_equal(a.theta_hat, b.theta_hat)


def test_fit_rejects_short_or_overlong_windows(garch, garch_path):
    with pytest.raises(InvalidArgument):
        fit(garch, garch_path, Window(1, 3))
    with pytest.raises(InvalidArgument):
        fit(garch, garch_path, Window(1, garch_path.size + 1))


def test_fit_populates_sandwich(garch, garch_path):
    res = fit(garch, garch_path, Window(1, 1000))
    G, F = sandwich(garch, res.theta_hat, garch_path, Window(1, 1000))
    np.testing.assert_allclose(res.G_hat, G)
    np.testing.assert_allclose(res.F_hat, F)
    np.testing.assert_allclose(res.normalizer, inv_sqrt(G) @ F)
    np.testing.assert_allclose(estimate_G(garch, res.theta_hat, garch_path, Window(1, 1000)), G)
    np.testing.assert_allclose(estimate_F(garch, res.theta_hat, garch_path, Window(1, 1000)), F)
    assert np.all(np.linalg.eigvalsh(G) > 0)


def test_gaussian_garch_information_identity(garch):
    """Under normal innovations G = 2F for the variance criterion."""
    x = simulate(garch, ChangeScenario(GARCH_THETA0, 40_000, 0), seed=3)
    G, F = sandwich(garch, GARCH_THETA0, x, Window(1, 40_000))
    np.testing.assert_allclose(G, 2 * F, rtol=0.1, atol=0.05 * np.abs(G).max())


def test_ar_sandwich_closed_form(ar1):
    x = simulate(ar1, ChangeScenario(np.array([0.2]), 50_000, 0), seed=4)
    G, F, N, ok = standardize(ar1, [0.2], x, Window(1, 50_000))
    gamma0 = 1 / (1 - 0.04)
    assert ok
    assert F[0, 0] == pytest.approx(2 * gamma0, rel=0.03)
    assert G[0, 0] == pytest.approx(4 * gamma0, rel=0.03)
    assert N[0, 0] == pytest.approx(np.sqrt(gamma0), rel=0.03)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_inv_sqrt_whitens_positive_definite_matrices(d, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    S = A @ A.T + 0.1 * np.eye(d)
    R, ok = inv_sqrt_checked(S)
    assert ok
    np.testing.assert_allclose(R @ S @ R, np.eye(d), atol=1e-8)
    np.testing.assert_allclose(R, R.T)


def test_inv_sqrt_flags_singular_matrix():
    _, ok = inv_sqrt_checked(np.diag([1.0, 0.0]))
    assert not ok
    _, ok = inv_sqrt_checked(np.zeros((2, 2)))
    assert not ok
