import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parmon import AR, ChangeScenario, GARCH11, InvalidArgument, MeanShift, Window, fit, simulate
from parmon import limits
from parmon.detector import (ConstantBoundary, CusumMonitor, Monitor, NaMonitor, ScanConfig,
                             cusum_detector, detector_stat, long_run_variance, make_monitor,
                             monitor, na_detector, scan_points)


def brute_force_alarm(x, n, c):
    """Windowed AR(1) detector computed from scratch with plain least squares."""
    lag = np.concatenate([[0.0], x[:-1]])
    ph = (x[:n] @ lag[:n]) / (lag[:n] @ lag[:n])
    e = x[:n] - ph * lag[:n]
    N = np.mean(2 * lag[:n] ** 2) / math.sqrt(np.mean((2 * e * lag[:n]) ** 2))
    vn, un = int(math.log(n) ** 1.5), int(math.log(n))
    for k in range(n + 1, x.size + 1):
        best = 0.0
        for ell in range(n - vn, k - vn + 1, un):
            s = slice(ell - 1, k)
            pw = (x[s] @ lag[s]) / (lag[s] @ lag[s])
            best = max(best, math.sqrt(n) * (k - ell) / k * abs(N * (pw - ph)))
        if best > c:
            return k
    return None


def test_scan_points_grid():
    pts = scan_points(500, 501, 15, 6)
    np.testing.assert_array_equal(pts, [485])
    pts = scan_points(500, 600, 15, 6)
    assert pts[0] == 485 and pts[-1] <= 585 and np.all(np.diff(pts) == 6)
    with pytest.raises(InvalidArgument):
        scan_points(500, 500, 15, 6)
    with pytest.raises(InvalidArgument):
        scan_points(500, 510, 500, 6)


def test_scan_config_defaults():
    assert ScanConfig.for_model(GARCH11()).v_exponent == 2.0
    assert ScanConfig.for_model(AR(1)).v_exponent == 1.5
    cfg = ScanConfig()
    assert cfg.v_n(500) == 15 and cfg.u_n(500) == 6
    assert ScanConfig(u_step=1).u_n(500) == 1
    with pytest.raises(InvalidArgument):
        ScanConfig(v_exponent=4)
    with pytest.raises(InvalidArgument):
        ScanConfig(alpha=0)


def test_boundary_validation():
    assert ConstantBoundary(2.0)(np.array([0.1, 0.5]))[1] == 2.0
    with pytest.raises(InvalidArgument):
        ConstantBoundary(0.0)


def test_detector_arithmetic(ar_path, ar1):
    hist = fit(ar1, ar_path, Window(1, 500))
    th = hist.theta_hat + 0.1
    val = detector_stat(hist, th, 500, 600, 550)
    assert val == pytest.approx(math.sqrt(500) * 50 / 600 * abs(hist.normalizer[0, 0] * 0.1))
    assert na_detector(hist, th, 500) == pytest.approx(math.sqrt(500) * abs(hist.normalizer[0, 0] * 0.1))
    assert detector_stat(hist, hist.theta_hat, 500, 600, 550) == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_monitor_matches_brute_force(seed, ar1):
    x = simulate(ar1, ChangeScenario(np.array([0.2]), 500, 500, np.array([-0.5]), 550), seed)
    out = Monitor(ar1, x[:500], ScanConfig()).run(x[500:], 550)
    assert out.tau == brute_force_alarm(x, 500, limits.quantile("Ud", 1, 0.05))
    assert out.delay == out.tau - 550


@settings(max_examples=5, deadline=None)
@given(st.integers(520, 620), st.integers(0, 1000))
def test_monitor_never_looks_ahead(cut, seed):
    m = AR(1, intercept=False)
    x = simulate(m, ChangeScenario(np.array([0.2]), 500, 150), 42)
    y = x.copy()
    y[cut:] = np.random.default_rng(seed).standard_normal(y.size - cut) * 3
    cfg = ScanConfig(boundary=ConstantBoundary(1e6), horizon=150)
    a = Monitor(m, x[:500], cfg).run(x[500:]).trajectory
    b = Monitor(m, y[:500], cfg).run(y[500:]).trajectory
    upto = cut - 500
    assert [r["C_k"] for r in a[:upto]] == [r["C_k"] for r in b[:upto]]


def test_monitor_stops_at_horizon_and_refuses_more_steps(ar1, ar_path):
    mon = Monitor(ar1, ar_path[:500], ScanConfig(horizon=20, boundary=ConstantBoundary(1e6)))
    out = mon.run(ar_path[500:])
    assert not out.stopped and len(out.trajectory) == 20 and mon.terminal
    with pytest.raises(InvalidArgument):
        mon.step(0.0)


def test_trajectory_records_have_export_fields(ar1, ar_path):
    out = monitor(ar1, ar_path[:500], ar_path[500:], ScanConfig(horizon=30))
    rec = out.trajectory[0]
    for key in ("k", "C_k", "threshold", "crossed", "skipped_points"):
        assert key in rec
    assert [r["k"] for r in out.trajectory] == list(range(501, 531))


def test_monitor_rejects_non_finite_observation(ar1, ar_path):
    mon = Monitor(ar1, ar_path[:500])
    with pytest.raises(InvalidArgument):
        mon.step(float("nan"))


def test_h0_monitor_has_no_alarm(ar1, ar_path):
    out = monitor(ar1, ar_path[:500], ar_path[500:], ScanConfig(horizon=300))
    assert not out.stopped and out.tau is None


def test_na_monitor_uses_growing_window(ar1):
    x = simulate(ar1, ChangeScenario(np.array([0.2]), 500, 60), 3)
    mon = NaMonitor(ar1, x[:500], horizon=60)
    out = mon.run(x[500:])
    k = 530
    th = fit(ar1, x, Window(1, k)).theta_hat
    assert out.trajectory[k - 501]["C_k"] == pytest.approx(na_detector(mon.hist, th, 500), rel=1e-8)


def test_cusum_monitor_matches_closed_form():
    m = MeanShift()
    x = simulate(m, ChangeScenario(np.array([0.0]), 300, 50), 5)
    mon = CusumMonitor(x[:300], horizon=50, model=m)
    out = mon.run(x[300:])
    for k in (301, 320, 350):
        assert out.trajectory[k - 301]["C_k"] == pytest.approx(cusum_detector(x[:300], x[300:k]), rel=1e-10)


def test_cusum_gamma_validation():
    with pytest.raises(InvalidArgument):
        cusum_detector(np.ones(10) + np.arange(10), [1.0], gamma=0.5)


def test_long_run_variance_of_ar_noise():
    m = AR(1, intercept=False)
    x = simulate(m, ChangeScenario(np.array([0.5]), 40_000, 0), 1)
    assert long_run_variance(x, "bartlett") == pytest.approx(1 / (1 - 0.5) ** 2, rel=0.1)
    assert long_run_variance(x) == pytest.approx(1 / (1 - 0.25), rel=0.05)
    assert long_run_variance(x, "bartlett", bandwidth=0) == pytest.approx(long_run_variance(x))
    with pytest.raises(InvalidArgument):
        long_run_variance(x, "parzen")


def test_make_monitor_dispatch(ar1, ar_path):
    assert isinstance(make_monitor(ar1, ar_path[:500], "c"), Monitor)
    assert isinstance(make_monitor(ar1, ar_path[:500], "d"), NaMonitor)
    with pytest.raises(InvalidArgument):
        make_monitor(ar1, ar_path[:500], "q")
    with pytest.raises(InvalidArgument):
        make_monitor(ar1, ar_path[:500], "z")


def test_cusum_uses_bartlett_for_autoregressive_noise():
    m = MeanShift(AR(1, intercept=False), [0.5])
    x = simulate(m, ChangeScenario(np.array([0.0]), 2000, 0), 2)
    mon = make_monitor(m, x, "q")
    assert mon.sigma ** 2 == pytest.approx(long_run_variance(x, "bartlett"))


def test_history_too_short_for_scan_offset(ar1):
    with pytest.raises(InvalidArgument):
        Monitor(ar1, np.random.default_rng(0).standard_normal(2), ScanConfig())
