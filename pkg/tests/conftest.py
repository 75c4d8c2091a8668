import numpy as np
import pytest

from parmon import AR, GARCH11, ChangeScenario, simulate

GARCH_THETA0 = np.array([0.01, 0.3, 0.2])
GARCH_THETA1 = np.array([0.05, 0.5, 0.2])


def garch_piecewise(thetas, breaks, length, seed, burn_in=500):
    """GARCH(1,1) path whose parameters switch after each index in ``breaks``."""
    z = np.random.default_rng(seed).standard_normal(length + burn_in)
    x = np.zeros(length + burn_in)
    a0, a1, b = thetas[0]
    h = a0 / (1.0 - a1 - b)
    for t in range(length + burn_in):
        a0, a1, b = thetas[int(np.searchsorted(breaks, t - burn_in, side="right"))]
        if t:
            h = a0 + a1 * x[t - 1] ** 2 + b * h
        x[t] = np.sqrt(h) * z[t]
    return x[burn_in:]


def central_gradient(func, theta, h):
    """Central differences of a vector-valued ``func`` (one column per coordinate)."""
    theta = np.asarray(theta, float)
    cols = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h * max(1.0, abs(theta[i]))
        cols.append((func(theta + e) - func(theta - e)) / (2 * e[i]))
    return np.stack(cols, axis=-1)


@pytest.fixture
def ar1():
    return AR(1, intercept=False)


@pytest.fixture
def garch():
    return GARCH11()


@pytest.fixture
def ar_path():
    return simulate(AR(1, intercept=False), ChangeScenario(np.array([0.2]), 500, 300), seed=11)


@pytest.fixture
def garch_path():
    return simulate(GARCH11(), ChangeScenario(GARCH_THETA0, 1000, 0), seed=5)


# Acceptance verdicts, echoed once more after the run so they survive output capture.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
