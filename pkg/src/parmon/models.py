"""Model families: AR(p), GARCH(1,1) and a constant mean over stationary noise.

Every family exposes the same small interface used by the estimation and
monitoring layers:

* the admissible parameter box and a projection onto it,
* the truncated conditional mean and variance (observations before index 1
  are taken as zero),
* per-time quasi-likelihood contributions ``q_t`` with exact first and
  second derivatives,
* a window solver that maximizes the quasi-likelihood on ``T_{lo,hi}``,
* exact path simulation with an optional single change point.

Parameter vectors are plain ``float64`` arrays whose layout is fixed per
family (documented on each class).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import InvalidArgument, NumericalError

#: Armijo/Newton settings shared by all iterative window fits.
GTOL_REL = 1e-6
XTOL = 1e-8
MAXITER = 500


def as_series(values) -> np.ndarray:
    """Validate and copy an observation vector (index 1 is ``values[0]``)."""
    x = np.asarray(values, dtype=float)
    if sum(n > 1 for n in x.shape) > 1:
        raise InvalidArgument(f"series must be one-dimensional, got shape {x.shape}")
    x = x.reshape(-1)
    if x.size < 1:
        raise InvalidArgument("series must contain at least one observation")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("series contains non-finite values")
    return x


def _lags(x: np.ndarray, p: int, lo: int, hi: int) -> np.ndarray:
    """Matrix with rows ``(X_{t-1}, ..., X_{t-p})`` for ``t = lo..hi``; zero before index 1."""
    t = np.arange(lo, hi + 1)
    out = np.zeros((t.size, p))
    for j in range(1, p + 1):
        s = t - j
        ok = s >= 1
        out[ok, j - 1] = x[s[ok] - 1]
    return out


class ModelSpec(ABC):
    """Abstract model family with a compact parameter box."""

    family: str = ""

    @property
    @abstractmethod
    def dim(self) -> int:
        """Number of monitored parameters ``d``."""

    @property
    @abstractmethod
    def lower(self) -> np.ndarray: ...

    @property
    @abstractmethod
    def upper(self) -> np.ndarray: ...

    # -- parameter handling -------------------------------------------------

    def validate(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float).reshape(-1)
        if th.size != self.dim:
            raise InvalidArgument(
                f"{self.family}: expected {self.dim} parameters, got {th.size}")
        if not np.all(np.isfinite(th)):
            raise InvalidArgument("parameters must be finite")
        return th

    @abstractmethod
    def check_stationarity(self, theta) -> bool:
        """Whether ``theta`` lies in the family's stationarity domain."""

    def in_box(self, theta) -> bool:
        th = self.validate(theta)
        return bool(np.all(th >= self.lower) and np.all(th <= self.upper))

    def is_interior(self, theta, tol: float = 1e-6) -> bool:
        """Whether no constraint is active at ``theta`` (a genuine stationary point)."""
        th = self.validate(theta)
        lo, hi = self.lower, self.upper
        return bool(np.all(th > lo + tol * (1.0 + np.abs(lo)))
                    and np.all(th < hi - tol * (1.0 + np.abs(hi))))

    def project(self, theta) -> np.ndarray:
        """Euclidean-style projection onto the admissible set."""
        return K.project(self._code, self.validate(theta), self.lower, self.upper, self._aux)

    # -- likelihood pieces --------------------------------------------------

    @abstractmethod
    def conditional_moments(self, theta, past, t: int) -> tuple[float, float]:
        """Truncated conditional mean and variance of ``X_t`` given ``X_1..X_{t-1}``."""

    @abstractmethod
    def q_terms(self, theta, x: np.ndarray, lo: int, hi: int):
        """Values ``(m,)``, gradients ``(m, d)`` and Hessians ``(m, d, d)`` of ``q_t``, t in [lo, hi]."""

    def score_gram(self, theta, x: np.ndarray, lo: int, hi: int) -> np.ndarray:
        """Average score outer product over ``[lo, hi]`` (the window ``G``)."""
        g = self.q_terms(theta, x, lo, hi)[1]
        return g.T @ g / g.shape[0]

    def objective(self, theta, x: np.ndarray, lo: int, hi: int) -> float:
        """``sum_{t=lo}^{hi} q_t(theta)`` (equal to ``-2`` times the quasi-loglik)."""
        return float(K.objective(self._code, np.asarray(theta, float), x, lo, hi, self._aux, 0)[0])

    @abstractmethod
    def start(self, x: np.ndarray, lo: int, hi: int) -> np.ndarray:
        """Data-driven starting point for a window fit."""

    def jitter(self, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        span = np.minimum(self.upper - self.lower, 1.0)
        return self.project(theta + 0.2 * span * rng.uniform(-1.0, 1.0, self.dim))

    def window_solver(self) -> "WindowSolver":
        return NewtonSolver(self)

    def calibrate(self, x: np.ndarray) -> "ModelSpec":
        """Return a copy with any nuisance parameters estimated on ``x`` (identity by default)."""
        return self

    # -- simulation ---------------------------------------------------------

    @abstractmethod
    def _simulate(self, theta0, theta1, switch: int, z: np.ndarray) -> np.ndarray: ...

    # -- internals ----------------------------------------------------------

    _code: int = -1

    @property
    def _aux(self) -> np.ndarray:
        return np.zeros(1)

    def __repr__(self) -> str:
        return self.family


# ---------------------------------------------------------------------------


class AR(ModelSpec):
    """Autoregression ``X_t = phi_0 + sum_j phi_j X_{t-j} + xi_t`` with least-squares criterion.

    Layout: ``(phi_0, phi_1, ..., phi_p)``; without intercept ``(phi_1, ..., phi_p)``.
    ``q_t = (X_t - phi_0 - sum_j phi_j X_{t-j})^2`` (unit conditional variance).
    """

    _code = K.AR

    def __init__(self, p: int = 1, intercept: bool = True, intercept_bound: float = 1e3,
                 radius: float = 1.0 - 1e-6):
        if int(p) != p or p < 0:
            raise InvalidArgument("AR order must be a nonnegative integer")
        if not intercept and p == 0:
            raise InvalidArgument("AR(0) without intercept has no parameters")
        self.p = int(p)
        self.intercept = bool(intercept)
        self.radius = float(radius)
        self.intercept_bound = float(intercept_bound)
        self.family = f"AR({self.p})" + ("" if intercept else "-0")

    @property
    def dim(self) -> int:
        return self.p + int(self.intercept)

    @property
    def lower(self) -> np.ndarray:
        lo = -np.ones(self.dim)
        if self.intercept:
            lo[0] = -self.intercept_bound
        return lo

    @property
    def upper(self) -> np.ndarray:
        return -self.lower

    @property
    def _aux(self) -> np.ndarray:
        return np.array([self.p, float(self.intercept), self.radius])

    def split(self, theta):
        th = self.validate(theta)
        if self.intercept:
            return th[0], th[1:]
        return 0.0, th

    def check_stationarity(self, theta) -> bool:
        _, phi = self.split(theta)
        return bool(np.sum(np.abs(phi)) < 1.0)

    def is_interior(self, theta, tol: float = 1e-6) -> bool:
        _, phi = self.split(theta)
        return super().is_interior(theta, tol) and float(np.sum(np.abs(phi))) < self.radius - tol

    def conditional_moments(self, theta, past, t):
        c, phi = self.split(theta)
        x = np.asarray(past, dtype=float)
        if not 1 <= t <= x.size + 1:
            raise InvalidArgument("t must satisfy 1 <= t <= len(past) + 1")
        f = c
        for j in range(1, min(self.p, t - 1) + 1):
            f += phi[j - 1] * x[t - j - 1]
        return float(f), 1.0

    def design(self, x, lo, hi):
        Z = _lags(x, self.p, lo, hi)
        if self.intercept:
            Z = np.hstack([np.ones((Z.shape[0], 1)), Z])
        return Z

    def q_terms(self, theta, x, lo, hi):
        th = self.validate(theta)
        Z = self.design(x, lo, hi)
        r = x[lo - 1:hi] - Z @ th
        grad = -2.0 * r[:, None] * Z
        hess = 2.0 * Z[:, :, None] * Z[:, None, :]
        return r * r, grad, hess

    def start(self, x, lo, hi):
        return self.project(np.zeros(self.dim))

    def window_solver(self):
        return ARSolver(self)

    def _simulate(self, theta0, theta1, switch, z):
        def full(th):
            c, phi = self.split(th)
            return np.concatenate([[c], phi])
        a0, a1 = full(theta0), full(theta1)
        denom = 1.0 - np.sum(a0[1:])
        mean0 = a0[0] / denom if denom != 0 else 0.0
        return K.simulate_ar(a0, a1, z, switch, mean0)


class GARCH11(ModelSpec):
    """GARCH(1,1) ``X_t = sigma_t xi_t``, ``sigma_t^2 = alpha_0 + alpha_1 X_{t-1}^2 + beta_1 sigma_{t-1}^2``.

    Layout: ``(alpha_0, alpha_1, beta_1)``. The quasi-likelihood uses the
    truncated ARCH(infinity) variance
    ``h_t = alpha_0/(1-beta_1) + alpha_1 sum_{j=1}^{t-1} beta_1^{j-1} X_{t-j}^2``.
    """

    family = "GARCH(1,1)"
    _code = K.GARCH

    def __init__(self, alpha0_bounds=(1e-6, 10.0), coef_upper: float = 0.999,
                 cap: float = 0.9999):
        self._lo = np.array([alpha0_bounds[0], 0.0, 0.0])
        self._hi = np.array([alpha0_bounds[1], coef_upper, coef_upper])
        self.cap = float(cap)

    @property
    def dim(self):
        return 3

    @property
    def lower(self):
        return self._lo.copy()

    @property
    def upper(self):
        return self._hi.copy()

    @property
    def _aux(self):
        return np.array([self.cap])

    def check_stationarity(self, theta) -> bool:
        a0, a1, b = self.validate(theta)
        return bool(a0 > 0 and a1 >= 0 and b >= 0 and a1 + b < 1.0)

    def is_interior(self, theta, tol: float = 1e-6) -> bool:
        th = self.validate(theta)
        return super().is_interior(th, tol) and th[1] + th[2] < self.cap - tol

    def conditional_moments(self, theta, past, t):
        a0, a1, b = self.validate(theta)
        x = np.asarray(past, dtype=float)
        if not 1 <= t <= x.size + 1:
            raise InvalidArgument("t must satisfy 1 <= t <= len(past) + 1")
        s = 0.0
        w = 1.0
        for j in range(1, t):
            s += w * x[t - j - 1] ** 2
            w *= b
        h = a0 / (1.0 - b) + a1 * s
        if not h > 0:
            raise NumericalError("nonpositive conditional variance")
        return 0.0, float(h)

    def q_terms(self, theta, x, lo, hi):
        th = self.validate(theta)
        return K.garch_terms(th, x, lo, hi, 1)

    def score_gram(self, theta, x, lo, hi):
        th = self.validate(theta)
        g = K.garch_terms(th, x, lo, hi, K.lookback_start(lo, th[2]))[1]
        return g.T @ g / g.shape[0]

    def start(self, x, lo, hi):
        seg = x[lo - 1:hi]
        var = max(float(np.mean(seg * seg)), 1e-8)
        best, best_f = None, np.inf
        for a1, b in ((0.1, 0.8), (0.3, 0.3), (0.05, 0.9), (0.2, 0.6), (0.1, 0.1)):
            th = self.project(np.array([var * (1.0 - a1 - b), a1, b]))
            f = self.objective(th, x, lo, hi)
            if f < best_f:
                best, best_f = th, f
        return best

    def jitter(self, theta, rng):
        a0, a1, b = theta
        cand = np.array([a0 * math.exp(rng.uniform(-0.7, 0.7)),
                         a1 + rng.uniform(-0.15, 0.15), b + rng.uniform(-0.3, 0.3)])
        return self.project(cand)

    def _simulate(self, theta0, theta1, switch, z):
        return K.simulate_garch(np.asarray(theta0, float), np.asarray(theta1, float), z, switch)


class MeanShift(ModelSpec):
    """Constant mean over stationary noise: ``X_t = mu + eps_t``.

    Only ``mu`` is a monitored parameter (``d = 1``). The noise is white
    (``noise=None``), a zero-mean ``AR(p)`` or a ``GARCH11``; its parameters
    ``noise_theta`` are held fixed during fits. They can be supplied or
    estimated from demeaned history with :meth:`calibrate`.
    """

    def __init__(self, noise: Optional[ModelSpec] = None, noise_theta=None,
                 mean_bound: float = 1e3):
        if noise is not None and not isinstance(noise, (AR, GARCH11)):
            raise InvalidArgument("noise must be None, an AR or a GARCH11 model")
        if isinstance(noise, AR) and noise.intercept:
            noise = AR(noise.p, intercept=False, radius=noise.radius)
        self.noise = noise
        self.mean_bound = float(mean_bound)
        self.noise_theta = None if noise_theta is None or noise is None \
            else noise.validate(noise_theta)
        name = "white" if noise is None else noise.family
        self.family = f"MeanShift[{name}]"
        if isinstance(noise, GARCH11):
            self._code = K.MEAN_GARCH

    @property
    def dim(self):
        return 1

    @property
    def lower(self):
        return np.array([-self.mean_bound])

    @property
    def upper(self):
        return np.array([self.mean_bound])

    @property
    def _aux(self):
        if isinstance(self.noise, GARCH11):
            return self._noise().copy()
        return np.zeros(1)

    def _noise(self) -> np.ndarray:
        if self.noise is None:
            return np.zeros(0)
        if self.noise_theta is None:
            raise InvalidArgument(
                f"{self.family}: noise parameters unknown; call calibrate() first")
        return self.noise_theta

    def project(self, theta):
        return np.clip(self.validate(theta), self.lower, self.upper)

    def check_stationarity(self, theta) -> bool:
        self.validate(theta)
        if self.noise is None:
            return True
        return self.noise.check_stationarity(self._noise())

    def calibrate(self, x):
        """Estimate the noise parameters on the demeaned sample ``x``."""
        if self.noise is None or self.noise_theta is not None:
            return self
        from .qmle import Window, fit  # local import: qmle depends on models
        x = as_series(x)
        resid = x - x.mean()
        res = fit(self.noise, resid, Window(1, resid.size))
        th = res.theta_hat
        if not self.noise.check_stationarity(th):
            th = self.noise.project(th)
        return MeanShift(self.noise, th, self.mean_bound)

    def ar_pieces(self, x, lo, hi):
        """Filtered data ``y_t`` and mean loadings ``c_t`` for AR or white noise."""
        y = x[lo - 1:hi].copy()
        c = np.ones(hi - lo + 1)
        if isinstance(self.noise, AR):
            phi = self._noise()
            y -= _lags(x, self.noise.p, lo, hi) @ phi
            t = np.arange(lo, hi + 1)
            for j in range(1, self.noise.p + 1):
                c -= phi[j - 1] * (t - j >= 1)
        return y, c

    def conditional_moments(self, theta, past, t):
        (mu,) = self.validate(theta)
        x = np.asarray(past, dtype=float)
        if not 1 <= t <= x.size + 1:
            raise InvalidArgument("t must satisfy 1 <= t <= len(past) + 1")
        if self.noise is None:
            return float(mu), 1.0
        f, h = self.noise.conditional_moments(self._noise(), x - mu, t)
        return float(mu + f), float(h)

    def q_terms(self, theta, x, lo, hi):
        (mu,) = self.validate(theta)
        if isinstance(self.noise, GARCH11):
            a0, a1, b = self._noise()
            q, g, h = K.mean_garch_terms(mu, x, lo, hi, 1, a0, a1, b)
        else:
            y, c = self.ar_pieces(x, lo, hi)
            r = y - mu * c
            q, g, h = r * r, -2.0 * c * r, 2.0 * c * c
        return q, g[:, None], h[:, None, None]

    def score_gram(self, theta, x, lo, hi):
        if isinstance(self.noise, GARCH11):
            a0, a1, b = self._noise()
            g = K.mean_garch_terms(self.validate(theta)[0], x, lo, hi,
                                   K.lookback_start(lo, b), a0, a1, b)[1]
            return np.array([[g @ g / g.size]])
        return super().score_gram(theta, x, lo, hi)

    def objective(self, theta, x, lo, hi):
        if isinstance(self.noise, GARCH11):
            return super().objective(theta, x, lo, hi)
        return float(np.sum(self.q_terms(theta, x, lo, hi)[0]))

    def start(self, x, lo, hi):
        return self.project(np.array([np.mean(x[lo - 1:hi])]))

    def jitter(self, theta, rng):
        seg_sd = 1.0
        return self.project(theta + 0.5 * seg_sd * rng.standard_normal(1))

    def window_solver(self):
        if isinstance(self.noise, GARCH11):
            self._noise()
            return NewtonSolver(self)
        return MeanSolver(self)

    def _simulate(self, theta0, theta1, switch, z):
        noise_th = self._noise()
        if self.noise is None:
            eps = z.copy()
        else:
            eps = self.noise._simulate(noise_th, noise_th, z.size, z)
        mu = np.where(np.arange(z.size) < switch, theta0[0], theta1[0])
        return mu + eps


# ---------------------------------------------------------------------------
# window solvers


class WindowSolver(ABC):
    """Maximizes the quasi-likelihood on windows ``[lo, hi]`` of a growing series."""

    def __init__(self, model: ModelSpec):
        self.model = model

    @abstractmethod
    def solve(self, x, lo, hi, init=None) -> tuple[np.ndarray, bool, int]: ...

    def solve_many(self, x, los, hi, inits=None):
        """Fit every window ``[lo_i, hi]``; returns ``(thetas, converged, iterations)``."""
        los = np.asarray(los, dtype=np.int64)
        out = np.empty((los.size, self.model.dim))
        conv = np.empty(los.size, dtype=bool)
        its = np.empty(los.size, dtype=np.int64)
        for i, lo in enumerate(los):
            init = None if inits is None else inits[i]
            out[i], conv[i], its[i] = self.solve(x, int(lo), hi, init)
        return out, conv, its


class NewtonSolver(WindowSolver):
    """Compiled projected-Newton fits for families without a closed form."""

    def __init__(self, model):
        super().__init__(model)
        self._code = model._code
        self._aux = model._aux
        self._lower = model.lower
        self._upper = model.upper

    def solve(self, x, lo, hi, init=None):
        if init is None:
            init = self.model.start(x, lo, hi)
        th, conv, it, _ = K.newton(self._code, x, lo, hi, np.asarray(init, float),
                                   self._lower, self._upper, self._aux,
                                   MAXITER, GTOL_REL, XTOL)
        return th, bool(conv), int(it)

    def solve_many(self, x, los, hi, inits=None):
        los = np.asarray(los, dtype=np.int64)
        if inits is None:
            inits = np.array([self.model.start(x, int(lo), hi) for lo in los])
        if los.size == 0:
            return np.empty((0, self.model.dim)), np.empty(0, bool), np.empty(0, np.int64)
        return K.newton_many(self._code, x, los, hi, np.ascontiguousarray(inits, float),
                             self._lower, self._upper, self._aux, MAXITER, GTOL_REL, XTOL)


class _PrefixSolver(WindowSolver):
    """Closed-form least squares through cumulative cross-products.

    The cumulative sums are extended incrementally when the series grows,
    which keeps per-step cost independent of the history length.
    """

    def __init__(self, model):
        super().__init__(model)
        self._x = np.zeros(0)
        d = model.dim
        self._Pzz = np.zeros((1, d, d))
        self._Pzy = np.zeros((1, d))
        self._bounds = (model.lower, model.upper)

    @abstractmethod
    def _rows(self, x, lo, hi) -> tuple[np.ndarray, np.ndarray]:
        """Regressors ``(m, d)`` and responses ``(m,)`` for ``t = lo..hi``."""

    def _sync(self, x):
        m = self._x.size
        if x.size < m or not np.array_equal(x[:m], self._x):
            m = 0
            self._Pzz = self._Pzz[:1]
            self._Pzy = self._Pzy[:1]
        if x.size > m:
            Z, y = self._rows(x, m + 1, x.size)
            zz = np.cumsum(Z[:, :, None] * Z[:, None, :], axis=0) + self._Pzz[-1]
            zy = np.cumsum(Z * y[:, None], axis=0) + self._Pzy[-1]
            self._Pzz = np.concatenate([self._Pzz, zz])
            self._Pzy = np.concatenate([self._Pzy, zy])
        self._x = x.copy()

    def _newton(self, x, lo, hi, init):
        th, conv, it, _ = K.newton(self.model._code, x, lo, hi,
                                   np.asarray(init, float), self.model.lower,
                                   self.model.upper, self.model._aux,
                                   MAXITER, GTOL_REL, XTOL)
        return th, bool(conv), int(it)

    def _feasible(self, thetas: np.ndarray) -> np.ndarray:
        lo, hi = self._bounds
        return np.all((thetas >= lo) & (thetas <= hi), axis=1)

    def solve_many(self, x, los, hi, inits=None):
        los = np.asarray(los, dtype=np.int64)
        d = self.model.dim
        if los.size == 0:
            return np.empty((0, d)), np.empty(0, bool), np.empty(0, np.int64)
        self._sync(x)
        A = self._Pzz[hi] - self._Pzz[los - 1]
        b = self._Pzy[hi] - self._Pzy[los - 1]
        out = np.empty((los.size, d))
        conv = np.ones(los.size, dtype=bool)
        its = np.ones(los.size, dtype=np.int64)
        scale = np.abs(A).reshape(los.size, -1).max(axis=1)
        eig_min = np.linalg.eigvalsh(A)[:, 0] if d > 1 else A[:, 0, 0]
        regular = eig_min > 1e-12 * np.maximum(scale, 1e-300)
        if np.any(regular):
            out[regular] = np.linalg.solve(A[regular], b[regular][..., None])[..., 0]
        for i in np.flatnonzero(~regular):
            out[i] = np.linalg.lstsq(A[i], b[i], rcond=None)[0]
            conv[i] = False
        for i in np.flatnonzero(~self._feasible(out)):
            out[i], conv[i], its[i] = self._newton(x, int(los[i]), hi, self.model.project(out[i]))
        return out, conv, its

    def solve(self, x, lo, hi, init=None):
        th, conv, its = self.solve_many(x, np.array([lo]), hi)
        return th[0], bool(conv[0]), int(its[0])


class ARSolver(_PrefixSolver):
    def _rows(self, x, lo, hi):
        return self.model.design(x, lo, hi), x[lo - 1:hi]

    def _feasible(self, thetas):
        phi = thetas[:, int(self.model.intercept):]
        return super()._feasible(thetas) & (np.abs(phi).sum(axis=1) <= self.model.radius)


class MeanSolver(_PrefixSolver):
    def _rows(self, x, lo, hi):
        y, c = self.model.ar_pieces(x, lo, hi)
        return c[:, None], y

    def _newton(self, x, lo, hi, init):
        return self.model.project(init), True, 1


# ---------------------------------------------------------------------------
# scenarios and simulation


@dataclass(frozen=True)
class ChangeScenario:
    """Pre-/post-change parameters and timing.

    ``theta1`` and ``k_star`` are both present (alternative) or both absent
    (null). ``k_star`` is the last index generated under ``theta0``.
    """

    theta0: np.ndarray
    n: int
    horizon: int
    theta1: Optional[np.ndarray] = None
    k_star: Optional[int] = None

    def __post_init__(self):
        if (self.theta1 is None) != (self.k_star is None):
            raise InvalidArgument("theta1 and k_star must be given together")
        if self.n < 1 or self.horizon < 0:
            raise InvalidArgument("n must be >= 1 and horizon >= 0")
        if self.k_star is not None and self.k_star <= self.n:
            raise InvalidArgument("k_star must exceed n")

    @property
    def length(self) -> int:
        return self.n + self.horizon


def simulate(model: ModelSpec, scenario: ChangeScenario, seed: int, burn_in: int = 500) -> np.ndarray:
    """Simulate ``n + horizon`` observations with standard normal innovations.

    Innovations are drawn once from ``numpy.random.default_rng(seed)``, so a
    scenario with ``theta1 == theta0`` reproduces the null path exactly. The
    post-change recursion continues from the pre-change state.
    """
    if burn_in < 0:
        raise InvalidArgument("burn_in must be >= 0")
    th0 = model.validate(scenario.theta0)
    th1 = th0 if scenario.theta1 is None else model.validate(scenario.theta1)
    for th in (th0, th1):
        if not model.check_stationarity(th):
            raise InvalidArgument(f"{model.family}: parameter {th} is not stationary")
    total = burn_in + scenario.length
    z = np.random.default_rng(seed).standard_normal(total)
    switch = total if scenario.k_star is None else burn_in + scenario.k_star
    path = model._simulate(th0, th1, switch, z)
    return path[burn_in:]
