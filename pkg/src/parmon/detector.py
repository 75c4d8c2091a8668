"""Sequential detectors, scan sets and the stopping rule.

Three monitoring schemes share one interface (:class:`BaseMonitor`):

* :class:`Monitor`, the windowed detector
  ``C_{k,l} = sqrt(n) (k-l)/k ||G^{-1/2} F (theta(T_{l,k}) - theta(T_{1,n}))||``
  maximized over the scan set ``Pi_{n,k} = {n-v_n, n-v_n+u_n, ..., <= k-v_n}``,
* :class:`NaMonitor`, the history-anchored detector on ``T_{1,k}``,
* :class:`CusumMonitor`, the residual CUSUM for a mean shift.

Each monitor consumes one observation per :meth:`step` and never looks
ahead; the first ``k`` whose statistic crosses the boundary is the stopping
time ``tau``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import _kernels as K
from . import limits
from .errors import InvalidArgument, NumericalError
from .models import GARCH11, MeanShift, ModelSpec, as_series
from .qmle import EIG_FLOOR, FitResult, Window, fit

log = logging.getLogger(__name__)

TRAJECTORY_FIELDS = ("k", "C_k", "threshold", "crossed", "skipped_points")


@dataclass(frozen=True)
class ConstantBoundary:
    """Boundary ``b(u) = c`` (non-increasing with positive infimum)."""

    c: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise InvalidArgument("boundary constant must be positive and finite")

    def __call__(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.c)

    @property
    def inf_value(self) -> float:
        return self.c


@dataclass(frozen=True)
class ScanConfig:
    """Scan-set and stopping-rule settings.

    ``v_n = floor((log n)^v_exponent)``; ``u_n = floor(log n)`` unless
    ``u_step`` is given (``u_step=1`` scans the full set). ``boundary=None``
    uses the ``(1 - alpha)``-quantile of the detector's limit law.
    ``horizon=None`` monitors until the stream ends.
    """

    v_exponent: float = 1.5
    alpha: float = 0.05
    boundary: Optional[ConstantBoundary] = None
    horizon: Optional[int] = 500
    u_step: Optional[int] = None
    check_window_G: bool = True

    def __post_init__(self):
        if not 1.0 <= self.v_exponent <= 3.0:
            raise InvalidArgument("v_exponent must lie in [1, 3]")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgument("alpha must lie in (0, 1)")
        if self.horizon is not None and self.horizon < 0:
            raise InvalidArgument("horizon must be nonnegative")
        if self.u_step is not None and self.u_step < 1:
            raise InvalidArgument("u_step must be >= 1")

    @classmethod
    def for_model(cls, model: ModelSpec, **kw) -> "ScanConfig":
        """Defaults by family: exponent 2 for GARCH, 3/2 for linear and mean models."""
        kw.setdefault("v_exponent", 2.0 if isinstance(model, GARCH11) else 1.5)
        return cls(**kw)

    def v_n(self, n: int) -> int:
        return int(math.floor(math.log(n) ** self.v_exponent))

    def u_n(self, n: int) -> int:
        return self.u_step if self.u_step is not None else max(1, int(math.floor(math.log(n))))


def scan_points(n: int, k: int, v_n: int, u_n: int) -> np.ndarray:
    """Window starts ``{n - v_n + j u_n : j >= 0} ∩ (-inf, k - v_n]``."""
    if k <= n:
        raise InvalidArgument("scan points need k > n")
    if not 1 <= v_n < n:
        raise InvalidArgument("need 1 <= v_n < n")
    if u_n < 1:
        raise InvalidArgument("u_n must be >= 1")
    return np.arange(n - v_n, k - v_n + 1, u_n, dtype=np.int64)


def detector_stat(hist: FitResult, theta_win, n: int, k: int, ell: int) -> float:
    """``sqrt(n) (k - l)/k ||normalizer (theta_win - theta_hist)||``."""
    if not ell < k:
        raise InvalidArgument("need l < k")
    diff = np.asarray(theta_win, float) - hist.theta_hat
    return float(math.sqrt(n) * (k - ell) / k * np.linalg.norm(hist.normalizer @ diff))


def na_detector(hist: FitResult, theta_1k, n: int) -> float:
    """``sqrt(n) ||normalizer (theta(T_{1,k}) - theta(T_{1,n}))||``."""
    diff = np.asarray(theta_1k, float) - hist.theta_hat
    return float(math.sqrt(n) * np.linalg.norm(hist.normalizer @ diff))


def long_run_variance(residuals, method: str = "empirical", bandwidth: Optional[int] = None) -> float:
    """Long-run variance of ``residuals`` with ``1/n`` autocovariances.

    ``method="empirical"`` is the lag-0 autocovariance. ``"bartlett"`` adds
    ``2 sum_{h=1}^{q} (1 - h/(q+1)) gamma_h`` with ``q = bandwidth``
    (default ``floor(n^{1/3})``).
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        raise InvalidArgument("need at least two residuals")
    e = r - r.mean()
    n = e.size
    g0 = float(e @ e) / n
    if method == "empirical":
        return g0
    if method != "bartlett":
        raise InvalidArgument("method must be 'empirical' or 'bartlett'")
    q = int(math.floor(n ** (1.0 / 3.0))) if bandwidth is None else int(bandwidth)
    if q < 0:
        raise InvalidArgument("bandwidth must be nonnegative")
    s = g0
    for h in range(1, min(q, n - 1) + 1):
        s += 2.0 * (1.0 - h / (q + 1.0)) * float(e[h:] @ e[:-h]) / n
    return s


def cusum_detector(historical, stream_prefix, gamma: float = 0.0,
                   sigma: Optional[float] = None) -> float:
    """``|sum_{i=n+1}^k (X_i - mean_n)| / (sigma_n sqrt(n) (k/n) (1 - n/k)^gamma)``.

    The critical constant is compared against this value rather than
    entering the denominator.
    """
    if not 0.0 <= gamma < 0.5:
        raise InvalidArgument("gamma must satisfy 0 <= gamma < 1/2")
    h = as_series(historical)
    s = np.asarray(stream_prefix, dtype=float)
    if s.size < 1:
        raise InvalidArgument("need k > n")
    n = h.size
    k = n + s.size
    sig = math.sqrt(long_run_variance(h)) if sigma is None else float(sigma)
    if not sig > 0:
        raise InvalidArgument("long-run standard deviation must be positive")
    num = abs(float(np.sum(s - h.mean())))
    return num / (sig * math.sqrt(n) * (k / n) * (1.0 - n / k) ** gamma)


# ---------------------------------------------------------------------------
# monitoring state machines


@dataclass(frozen=True)
class MonitorOutcome:
    stopped: bool
    tau: Optional[int]
    delay: Optional[int]
    trajectory: list
    n: int
    threshold: float
    k_star: Optional[int] = None
    skipped_total: int = 0
    carried_steps: int = 0
    detector: str = "c"

    @property
    def crossed_before_change(self) -> bool:
        return self.stopped and self.k_star is not None and self.tau <= self.k_star


class BaseMonitor:
    """Owns the history fit, the growing buffer and the trajectory."""

    name = "?"

    def __init__(self, n: int, threshold: float, horizon: Optional[int]):
        self.n = n
        self.threshold = float(threshold)
        self.horizon = horizon
        self.k = n
        self.trajectory: list[dict] = []
        self.tau: Optional[int] = None
        self.skipped_total = 0
        self.carried_steps = 0

    @property
    def terminal(self) -> bool:
        return self.tau is not None or (self.horizon is not None and self.k >= self.n + self.horizon)

    def _append(self, x_k: float):
        if not math.isfinite(x_k):
            raise InvalidArgument(f"non-finite observation at k={self.k + 1}")
        if self.k >= self._buf.size:
            grow = np.zeros(max(2 * self._buf.size, 16))
            grow[:self._buf.size] = self._buf
            self._buf = grow
        self._buf[self.k] = x_k
        self.k += 1

    @property
    def series(self) -> np.ndarray:
        """Observations ``X_1..X_k`` seen so far (a view)."""
        return self._buf[:self.k]

    def _record(self, stat: float, ratio: float, skipped: int, **extra) -> dict:
        crossed = bool(ratio > 1.0)
        rec = {"k": self.k, "C_k": stat, "threshold": self.threshold, "crossed": crossed,
               "skipped_points": skipped}
        rec.update(extra)
        self.trajectory.append(rec)
        self.skipped_total += skipped
        if crossed:
            self.tau = self.k
        return rec

    def step(self, x_k: float) -> dict:
        if self.terminal:
            raise InvalidArgument("monitor is terminal; no further steps accepted")
        self._append(float(x_k))
        return self._update()

    def _update(self) -> dict:
        raise NotImplementedError

    def run(self, stream: Iterable[float], k_star: Optional[int] = None) -> MonitorOutcome:
        for x in stream:
            if self.terminal:
                break
            self.step(x)
        return self.outcome(k_star)

    def outcome(self, k_star: Optional[int] = None) -> MonitorOutcome:
        stopped = self.tau is not None
        delay = None
        if stopped and k_star is not None and self.tau > k_star:
            delay = self.tau - k_star
        return MonitorOutcome(stopped, self.tau, delay, list(self.trajectory), self.n,
                              self.threshold, k_star, self.skipped_total,
                              self.carried_steps, self.name)


def _history_fit(model: ModelSpec, x: np.ndarray) -> FitResult:
    hist = fit(model, x, Window(1, x.size))
    if not hist.converged:
        raise NumericalError("historical fit did not converge")
    if not hist.well_conditioned:
        raise NumericalError("historical G matrix is ill-conditioned")
    return hist


class Monitor(BaseMonitor):
    """Windowed detector ``C_k = max_{l in Pi_{n,k}} C_{k,l}`` with a constant boundary.

    Window fits at each ``k`` are warm-started from the same window start
    at ``k - 1`` (new starts borrow from their predecessor in the scan
    set). Points whose fit does not converge, or whose window ``G`` falls
    below the conditioning floor, are skipped and counted; if every point
    is skipped the previous ``C_k`` is carried forward and flagged.
    """

    name = "c"

    def __init__(self, model: ModelSpec, historical, cfg: Optional[ScanConfig] = None):
        x = as_series(historical)
        cfg = cfg or ScanConfig.for_model(model)
        n = x.size
        self.model = model.calibrate(x)
        self.cfg = cfg
        self.v_n = cfg.v_n(n)
        self.u_n = cfg.u_n(n)
        if not model.dim <= self.v_n < n:
            raise InvalidArgument(f"v_n={self.v_n} must satisfy d <= v_n < n (n={n})")
        self.hist = _history_fit(self.model, x)
        bound = cfg.boundary or ConstantBoundary(limits.quantile("Ud", model.dim, cfg.alpha))
        self.boundary = bound
        super().__init__(n, bound.inf_value, cfg.horizon)
        self._buf = np.zeros(n + (cfg.horizon or 256))
        self._buf[:n] = x
        self._solver = self.model.window_solver()
        self._warm: dict[int, np.ndarray] = {}
        self._last_stat = 0.0

    def scan(self) -> np.ndarray:
        return scan_points(self.n, self.k, self.v_n, self.u_n)

    def _windows_ok(self, thetas, pts) -> np.ndarray:
        """Conditioning check of each window ``G`` (same floor as the history fit)."""
        if not self.cfg.check_window_G or pts.size == 0:
            return np.ones(pts.size, dtype=bool)
        code = self.model._code
        if code >= 0:
            Gs = K.score_gram_many(code, thetas, self.series, pts, self.k, self.model._aux)
        else:
            Gs = np.stack([self.model.score_gram(th, self.series, int(lo), self.k)
                           for th, lo in zip(thetas, pts)])
        lam = np.linalg.eigvalsh(Gs)
        floor = EIG_FLOOR * np.trace(Gs, axis1=1, axis2=2) / Gs.shape[1]
        return (floor > 0) & (lam[:, 0] >= floor)

    def _update(self) -> dict:
        k, n = self.k, self.n
        pts = self.scan()
        inits = np.empty((pts.size, self.model.dim))
        for i, ell in enumerate(pts):
            prev = self._warm.get(int(ell))
            if prev is None and i > 0:
                prev = self._warm.get(int(pts[i - 1]))
            inits[i] = self.hist.theta_hat if prev is None else prev
        thetas, conv, _ = self._solver.solve_many(self.series, pts, k, inits)
        good = np.asarray(conv, bool) & np.all(np.isfinite(thetas), axis=1)
        good[good] = self._windows_ok(thetas[good], pts[good])
        skipped = int(pts.size - good.sum())
        for ell, th in zip(pts[good], thetas[good]):
            self._warm[int(ell)] = th
        arg = None
        best = best_ratio = 0.0
        if good.any():
            gp = pts[good]
            diffs = (thetas[good] - self.hist.theta_hat) @ self.hist.normalizer.T
            stats = math.sqrt(n) * (k - gp) / k * np.linalg.norm(diffs, axis=1)
            ratios = stats / self.boundary((k - gp) / n)
            j = int(np.argmax(ratios))
            best, best_ratio, arg = float(stats[j]), float(ratios[j]), int(gp[j])
        carried = False
        if arg is None:
            carried = True
            self.carried_steps += 1
            best = self._last_stat
            best_ratio = best / self.boundary.inf_value
            log.info("k=%d: all %d scan points skipped; carrying C_k forward", k, pts.size)
        elif skipped:
            log.debug("k=%d: skipped %d of %d scan points", k, skipped, pts.size)
        self._last_stat = best
        return self._record(best, best_ratio, skipped, argmax_l=arg, carried=carried)


class NaMonitor(BaseMonitor):
    """History-anchored detector on the growing window ``T_{1,k}``."""

    name = "d"

    def __init__(self, model: ModelSpec, historical, alpha: float = 0.05,
                 horizon: Optional[int] = 500, c: Optional[float] = None):
        x = as_series(historical)
        n = x.size
        self.model = model.calibrate(x)
        self.hist = _history_fit(self.model, x)
        thr = c if c is not None else limits.quantile("SupNorm", model.dim, alpha)
        super().__init__(n, thr, horizon)
        self._buf = np.zeros(n + (horizon or 256))
        self._buf[:n] = x
        self._solver = self.model.window_solver()
        self._theta = self.hist.theta_hat.copy()
        self._last = 0.0

    def _update(self) -> dict:
        th, conv, _ = self._solver.solve(self.series, 1, self.k, self._theta)
        skipped = 0
        if conv and np.all(np.isfinite(th)):
            self._theta = th
            self._last = na_detector(self.hist, th, self.n)
        else:
            skipped = 1
            self.carried_steps += 1
        return self._record(self._last, self._last / self.threshold, skipped)


class CusumMonitor(BaseMonitor):
    """Residual CUSUM for a mean shift, ``gamma`` in ``[0, 1/2)``.

    The long-run variance uses the Bartlett estimator when the noise is
    autoregressive and the sample variance otherwise, unless ``method``
    is given.
    """

    name = "q"

    def __init__(self, historical, gamma: float = 0.0, alpha: float = 0.05,
                 horizon: Optional[int] = 500, c: Optional[float] = None,
                 method: Optional[str] = None, model: Optional[ModelSpec] = None):
        if not 0.0 <= gamma < 0.5:
            raise InvalidArgument("gamma must satisfy 0 <= gamma < 1/2")
        x = as_series(historical)
        n = x.size
        if method is None:
            noise = getattr(model, "noise", None)
            method = "bartlett" if noise is not None and not isinstance(noise, GARCH11) else "empirical"
        self.sigma = math.sqrt(long_run_variance(x, method))
        if not self.sigma > 0:
            raise InvalidArgument("historical long-run variance is zero")
        self.mean = float(x.mean())
        self.gamma = gamma
        thr = c if c is not None else limits.quantile("SupWeighted", 1, alpha, gamma=gamma)
        super().__init__(n, thr, horizon)
        self._buf = np.zeros(n + (horizon or 256))
        self._buf[:n] = x
        self._csum = 0.0

    def _update(self) -> dict:
        n, k = self.n, self.k
        self._csum += self._buf[k - 1] - self.mean
        q = abs(self._csum) / (self.sigma * math.sqrt(n) * (k / n) * (1.0 - n / k) ** self.gamma)
        return self._record(q, q / self.threshold, 0)


def make_monitor(model: ModelSpec, historical, detector: str = "c",
                 cfg: Optional[ScanConfig] = None) -> BaseMonitor:
    cfg = cfg or ScanConfig.for_model(model)
    c = None if cfg.boundary is None else cfg.boundary.c
    if detector == "c":
        return Monitor(model, historical, cfg)
    if detector == "d":
        return NaMonitor(model, historical, cfg.alpha, cfg.horizon, c)
    if detector == "q":
        if not isinstance(model, MeanShift):
            raise InvalidArgument("the CUSUM detector monitors a mean; use a MeanShift model")
        return CusumMonitor(historical, 0.0, cfg.alpha, cfg.horizon, c, model=model)
    raise InvalidArgument("detector must be one of 'c', 'd', 'q'")


def monitor(model: ModelSpec, historical, stream: Iterable[float],
            cfg: Optional[ScanConfig] = None, detector: str = "c",
            k_star: Optional[int] = None) -> MonitorOutcome:
    """Run a detector over ``stream`` until it crosses or the horizon is reached."""
    return make_monitor(model, historical, detector, cfg).run(stream, k_star)
