"""Retrospective break tests and the monitor, locate, restart segmenter.

For a sample ``X_1..X_n`` and ``v_n <= k <= n - v_n`` let

``Sigma_{n,k} = (k/n) F_1 G_1^{-1} F_1 + ((n-k)/n) F_2 G_2^{-1} F_2``

with ``(G_1, F_1)`` from ``T_{1,k}`` and ``(G_2, F_2)`` from ``T_{k,n}``
(a side whose ``G`` fails the conditioning floor contributes nothing).
The two-sided statistic is the maximum over ``k`` of

``Q1_k = (k^2/n) D1' Sigma_{n,k} D1`` and ``Q2_k = ((n-k)^2/n) D2' Sigma_{n,k} D2``

with ``D1 = theta(T_{1,k}) - theta(T_{1,n})`` and ``D2 = theta(T_{k,n}) - theta(T_{1,n})``.
The one-sided variant uses ``Sigma_{n,n}`` and ``Q1`` only, with
``v_n = floor((log n)^2)``. Only ``k`` whose sub-window fits converge
enter the maxima; a fit counts as converged when the optimizer stopped at
an interior stationary point, so estimates pinned to a constraint (for
GARCH, ``alpha_1 = 0``, ``beta = 0`` or ``alpha_1 + beta`` at its cap) are
excluded.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels as K
from . import limits
from .detector import Monitor, ScanConfig
from .errors import InvalidArgument, NumericalError
from .models import ModelSpec, as_series
from .qmle import EIG_FLOOR, FitResult, Window, fit, inv_sqrt_checked

log = logging.getLogger(__name__)

#: Published 5%-level critical values keyed by dimension: (two-sided, one-sided).
CRITICAL_05 = {3: (3.47, 3.06), 4: (3.98, 3.45)}

SEGMENT_FIELDS = ("break_index", "alarm_index", "test_used", "statistic",
                  "critical_value", "segment_theta")


def default_critical(d: int, alpha: float = 0.05, one_sided: bool = False) -> tuple[float, str]:
    """Critical value and its source.

    The embedded constants cover ``d in {3, 4}`` at the 5% level. Other
    settings fall back to the ``(1 - alpha)``-quantile of
    ``sup ||B_d||^2``, the common limit of both statistics under the null.
    """
    if abs(alpha - 0.05) < 1e-12 and d in CRITICAL_05:
        return CRITICAL_05[d][1 if one_sided else 0], "table"
    return limits.quantile("BridgeSq", d, alpha), "bridge-mc"


def default_vn(n: int, exponent: float = 2.0) -> int:
    return int(math.floor(math.log(n) ** exponent))


@dataclass(frozen=True)
class RetroResult:
    statistic: float
    k_hat: Optional[int]
    critical_value: float
    rejected: bool
    q1: np.ndarray
    q2: Optional[np.ndarray]
    ks: np.ndarray
    v_n: int
    n: int
    test: str
    critical_source: str = "user"
    inconclusive: bool = False
    excluded: int = 0

    @property
    def ratio(self) -> float:
        return self.statistic / self.critical_value


class _SideFits:
    """Warm-started sub-window fits with their sandwich matrices."""

    def __init__(self, model: ModelSpec, x: np.ndarray):
        self.model = model
        self.x = x
        self.solver = model.window_solver()
        self.code = model._code

    def sandwich(self, theta, lo, hi):
        if self.code >= 0:
            return K.sandwich(self.code, theta, self.x, lo, hi, self.model._aux)
        _, g, h = self.model.q_terms(theta, self.x, lo, hi)
        return g.T @ g / g.shape[0], h.mean(axis=0)

    def _accept(self, th, conv) -> bool:
        return bool(conv and np.all(np.isfinite(th)) and self.model.is_interior(th))

    def run(self, windows, init):
        """Fit each ``(lo, hi)`` in order, warm-starting from the previous success."""
        d = self.model.dim
        m = len(windows)
        thetas = np.full((m, d), np.nan)
        ok = np.zeros(m, dtype=bool)
        A = np.zeros((m, d, d))
        good_G = np.zeros(m, dtype=bool)
        cur = init
        for i, (lo, hi) in enumerate(windows):
            th, conv, _ = self.solver.solve(self.x, lo, hi, cur)
            conv = self._accept(th, conv)
            if not conv:
                th2, conv2, _ = self.solver.solve(self.x, lo, hi, init)
                if self._accept(th2, conv2):
                    th, conv = th2, True
            if not conv:
                continue
            cur = th
            thetas[i] = th
            ok[i] = True
            G, F = self.sandwich(th, lo, hi)
            lam, V = np.linalg.eigh(0.5 * (G + G.T))
            floor = EIG_FLOOR * np.trace(G) / d
            if floor > 0 and lam[0] >= floor:
                good_G[i] = True
                Ginv = (V / lam) @ V.T
                A[i] = F @ Ginv @ F
        return thetas, ok, A, good_G


def _prepare(model, series, v_n):
    x = as_series(series)
    n = x.size
    if v_n is None:
        v_n = default_vn(n)
    if v_n < 1:
        raise InvalidArgument("v_n must be >= 1")
    if n < 2 * v_n + model.dim + 2:
        raise InvalidArgument(f"n={n} is below 2 v_n + d + 2 = {2 * v_n + model.dim + 2}")
    model = model.calibrate(x)
    full = fit(model, x, Window(1, n))
    if not full.converged:
        raise NumericalError("full-sample fit did not converge")
    return model, x, n, v_n, full


def sigma_matrix(model: ModelSpec, series, n: int, k: int) -> tuple[np.ndarray, bool]:
    """``Sigma_{n,k}`` on ``X_1..X_n`` and a flag that is False when both sides are singular."""
    x = as_series(series)[:n]
    if not 1 <= k <= n:
        raise InvalidArgument("need 1 <= k <= n")
    model = model.calibrate(x)
    side = _SideFits(model, x)
    full = fit(model, x, Window(1, n)).theta_hat
    wins = [(1, k)] + ([(k, n)] if k < n else [])
    _, ok, A, good = side.run(wins, full)
    S = np.zeros((model.dim, model.dim))
    S += (k / n) * A[0] * (ok[0] and good[0])
    if k < n:
        S += ((n - k) / n) * A[1] * (ok[1] and good[1])
    return 0.5 * (S + S.T), bool((ok & good).any())


def retro_test(model: ModelSpec, series, v_n: Optional[int] = None,
               critical_value: Optional[float] = None, alpha: float = 0.05) -> RetroResult:
    """Two-sided retrospective test ``Q_n = max(Q^(1)_n, Q^(2)_n)``."""
    model, x, n, v_n, full = _prepare(model, series, v_n)
    if critical_value is None:
        critical_value, source = default_critical(model.dim, alpha, one_sided=False)
    else:
        source = "user"
    ks = np.arange(v_n, n - v_n + 1)
    side = _SideFits(model, x)
    th1, ok1, A1, g1 = side.run([(1, int(k)) for k in ks], full.theta_hat)
    back = [(int(k), n) for k in ks[::-1]]
    th2, ok2, A2, g2 = side.run(back, full.theta_hat)
    th2, ok2, A2, g2 = th2[::-1], ok2[::-1], A2[::-1], g2[::-1]
    w1 = (ks / n)[:, None, None] * g1[:, None, None]
    w2 = ((n - ks) / n)[:, None, None] * g2[:, None, None]
    Sig = w1 * A1 + w2 * A2
    valid = ok1 & ok2 & (g1 | g2)
    D1 = th1 - full.theta_hat
    D2 = th2 - full.theta_hat
    q1 = np.full(ks.size, np.nan)
    q2 = np.full(ks.size, np.nan)
    q1[valid] = ks[valid] ** 2 / n * np.einsum("ki,kij,kj->k", D1[valid], Sig[valid], D1[valid])
    q2[valid] = (n - ks[valid]) ** 2 / n * np.einsum("ki,kij,kj->k", D2[valid], Sig[valid], D2[valid])
    return _finish(q1, q2, ks, critical_value, source, v_n, n, "Q")


def retro_test_ls(model: ModelSpec, series, v_n: Optional[int] = None,
                  critical_value: Optional[float] = None, alpha: float = 0.05) -> RetroResult:
    """One-sided test with the full-sample covariance ``Sigma_{n,n}``."""
    model, x, n, v_n, full = _prepare(model, series, v_n)
    if critical_value is None:
        critical_value, source = default_critical(model.dim, alpha, one_sided=True)
    else:
        source = "user"
    root, ok = inv_sqrt_checked(full.G_hat)
    if not ok:
        raise NumericalError("full-sample G is ill-conditioned")
    Ginv = root @ root
    Sig = full.F_hat @ Ginv @ full.F_hat
    ks = np.arange(v_n, n - v_n + 1)
    side = _SideFits(model, x)
    th1, ok1, _, _ = side.run([(1, int(k)) for k in ks], full.theta_hat)
    D1 = th1 - full.theta_hat
    q1 = np.full(ks.size, np.nan)
    q1[ok1] = ks[ok1] ** 2 / n * np.einsum("ki,ij,kj->k", D1[ok1], Sig, D1[ok1])
    return _finish(q1, None, ks, critical_value, source, v_n, n, "Q0")


def _finish(q1, q2, ks, crit, source, v_n, n, name) -> RetroResult:
    comb = q1 if q2 is None else np.fmax(q1, q2)
    excluded = int(np.sum(np.isnan(comb)))
    if excluded == comb.size:
        return RetroResult(float("nan"), None, crit, False, q1, q2, ks, v_n, n, name,
                           source, inconclusive=True, excluded=excluded)
    j = int(np.nanargmax(comb))
    stat = float(comb[j])
    return RetroResult(stat, int(ks[j]), float(crit), bool(stat > crit), q1, q2, ks, v_n, n,
                       name, source, excluded=excluded)


# ---------------------------------------------------------------------------
# segmentation


@dataclass(frozen=True)
class BreakEvent:
    break_index: int
    alarm_index: int
    test_used: str
    statistic: float
    critical_value: float
    rejected: bool
    history_start: int
    monitor_start: int
    extended: bool = False
    note: str = ""


@dataclass(frozen=True)
class Segmentation:
    """Located breaks, the fit on each resulting segment and the audit trail."""

    break_indices: list
    segments: list
    fits: list
    audit: list
    n_obs: int

    def records(self) -> list[dict]:
        """Export rows: one per located break, ``segment_theta`` of the segment it closes."""
        rows = []
        for i, ev in enumerate(self.audit):
            th = self.fits[i].theta_hat if i < len(self.fits) and self.fits[i] is not None else None
            rows.append({"break_index": ev.break_index, "alarm_index": ev.alarm_index,
                         "test_used": ev.test_used, "statistic": ev.statistic,
                         "critical_value": ev.critical_value, "segment_theta": th})
        return rows

    def check(self) -> bool:
        """Audit invariants: each break precedes its alarm and the next monitoring start."""
        prev = 0
        for ev in self.audit:
            if not (prev < ev.break_index < ev.alarm_index < ev.monitor_start):
                return False
            if ev.history_start != ev.break_index + 1:
                return False
            prev = ev.break_index
        covered = sum(hi - lo + 1 for lo, hi in self.segments)
        return covered == self.n_obs


def _locate(model, sample, alpha) -> tuple[RetroResult, str]:
    results = []
    for test in (retro_test, retro_test_ls):
        try:
            r = test(model, sample, alpha=alpha)
        except (InvalidArgument, NumericalError) as exc:
            log.info("%s skipped: %s", test.__name__, exc)
            continue
        if not r.inconclusive:
            results.append(r)
    if not results:
        return None, ""
    best = max(results, key=lambda r: r.ratio)
    return best, best.test


def segment(model: ModelSpec, series, cfg: Optional[ScanConfig] = None, initial_n: int = 500,
            min_history: Optional[int] = None, alpha: float = 0.05) -> Segmentation:
    """Monitor, locate each alarm's break retrospectively, restart after it.

    After an alarm at ``tau`` both retrospective tests run on the data from
    the current history start to ``tau``; the location comes from the one
    with the larger statistic-to-critical ratio (recorded even when neither
    rejects). Monitoring restarts with history ``(t_hat, tau]``, extended
    forward to ``min_history`` points (default ``max(100, initial_n // 2)``)
    or until its fit converges.
    """
    x = as_series(series)
    N = x.size
    if min_history is None:
        min_history = max(100, initial_n // 2)
    if min_history < 2:
        raise InvalidArgument("min_history must be >= 2")
    cfg = replace(cfg or ScanConfig.for_model(model), horizon=None)
    if not 2 <= initial_n < N:
        raise InvalidArgument("initial_n must lie in [2, len(series))")
    breaks, audit = [], []
    start, hist_end = 1, initial_n
    extended_note = ""
    while hist_end < N:
        try:
            mon = Monitor(model, x[start - 1:hist_end], cfg)
        except (NumericalError, InvalidArgument) as exc:
            if hist_end + min_history // 2 >= N:
                log.info("history [%d, %d] unusable (%s); stopping", start, hist_end, exc)
                break
            hist_end += max(1, min_history // 2)
            extended_note = f"history extended to {hist_end}: {exc}"
            if audit:
                audit[-1] = replace(audit[-1], extended=True, monitor_start=hist_end + 1,
                                    note=extended_note)
            continue
        out = mon.run(x[hist_end:])
        if not out.stopped:
            break
        tau = start - 1 + out.tau
        res, test = _locate(model, x[start - 1:tau], alpha)
        if res is None:
            log.info("alarm at %d could not be located; monitoring resumes at %d", tau, tau + 1)
            start, hist_end = start, tau
            continue
        t_hat = start - 1 + res.k_hat
        new_end = max(tau, t_hat + min_history)
        ev = BreakEvent(t_hat, tau, test, res.statistic, res.critical_value, res.rejected,
                        history_start=t_hat + 1, monitor_start=min(new_end, N) + 1,
                        extended=new_end > tau,
                        note="" if res.rejected else "retrospective test did not reject")
        breaks.append(t_hat)
        audit.append(ev)
        start, hist_end = t_hat + 1, new_end
    bounds = [0] + breaks + [N]
    segments = [(bounds[i] + 1, bounds[i + 1]) for i in range(len(bounds) - 1)]
    fits = []
    for lo, hi in segments:
        try:
            m_seg = model.calibrate(x[lo - 1:hi])
            fits.append(fit(m_seg, x, Window(lo, hi)) if hi - lo + 1 > model.dim else None)
        except (InvalidArgument, NumericalError):
            fits.append(None)
    return Segmentation(breaks, segments, fits, audit, N)
