"""Quasi-maximum likelihood on index windows and the sandwich matrices.

For a window ``T = {lo, ..., hi}`` the quasi-loglikelihood is
``L(T, theta) = -1/2 sum_{t in T} q_t(theta)`` and the estimator is its
maximizer over the family's parameter box. The score outer-product average
``G`` and the Hessian average ``F`` of ``q_t`` at the estimate give the
standardizer ``G^{-1/2} F`` used by every detector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidArgument
from .models import ModelSpec, as_series

N_RESTARTS = 3
EIG_FLOOR = 1e-8


@dataclass(frozen=True)
class Window:
    """Inclusive 1-based index window ``[lo, hi]``."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 1 or self.hi < self.lo:
            raise InvalidArgument(f"invalid window [{self.lo}, {self.hi}]")

    @property
    def card(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class QTerm:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass(frozen=True)
class FitResult:
    """Window estimate with its sandwich matrices and optimizer diagnostics.

    ``well_conditioned`` is False when the smallest eigenvalue of ``G_hat``
    fell below the floor ``1e-8 * trace / d``; the normalizer is then
    computed with clamped eigenvalues and should not be trusted.
    """

    theta_hat: np.ndarray
    G_hat: np.ndarray
    F_hat: np.ndarray
    normalizer: np.ndarray
    window: Window
    loglik: float
    converged: bool
    iterations: int
    well_conditioned: bool
    restarts: int = 0
    notes: tuple = field(default=())


def _check_window(model: ModelSpec, x: np.ndarray, window: Window, min_card: bool = True):
    if window.hi > x.size:
        raise InvalidArgument(f"window ends at {window.hi} beyond series length {x.size}")
    if min_card and window.card < model.dim + 1:
        raise InvalidArgument(
            f"window of {window.card} points is too short for d={model.dim}")


def q_term(model: ModelSpec, theta, series, t: int, derivatives: int = 2) -> QTerm:
    """``q_t(theta)`` and, up to ``derivatives``, its gradient and Hessian."""
    x = as_series(series)
    if not 1 <= t <= x.size:
        raise InvalidArgument(f"t={t} outside 1..{x.size}")
    if derivatives not in (0, 1, 2):
        raise InvalidArgument("derivatives must be 0, 1 or 2")
    q, g, h = model.q_terms(model.validate(theta), x, t, t)
    return QTerm(float(q[0]), g[0] if derivatives >= 1 else None,
                 0.5 * (h[0] + h[0].T) if derivatives >= 2 else None)


def loglik(model: ModelSpec, theta, series, window: Window) -> float:
    """``-1/2 sum_{t in window} q_t(theta)``."""
    x = as_series(series)
    _check_window(model, x, window, min_card=False)
    q = model.q_terms(model.validate(theta), x, window.lo, window.hi)[0]
    return -0.5 * float(np.sum(q))


def sandwich(model: ModelSpec, theta, series, window: Window):
    """``(G, F)``: averaged score outer products and averaged Hessians of ``q_t``."""
    x = as_series(series)
    _, g, h = model.q_terms(model.validate(theta), x, window.lo, window.hi)
    G = g.T @ g / g.shape[0]
    F = h.mean(axis=0)
    return 0.5 * (G + G.T), 0.5 * (F + F.T)


def estimate_G(model, theta, series, window) -> np.ndarray:
    return sandwich(model, theta, series, window)[0]


def estimate_F(model, theta, series, window) -> np.ndarray:
    return sandwich(model, theta, series, window)[1]


def inv_sqrt_checked(m) -> tuple[np.ndarray, bool]:
    """Inverse symmetric square root with eigenvalues floored at ``1e-8 * trace / d``.

    Returns the matrix and a flag that is False when any eigenvalue needed
    the floor (or the matrix is zero).
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise InvalidArgument("matrix must be square")
    sym = 0.5 * (m + m.T)
    lam, V = np.linalg.eigh(sym)
    floor = EIG_FLOOR * np.trace(sym) / sym.shape[0]
    ok = bool(floor > 0 and lam[0] >= floor)
    lam = np.maximum(lam, floor if floor > 0 else np.finfo(float).tiny)
    out = (V / np.sqrt(lam)) @ V.T
    return 0.5 * (out + out.T), ok


def inv_sqrt(m) -> np.ndarray:
    return inv_sqrt_checked(m)[0]


def standardize(model: ModelSpec, theta, series, window: Window):
    """``(G, F, G^{-1/2} F, ok)`` at ``theta``."""
    G, F = sandwich(model, theta, series, window)
    root, ok = inv_sqrt_checked(G)
    return G, F, root @ F, ok


def _nelder_mead(model, x, window, theta):
    def obj(v):
        p = model.project(v)
        pen = float(np.sum((v - p) ** 2))
        return model.objective(p, x, window.lo, window.hi) * (1.0 + pen) + 1e3 * pen
    res = minimize(obj, theta, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000 * model.dim})
    return model.project(res.x)


def fit(model: ModelSpec, series, window: Window, init=None, solver=None) -> FitResult:
    """Maximize the quasi-loglikelihood over ``window``.

    A projected Newton solve from ``init`` (or a data-driven start) is
    followed, if it fails to converge, by up to three jittered restarts
    and finally a Nelder-Mead search polished by Newton. The jitter stream
    is seeded from the window, so the result is deterministic.
    """
    x = as_series(series)
    _check_window(model, x, window)
    solver = solver or model.window_solver()
    theta, conv, its = solver.solve(x, window.lo, window.hi,
                                    None if init is None else model.validate(init))
    restarts = 0
    notes = []
    if not conv:
        rng = np.random.default_rng([window.lo, window.hi, 7919])
        best = (model.objective(theta, x, window.lo, window.hi), theta, its)
        base = model.start(x, window.lo, window.hi)
        while restarts < N_RESTARTS and not conv:
            restarts += 1
            th, conv, it = solver.solve(x, window.lo, window.hi, model.jitter(base, rng))
            its += it
            f = model.objective(th, x, window.lo, window.hi)
            if conv or f < best[0]:
                best = (f, th, it)
                theta = th
        theta = best[1]
        if not conv:
            notes.append("simplex fallback")
            nm = _nelder_mead(model, x, window, theta)
            th, conv, it = solver.solve(x, window.lo, window.hi, nm)
            its += it
            if conv or model.objective(th, x, window.lo, window.hi) <= best[0]:
                theta = th
    G, F, norm, ok = standardize(model, theta, x, window)
    return FitResult(theta_hat=np.asarray(theta, float).copy(), G_hat=G, F_hat=F, normalizer=norm,
                     window=window, loglik=loglik(model, theta, x, window),
                     converged=bool(conv), iterations=int(its), well_conditioned=ok,
                     restarts=restarts, notes=tuple(notes))
