"""Monte-Carlo quantiles of the Brownian functionals that calibrate the detectors.

Functionals (``W_d`` a standard d-dimensional Brownian motion, ``B_d`` the
corresponding bridge):

``Ud``           ``sup_{0<u<1} f(u) ||W_d(u)||`` for the windowed detector
``SupNorm``      ``sup_{0<s<1} ||W_d(s)||`` for the history-anchored detector
``SupWeighted``  ``sup_{0<s<1} |W_1(s)| / s^gamma`` for the CUSUM detector
``BridgeSq``     ``sup_{0<s<1} ||B_d(s)||^2`` for the retrospective tests

Paths are built on the uniform grid ``u_i = i/m`` (``i = 1..m``) by
cumulating independent Gaussian increments, and each supremum is a grid
maximum. Random numbers come from one ``numpy`` stream per
``(chunk, coordinate)`` pair derived from the master seed, so the sample of
coordinate prefixes ``1..d`` is identical whether dimension ``d`` is
simulated alone or as part of a larger nested run.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from numba import njit
from scipy.stats import ks_2samp

from .errors import InvalidArgument

FUNCTIONALS = ("Ud", "SupNorm", "SupWeighted", "BridgeSq")
DEFAULT_GRID = 5000
DEFAULT_REPS = 50_000
DEFAULT_SEED = 20240517
CHUNK = 500
TABLE_VERSION = "parmon-quantiles v1"
TABLE_FIELDS = ("functional", "d", "alpha", "quantile", "grid", "reps", "seed", "gamma")
LEVELS = (0.01, 0.05, 0.10)
WEIGHTED_SMIN = 1e-3


def f_weight(u):
    """Weight ``f(u)`` of the windowed-detector limit; ``f(0) = 2/(3 sqrt 3)``, ``f(1) = 1``."""
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(~np.isfinite(arr)):
        raise InvalidArgument("f_weight is defined on [0, 1]")
    a = np.sqrt(9.0 - arr)
    b = np.sqrt(1.0 - arr)
    val = (a + b) / (a + 3.0 * b) * np.sqrt(2.0 / (3.0 - arr + a * b))
    return float(val) if np.ndim(u) == 0 else val


def _check(functional: str, d: int, gamma: float):
    if functional not in FUNCTIONALS:
        raise InvalidArgument(f"unknown functional {functional!r}; choose from {FUNCTIONALS}")
    if int(d) != d or d < 1:
        raise InvalidArgument("dimension d must be a positive integer")
    if functional == "SupWeighted":
        if d != 1:
            raise InvalidArgument("SupWeighted is defined for d = 1")
        if not 0.0 <= gamma < 0.5:
            raise InvalidArgument("SupWeighted requires 0 <= gamma < 1/2")


def _weights(functional: str, m: int, gamma: float) -> np.ndarray:
    u = np.arange(1, m + 1) / m
    if functional == "Ud":
        return f_weight(u)
    if functional == "SupWeighted" and gamma > 0.0:
        w = u ** -gamma
        w[u < WEIGHTED_SMIN] = 0.0
        return w
    return np.ones(m)


@njit(cache=True)
def _prefix_sup(Z, w, du, bridge):
    """Nested-dimension grid suprema.

    ``Z`` has shape ``(d, reps, m)`` of standard normals. Column ``j`` of the
    result uses coordinates ``0..j``: weighted sup norm of the path, or (with
    ``bridge``) sup squared norm of the bridge ``W(u) - u W(1)``.
    """
    d, reps, m = Z.shape
    out = np.zeros((reps, d))
    sq = math.sqrt(du)
    path = np.empty((d, m))
    for r in range(reps):
        for c in range(d):
            acc = 0.0
            for i in range(m):
                acc += sq * Z[c, r, i]
                path[c, i] = acc
        if bridge:
            for c in range(d):
                end = path[c, m - 1]
                for i in range(m):
                    path[c, i] -= (i + 1) * du * end
        for i in range(m):
            s = 0.0
            for c in range(d):
                s += path[c, i] * path[c, i]
                v = s if bridge else w[i] * math.sqrt(s)
                if v > out[r, c]:
                    out[r, c] = v
    return out


def _normals(seed: int, chunk: int, coord: int, shape) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(chunk, coord))
    return np.random.default_rng(ss).standard_normal(shape)


def simulate_nested(functional: str, d_max: int, grid_size: int = DEFAULT_GRID,
                    replications: int = DEFAULT_REPS, seed: int = DEFAULT_SEED,
                    gamma: float = 0.0) -> np.ndarray:
    """Samples of a functional for every dimension ``1..d_max``; shape ``(replications, d_max)``."""
    _check(functional, 1 if functional == "SupWeighted" else d_max, gamma)
    if grid_size < 10:
        raise InvalidArgument("grid_size must be at least 10")
    if replications < 1:
        raise InvalidArgument("replications must be positive")
    w = _weights(functional, grid_size, gamma)
    bridge = functional == "BridgeSq"
    out = np.empty((replications, d_max))
    for ci, start in enumerate(range(0, replications, CHUNK)):
        reps = min(CHUNK, replications - start)
        Z = np.empty((d_max, reps, grid_size))
        for c in range(d_max):
            Z[c] = _normals(seed, ci, c, (CHUNK, grid_size))[:reps]
        out[start:start + reps] = _prefix_sup(Z, w, 1.0 / grid_size, bridge)
    return out


def simulate_functional(functional: str, d: int, grid_size: int = DEFAULT_GRID,
                        replications: int = DEFAULT_REPS, seed: int = DEFAULT_SEED,
                        gamma: float = 0.0) -> np.ndarray:
    _check(functional, d, gamma)
    return simulate_nested(functional, d, grid_size, replications, seed, gamma)[:, d - 1]


def simulate_Ud(d: int, grid_size: int = DEFAULT_GRID, replications: int = DEFAULT_REPS,
                seed: int = DEFAULT_SEED) -> np.ndarray:
    """Samples of ``U_d = sup_u f(u) ||W_d(u)||``."""
    if grid_size < 1000:
        raise InvalidArgument("grid_size must be at least 1000")
    return simulate_functional("Ud", d, grid_size, replications, seed)


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class QuantileTable:
    functional: str
    d: int
    levels: dict
    grid_size: int
    replications: int
    seed: int
    gamma: float = 0.0

    def __post_init__(self):
        alphas = sorted(self.levels)
        qs = [self.levels[a] for a in alphas]
        if any(q1 <= q2 for q1, q2 in zip(qs, qs[1:])):
            raise InvalidArgument("quantiles must increase as alpha decreases")

    @property
    def key(self):
        return (self.functional, self.d, round(self.gamma, 6))


def build_table(functional: str, d_max: int, alphas: Iterable[float] = LEVELS,
                grid_size: int = DEFAULT_GRID, replications: int = DEFAULT_REPS,
                seed: int = DEFAULT_SEED, gamma: float = 0.0) -> list[QuantileTable]:
    sample = simulate_nested(functional, d_max, grid_size, replications, seed, gamma)
    tabs = []
    for d in range(1, d_max + 1):
        levels = {float(a): float(np.quantile(sample[:, d - 1], 1.0 - a)) for a in alphas}
        tabs.append(QuantileTable(functional, d, levels, grid_size, replications, seed, gamma))
    return tabs


def format_tables(tables: Iterable[QuantileTable]) -> str:
    buf = io.StringIO()
    buf.write(f"# {TABLE_VERSION}\n")
    buf.write("\t".join(TABLE_FIELDS) + "\n")
    for t in tables:
        for a in sorted(t.levels):
            buf.write(f"{t.functional}\t{t.d}\t{a:g}\t{t.levels[a]:.6f}\t{t.grid_size}\t"
                      f"{t.replications}\t{t.seed}\t{t.gamma:g}\n")
    return buf.getvalue()


def write_tables(tables: Iterable[QuantileTable], path) -> None:
    from .io import atomic_write_text
    atomic_write_text(path, format_tables(tables))


def parse_tables(text: str) -> dict:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != f"# {TABLE_VERSION}":
        raise InvalidArgument("unrecognized quantile table version")
    header = tuple(lines[1].split("\t"))
    if header != TABLE_FIELDS:
        raise InvalidArgument(f"unexpected table header {header}")
    grouped: dict = {}
    for ln in lines[2:]:
        f, d, a, q, g, r, s, gam = ln.split("\t")
        key = (f, int(d), round(float(gam), 6))
        entry = grouped.setdefault(key, {"levels": {}, "meta": (int(g), int(r), int(s))})
        entry["levels"][float(a)] = float(q)
    return {k: QuantileTable(k[0], k[1], v["levels"], *v["meta"], gamma=k[2])
            for k, v in grouped.items()}


def load_tables(path: Optional[os.PathLike] = None) -> dict:
    """Read a quantile table file (the shipped one by default)."""
    if path is None:
        text = resources.files("parmon").joinpath("data/quantiles_v1.tsv").read_text()
    else:
        text = Path(path).read_text()
    return parse_tables(text)


@lru_cache(maxsize=1)
def _shipped() -> dict:
    return load_tables()


@lru_cache(maxsize=64)
def _fresh(functional, d, alpha, gamma, grid_size, replications, seed):
    sample = simulate_functional(functional, d, grid_size, replications, seed, gamma)
    return float(np.quantile(sample, 1.0 - alpha))


def quantile(functional: str, d: int, alpha: float, gamma: float = 0.0,
             table: Optional[dict] = None, fresh: bool = False,
             grid_size: int = DEFAULT_GRID, replications: int = DEFAULT_REPS,
             seed: int = DEFAULT_SEED) -> float:
    """``(1 - alpha)``-quantile of a functional.

    Looks the value up in ``table`` (default: the shipped table) and
    simulates it when absent or when ``fresh`` is set.
    """
    _check(functional, d, gamma)
    if not 0.0 < alpha < 1.0:
        raise InvalidArgument("alpha must lie in (0, 1)")
    if not fresh:
        tabs = _shipped() if table is None else table
        entry = tabs.get((functional, d, round(gamma, 6)))
        if entry is not None:
            for a, q in entry.levels.items():
                if abs(a - alpha) < 1e-12:
                    return q
    return _fresh(functional, d, float(alpha), float(gamma), grid_size, replications, seed)


# ---------------------------------------------------------------------------
# time-inversion self-test


@njit(cache=True)
def _literal_samples(W1, Z, s):
    """``max_t (1/t) max_{1<s<=t} ||W(s) - s W(1)||`` on the grid ``s``, per replication."""
    d, reps, m = Z.shape
    out = np.zeros(reps)
    cur = np.empty(d)
    for r in range(reps):
        for c in range(d):
            cur[c] = W1[c, r]
        run = 0.0
        best = 0.0
        for i in range(1, m):
            ds = math.sqrt(s[i] - s[i - 1])
            nrm = 0.0
            for c in range(d):
                cur[c] += ds * Z[c, r, i]
                dev = cur[c] - s[i] * W1[c, r]
                nrm += dev * dev
            nrm = math.sqrt(nrm)
            if nrm > run:
                run = nrm
            v = run / s[i]
            if v > best:
                best = v
        out[r] = best
    return out


def simulate_literal(d: int, grid_T: float = 200.0, grid_size: int = DEFAULT_GRID,
                     replications: int = 20_000, seed: int = DEFAULT_SEED + 1) -> np.ndarray:
    """Samples of ``sup_{1<t<=T} sup_{1<s<t} (1/t) ||W_d(s) - s W_d(1)||``.

    The grid ``s_i = 1/u_i`` uses ``u_i`` uniform on ``[1/T, 1]`` so that the
    resolution matches the uniform grid of the ``Ud`` simulation after time
    inversion; ``W(1)`` is drawn first and the path is extended forward.
    """
    if grid_T <= 1.0:
        raise InvalidArgument("grid_T must exceed 1")
    u = np.linspace(1.0, 1.0 / grid_T, grid_size + 1)
    s = 1.0 / u
    out = np.empty(replications)
    for ci, start in enumerate(range(0, replications, CHUNK)):
        reps = min(CHUNK, replications - start)
        W1 = np.empty((d, reps))
        Z = np.empty((d, reps, grid_size + 1))
        for c in range(d):
            draws = _normals(seed, ci, c, (CHUNK, grid_size + 2))[:reps]
            W1[c] = draws[:, 0]
            Z[c] = draws[:, 1:]
        out[start:start + reps] = _literal_samples(W1, Z, s)
    return out


@dataclass(frozen=True)
class SelfTestResult:
    ks: float
    pvalue: float
    literal: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)
    diagnostic: bool = False


def identity_selftest(d: int = 1, grid_T: float = 200.0, grid_size: int = DEFAULT_GRID,
                      replications: int = 20_000, seed: int = DEFAULT_SEED,
                      reference: str = "Ud") -> SelfTestResult:
    """Two-sample KS distance between the literal double supremum and a reference functional.

    The reference defaults to ``Ud``; pass ``"SupNorm"`` to compare against
    ``sup ||W_d||``. Runs with fewer than 1,000 replications are marked as
    diagnostic only.
    """
    lit = simulate_literal(d, grid_T, grid_size, replications, seed + 1)
    ref = simulate_functional(reference, d, grid_size, replications, seed)
    res = ks_2samp(lit, ref)
    return SelfTestResult(float(res.statistic), float(res.pvalue), lit, ref,
                          diagnostic=replications < 1000)
