"""Monte-Carlo replay of the monitoring experiments.

Each replication simulates one path of length ``n + horizon`` and runs every
requested detector on it (common random numbers), so null and alternative
runs with the same seed share their pre-change data. Levels/powers are the
fraction of replications whose alarm time satisfies ``tau <= k`` at each
checkpoint ``k``; delays ``tau - k_star`` are summarized over replications
that alarm after the change.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .detector import ScanConfig, make_monitor
from .errors import InvalidArgument, NumericalError
from .models import ChangeScenario, ModelSpec, simulate

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (100, 200, 300, 400, 500)
DELAY_STATS = ("mean", "sd", "min", "q1", "median", "q3", "max")
DELAY_FIELDS = ("n", "k_star", "detector") + DELAY_STATS + (
    "detected", "false_alarms", "missed", "failures")


def level_fields(checkpoints: Sequence[int]) -> tuple[str, ...]:
    return ("kind", "n", "k_star", "detector") + tuple(f"n+{c}" for c in checkpoints)


@dataclass(frozen=True)
class BenchConfig:
    """One experimental cell: a model, a scenario and the detectors to compare.

    ``sim_model`` generates the data (it must carry any fixed nuisance
    parameters) and ``model`` is what the detectors fit; they coincide
    unless a mean-shift noise model is estimated from history.
    """

    model: ModelSpec
    theta0: np.ndarray
    n: int
    reps: int
    theta1: Optional[np.ndarray] = None
    k_star: Optional[int] = None
    horizon: int = 500
    detectors: tuple = ("c", "d")
    checkpoints: tuple = DEFAULT_CHECKPOINTS
    seed: int = 0
    scan: Optional[ScanConfig] = None
    sim_model: Optional[ModelSpec] = None
    workers: int = 1

    def __post_init__(self):
        if self.reps < 0:
            raise InvalidArgument("reps must be >= 0")
        if any(c < 1 or c > self.horizon for c in self.checkpoints):
            raise InvalidArgument("checkpoints must lie in [1, horizon]")
        if self.workers < 1:
            raise InvalidArgument("workers must be >= 1")
        for d in self.detectors:
            if d not in ("c", "d", "q"):
                raise InvalidArgument(f"unknown detector {d!r}")
        # validates theta/k_star pairing and k_star > n
        self.scenario()

    def scenario(self) -> ChangeScenario:
        return ChangeScenario(np.asarray(self.theta0, float), self.n, self.horizon,
                              None if self.theta1 is None else np.asarray(self.theta1, float),
                              self.k_star)

    @property
    def kind(self) -> str:
        return "level" if self.k_star is None else "power"

    def scan_config(self) -> ScanConfig:
        base = self.scan or ScanConfig.for_model(self.model)
        return replace(base, horizon=self.horizon)

    def rep_seed(self, rep: int) -> int:
        """Deterministic per-replication seed, independent of worker scheduling."""
        return int(np.random.SeedSequence([self.seed, rep]).generate_state(1)[0])


@dataclass
class BenchResult:
    config: BenchConfig
    taus: dict            # detector -> alarm times of runs that completed (nan: no alarm)
    failures: dict        # detector -> count
    level_rows: list = field(default_factory=list)
    delay_rows: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.config.reps == 0


def run_replication(cfg: BenchConfig, rep: int) -> dict:
    """Alarm time per detector for one replication (``nan`` when none, ``None`` on failure)."""
    sim_model = cfg.sim_model or cfg.model
    x = simulate(sim_model, cfg.scenario(), cfg.rep_seed(rep))
    hist, stream = x[:cfg.n], x[cfg.n:]
    scan = cfg.scan_config()
    out = {}
    for det in cfg.detectors:
        try:
            mon = make_monitor(cfg.model, hist, det, scan)
            res = mon.run(stream, cfg.k_star)
        except (NumericalError, InvalidArgument) as exc:
            log.info("rep %d detector %s failed: %s", rep, det, exc)
            out[det] = None
            continue
        out[det] = float(res.tau) if res.stopped else float("nan")
    return out


def _one(args):
    cfg, rep = args
    return run_replication(cfg, rep)


def delay_summary(delays) -> dict:
    """Mean, SD, min, quartiles and max of positive detection delays."""
    d = np.asarray(delays, dtype=float)
    if d.size == 0:
        return {k: float("nan") for k in DELAY_STATS}
    q1, med, q3 = np.percentile(d, [25, 50, 75])
    return {"mean": float(d.mean()), "sd": float(d.std(ddof=1)) if d.size > 1 else 0.0,
            "min": float(d.min()), "q1": float(q1), "median": float(med), "q3": float(q3),
            "max": float(d.max())}


def tabulate(cfg: BenchConfig, taus: dict, failures: dict) -> tuple[list, list]:
    """Level/power rows (one per detector) and delay rows (alternatives only)."""
    n = cfg.n
    level_rows, delay_rows = [], []
    for det in cfg.detectors:
        t = taus[det]
        ran = t.size
        row = {"kind": cfg.kind, "n": n, "k_star": cfg.k_star, "detector": det}
        for c in cfg.checkpoints:
            hits = np.sum(np.nan_to_num(t, nan=np.inf) <= n + c)
            row[f"n+{c}"] = float(hits / ran) if ran else float("nan")
        level_rows.append(row)
        if cfg.k_star is not None:
            alarmed = t[~np.isnan(t)]
            late = alarmed[alarmed > cfg.k_star] - cfg.k_star
            drow = {"n": n, "k_star": cfg.k_star, "detector": det}
            drow.update(delay_summary(late))
            drow.update(detected=int(late.size),
                        false_alarms=int(np.sum(alarmed <= cfg.k_star)),
                        missed=int(np.sum(np.isnan(t))), failures=failures[det])
            delay_rows.append(drow)
    return level_rows, delay_rows


def run_bench(cfg: BenchConfig) -> BenchResult:
    """Run ``cfg.reps`` replications and tabulate levels/powers and delays.

    Failed replications (history fit not convergent or ill-conditioned) are
    counted per detector and left out of the denominators.
    """
    per_rep: list[dict] = []
    jobs = [(cfg, r) for r in range(cfg.reps)]
    if cfg.workers > 1 and cfg.reps > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            per_rep = list(ex.map(_one, jobs, chunksize=max(1, cfg.reps // (4 * cfg.workers))))
    else:
        per_rep = [_one(j) for j in jobs]
    taus, failures = {}, {}
    for det in cfg.detectors:
        vals = [r[det] for r in per_rep]
        failures[det] = sum(v is None for v in vals)
        taus[det] = np.array([v for v in vals if v is not None], dtype=float)
    result = BenchResult(cfg, taus, failures)
    if cfg.reps:
        result.level_rows, result.delay_rows = tabulate(cfg, taus, failures)
    return result
