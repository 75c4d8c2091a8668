"""Command-line front end.

Subcommands: ``simulate``, ``quantiles``, ``monitor``, ``bench`` and
``segment``. Outputs are tab-separated records with a header line, preceded
by a ``# config {...}`` echo of every setting (defaults included), and are
written atomically. Without ``--out`` records go to standard output.

Exit codes: 0 success or no alarm, 1 alarm raised (``monitor``), 2
configuration error, 3 runtime or numerical error, 4 empty result
(``bench`` with zero replications).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, limits
from .bench import DELAY_FIELDS, BenchConfig, level_fields, run_bench
from .detector import TRAJECTORY_FIELDS, ConstantBoundary, ScanConfig, monitor
from .errors import InvalidArgument, NumericalError
from .io import atomic_write_text, format_records, ingest
from .models import AR, GARCH11, ChangeScenario, MeanShift, ModelSpec, simulate
from .retro import SEGMENT_FIELDS, segment

log = logging.getLogger("parmon")

EXIT_OK, EXIT_ALARM, EXIT_CONFIG, EXIT_RUNTIME, EXIT_EMPTY = 0, 1, 2, 3, 4
SERIES_FIELDS = ("t", "x")


@dataclass
class RunConfig:
    """Materialized settings of one invocation (echoed into every output)."""

    subcommand: str
    model: str = "ar"
    order: int = 1
    intercept: bool = False
    noise: str = "white"
    noise_theta: Optional[list] = None
    theta0: Optional[list] = None
    theta1: Optional[list] = None
    n: int = 500
    kstar: Optional[int] = None
    horizon: int = 500
    alpha: float = 0.05
    vexp: Optional[float] = None
    boundary: Optional[float] = None
    detector: str = "c"
    seed: int = 0
    reps: int = 200
    workers: int = 1
    input: Optional[str] = None
    format: str = "values"
    out: Optional[str] = None
    functional: str = "Ud"
    dims: int = 5
    grid: int = limits.DEFAULT_GRID
    version: str = __version__
    extras: dict = field(default_factory=dict)

    def echo(self) -> dict:
        d = dict(self.__dict__)
        d.pop("extras")
        d.update(self.extras)
        return d


# ---------------------------------------------------------------------------
# parsing and validation


def _floats(text: Optional[str]) -> Optional[list]:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidArgument(f"cannot parse parameter list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--model", choices=("ar", "garch", "meanshift"), default="ar")
    g.add_argument("--order", type=int, default=1, help="AR order p (also for AR noise)")
    g.add_argument("--intercept", action="store_true", help="AR with intercept phi_0")
    g.add_argument("--noise", choices=("white", "ar", "garch"), default="white",
                   help="noise of the mean-shift model")
    g.add_argument("--noise-theta",
                   help="noise parameters: drive simulations (detectors re-estimate them "
                        "from history); held fixed with --input")
    g.add_argument("--theta0", help="pre-change parameters, comma separated")
    g.add_argument("--theta1", help="post-change parameters, comma separated")
    s = common.add_argument_group("scenario and scan")
    s.add_argument("--n", type=int, default=500, help="historical sample size")
    s.add_argument("--kstar", type=int, help="last pre-change index (> n)")
    s.add_argument("--horizon", type=int, default=500, help="monitoring length")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--vexp", type=float, help="v_n exponent (default 2 for GARCH, 1.5 otherwise)")
    s.add_argument("--boundary", type=float, help="constant boundary c (default: limit quantile)")
    s.add_argument("--detector", choices=("c", "d", "q"), default="c")
    s.add_argument("--seed", type=int, help="RNG seed (default 0; quantiles: the shipped table seed)")
    s.add_argument("--reps", type=int, help="replications (default 200; quantiles: 50000)")
    s.add_argument("--workers", type=int, default=1)
    f = common.add_argument_group("files")
    f.add_argument("--input", help="series file (one value or price per line)")
    f.add_argument("--format", choices=("values", "prices"), default="values")
    f.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="parmon", description="Sequential parameter-change monitoring.")
    p.add_argument("--version", action="version", version=f"parmon {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a (changing) series")
    q = sub.add_parser("quantiles", parents=[common], help="regenerate limit quantile tables")
    q.add_argument("--functional", choices=limits.FUNCTIONALS + ("all",), default="Ud")
    q.add_argument("--dims", type=int, default=5, help="largest dimension d")
    q.add_argument("--grid", type=int, default=limits.DEFAULT_GRID)
    sub.add_parser("monitor", parents=[common], help="monitor a stream after a history")
    sub.add_parser("bench", parents=[common], help="Monte-Carlo levels, powers and delays")
    sub.add_parser("segment", parents=[common], help="monitor, locate and restart over a series")
    return p


def make_model(cfg: RunConfig) -> ModelSpec:
    if cfg.model == "ar":
        return AR(cfg.order, intercept=cfg.intercept)
    if cfg.model == "garch":
        return GARCH11()
    noise = {"white": None, "ar": AR(cfg.order, intercept=False), "garch": GARCH11()}[cfg.noise]
    return MeanShift(noise, cfg.noise_theta)


def _check_theta(model: ModelSpec, theta, name):
    th = model.validate(theta)
    if not model.check_stationarity(th):
        raise InvalidArgument(f"{name}={th.tolist()} is outside the stationarity domain")
    return th


def validate(cfg: RunConfig) -> ModelSpec:
    """Check every setting before any computation; returns the model to fit."""
    if cfg.order < 1:
        raise InvalidArgument("--order must be >= 1")
    if not 0.0 < cfg.alpha < 1.0:
        raise InvalidArgument("--alpha must lie in (0, 1)")
    if cfg.vexp is not None and not 1.0 <= cfg.vexp <= 3.0:
        raise InvalidArgument("--vexp must lie in [1, 3]")
    if cfg.boundary is not None and not cfg.boundary > 0:
        raise InvalidArgument("--boundary must be positive")
    if cfg.reps < 0 or cfg.workers < 1 or cfg.horizon < 0 or cfg.n < 2:
        raise InvalidArgument("need --reps >= 0, --workers >= 1, --horizon >= 0 and --n >= 2")
    if cfg.noise_theta is not None and (cfg.model != "meanshift" or cfg.noise == "white"):
        raise InvalidArgument("--noise-theta needs --model meanshift with --noise ar or garch")
    if cfg.detector == "q" and cfg.model != "meanshift":
        raise InvalidArgument("detector 'q' monitors a mean; use --model meanshift")
    model = make_model(cfg)
    if cfg.model == "meanshift" and cfg.noise_theta is not None:
        _check_theta(model.noise, cfg.noise_theta, "--noise-theta")
    simulated = cfg.subcommand in ("simulate", "bench") or (
        cfg.subcommand in ("monitor", "segment") and cfg.input is None)
    if cfg.subcommand == "quantiles":
        if cfg.dims < 1 or cfg.grid < 2 or cfg.reps < 1:
            raise InvalidArgument("need --dims >= 1, --grid >= 2 and --reps >= 1")
        return model
    if simulated:
        if cfg.theta0 is None:
            raise InvalidArgument("--theta0 is required when the series is simulated")
        if cfg.model == "meanshift" and cfg.noise != "white" and cfg.noise_theta is None:
            raise InvalidArgument("simulating a mean shift over AR/GARCH noise needs --noise-theta")
        _check_theta(model, cfg.theta0, "--theta0")
        if (cfg.theta1 is None) != (cfg.kstar is None):
            raise InvalidArgument("--theta1 and --kstar must be given together")
        if cfg.theta1 is not None:
            _check_theta(model, cfg.theta1, "--theta1")
            if not cfg.n < cfg.kstar <= cfg.n + cfg.horizon:
                raise InvalidArgument("--kstar must satisfy n < kstar <= n + horizon")
    elif cfg.theta0 is not None or cfg.theta1 is not None:
        raise InvalidArgument("--theta0/--theta1 describe simulations; drop them with --input")
    if cfg.input is not None and not Path(cfg.input).is_file():
        raise InvalidArgument(f"--input {cfg.input!r} is not a readable file")
    return model


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(subcommand=ns.subcommand)
    for key in ("model", "order", "intercept", "noise", "n", "kstar", "horizon", "alpha", "vexp",
                "boundary", "detector", "seed", "reps", "workers", "input", "format", "out"):
        setattr(cfg, key, getattr(ns, key))
    cfg.noise_theta = _floats(ns.noise_theta)
    cfg.theta0 = _floats(ns.theta0)
    cfg.theta1 = _floats(ns.theta1)
    if ns.subcommand == "quantiles":
        cfg.functional, cfg.dims, cfg.grid = ns.functional, ns.dims, ns.grid
        defaults = {"seed": limits.DEFAULT_SEED, "reps": limits.DEFAULT_REPS}
    else:
        defaults = {"seed": 0, "reps": 200}
    for key, value in defaults.items():
        if getattr(cfg, key) is None:
            setattr(cfg, key, value)
    if cfg.vexp is None:
        cfg.vexp = 2.0 if cfg.model == "garch" else 1.5
    return cfg


def echo_argv(echo: dict, out: Optional[str] = None) -> list:
    """Rebuild a command line from a ``# config`` echo.

    Keys produced during the run (tau, audit, ...) are ignored, as is the
    recorded output path; pass ``out`` to write the rerun somewhere.
    """
    argv = [echo["subcommand"]]
    for f in fields(RunConfig):
        name = f.name
        if name in ("subcommand", "version", "extras", "out"):
            continue
        if name in ("functional", "dims", "grid") and echo["subcommand"] != "quantiles":
            continue
        value = echo.get(name)
        flag = "--" + name.replace("_", "-")
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        elif isinstance(value, list):
            argv.append(f"{flag}={','.join(repr(float(v)) for v in value)}")
        else:
            argv.append(f"{flag}={value}")
    if out is not None:
        argv.append(f"--out={out}")
    return argv


def scan_config(cfg: RunConfig, horizon: Optional[int]) -> ScanConfig:
    bound = None if cfg.boundary is None else ConstantBoundary(cfg.boundary)
    return ScanConfig(v_exponent=cfg.vexp, alpha=cfg.alpha, boundary=bound, horizon=horizon)


# ---------------------------------------------------------------------------
# orchestration


def _emit(cfg: RunConfig, text: str, path: Optional[str] = None) -> None:
    path = path or cfg.out
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


def _series(cfg: RunConfig, model: ModelSpec) -> np.ndarray:
    if cfg.input is not None:
        x, dropped = ingest(cfg.input, cfg.format)
        cfg.extras["dropped_rows"] = dropped
        if dropped:
            log.warning("dropped %d rows with missing or nonpositive prices", dropped)
        return x
    th1 = None if cfg.theta1 is None else np.array(cfg.theta1)
    scen = ChangeScenario(np.array(cfg.theta0), cfg.n, cfg.horizon, th1, cfg.kstar)
    return simulate(model, scen, cfg.seed)


def _fit_model(cfg: RunConfig, model: ModelSpec) -> ModelSpec:
    """Model the detectors fit: simulated mean-shift noise is re-estimated from history."""
    if isinstance(model, MeanShift) and model.noise is not None and cfg.input is None:
        return MeanShift(model.noise, None, model.mean_bound)
    return model


def run_simulate(cfg: RunConfig, model: ModelSpec) -> int:
    x = _series(cfg, model)
    recs = [{"t": t, "x": v} for t, v in enumerate(x, start=1)]
    _emit(cfg, format_records(SERIES_FIELDS, recs, cfg.echo()))
    return EXIT_OK


def run_quantiles(cfg: RunConfig, model: ModelSpec) -> int:
    names = limits.FUNCTIONALS if cfg.functional == "all" else (cfg.functional,)
    tables = []
    for name in names:
        tables += limits.build_table(name, cfg.dims, grid_size=cfg.grid,
                                     replications=cfg.reps, seed=cfg.seed)
    log.info("config %s", json.dumps(cfg.echo(), sort_keys=True))
    _emit(cfg, limits.format_tables(tables))
    return EXIT_OK


def run_monitor(cfg: RunConfig, model: ModelSpec) -> int:
    x = _series(cfg, model)
    if x.size <= cfg.n:
        raise InvalidArgument(f"series has {x.size} points; need more than --n={cfg.n}")
    horizon = cfg.horizon if cfg.input is None else x.size - cfg.n
    cfg.extras["horizon_used"] = horizon
    out = monitor(_fit_model(cfg, model), x[:cfg.n], x[cfg.n:], scan_config(cfg, horizon), cfg.detector, cfg.kstar)
    cfg.extras.update(stopped=out.stopped, tau=out.tau, delay=out.delay,
                      threshold=out.threshold, skipped_total=out.skipped_total,
                      carried_steps=out.carried_steps)
    _emit(cfg, format_records(TRAJECTORY_FIELDS, out.trajectory, cfg.echo()))
    if out.stopped:
        log.warning("alarm at k=%d", out.tau)
        return EXIT_ALARM
    return EXIT_OK


def _delay_path(out: str) -> str:
    p = Path(out)
    return str(p.with_name(f"{p.stem}_delays{p.suffix or '.tsv'}"))


def run_bench_cmd(cfg: RunConfig, model: ModelSpec) -> int:
    detectors = (cfg.detector,) if cfg.detector != "c" else ("c", "q" if cfg.model == "meanshift" else "d")
    cfg.extras["detectors"] = list(detectors)
    th1 = None if cfg.theta1 is None else np.array(cfg.theta1)
    bc = BenchConfig(_fit_model(cfg, model), np.array(cfg.theta0), cfg.n, cfg.reps, th1, cfg.kstar,
                     cfg.horizon, detectors, seed=cfg.seed,
                     scan=scan_config(cfg, cfg.horizon), sim_model=model,
                     workers=cfg.workers)
    res = run_bench(bc)
    cfg.extras["failures"] = res.failures
    lf = level_fields(bc.checkpoints)
    text = format_records(lf, res.level_rows, cfg.echo())
    if res.delay_rows or cfg.kstar is not None:
        dtext = format_records(DELAY_FIELDS, res.delay_rows)
        if cfg.out is None:
            text += "\n" + dtext
        else:
            _emit(cfg, dtext, _delay_path(cfg.out))
    _emit(cfg, text)
    if res.empty:
        log.warning("zero replications requested; tables are empty")
        return EXIT_EMPTY
    if all(res.failures[d] == cfg.reps for d in detectors):
        log.error("every replication failed")
        return EXIT_RUNTIME
    return EXIT_OK


def run_segment(cfg: RunConfig, model: ModelSpec) -> int:
    x = _series(cfg, model)
    seg = segment(_fit_model(cfg, model), x, scan_config(cfg, None), initial_n=cfg.n)
    cfg.extras.update(n_obs=seg.n_obs, segments=seg.segments, audit_ok=seg.check(),
                      audit=[{"alarm_index": e.alarm_index, "break_index": e.break_index,
                              "rejected": e.rejected, "extended": e.extended, "note": e.note}
                             for e in seg.audit])
    _emit(cfg, format_records(SEGMENT_FIELDS, seg.records(), cfg.echo()))
    return EXIT_OK


COMMANDS = {"simulate": run_simulate, "quantiles": run_quantiles, "monitor": run_monitor,
            "bench": run_bench_cmd, "segment": run_segment}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2),
                        format="parmon: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(ns)
        model = validate(cfg)
    except InvalidArgument as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    try:
        return COMMANDS[cfg.subcommand](cfg, model)
    except InvalidArgument as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_RUNTIME
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
