"""Experiment orchestration: configuration, seeded grid execution, result store, reports.

Store layout under the output directory::

    manifest.json                         config, config hash, per-run seeds, versions
    optima/<instance>_S<S>.tsv            reference optima (OptimaTable format)
    traces/<instance>/S<S>/<strategy>/run<NN>.tsv  (+ .events.tsv)
    reports/                              tables, tabular exports, plot data

Everything except the manifest's timestamp is a pure function of the config.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy

from dcopde import __version__
from dcopde.constraints import STRATEGY_NAMES, StrategyParams, make_strategy
from dcopde.engine import DEConfig, RunTrace, events_path, run
from dcopde.g24 import (
    INSTANCE_IDS,
    SEVERITIES,
    STATIC_IDS,
    OptimaTable,
    compute_oracle_optima,
    make_instance,
    stream_seed,
)
from dcopde.measures import MEASURES, MeasureReport, aggregate, generation_errors, run_measures
from dcopde.problem import EvaluationClock
from dcopde import stats

log = logging.getLogger(__name__)

OUT_ENV = "DCOPDE_OUT"
STRATEGY_ORDER = ("epsilon", "feasibility", "penalty", "stochastic")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    instances: tuple = INSTANCE_IDS
    severities: tuple = SEVERITIES
    strategies: tuple = STRATEGY_ORDER
    runs: int = 30
    NP: int = 20
    CR: float = 0.2
    F_range: tuple = (0.2, 0.8)
    fc: int = 1000
    T: int = 10
    k: float = 0.5
    seed: int = 0
    bound_policy: str = "resample"
    pf: float = 0.45
    cp: float = 5.0
    theta_frac: float = 0.2
    tc_frac: float = 0.2
    penalty_factor: float = 2.5
    eq_tolerance: float = 1e-4
    oracle: bool = True
    oracle_runs: int = 30
    oracle_budget: int = 20_000
    out: str = "results"
    workers: int = 1
    resume: bool = False

    # keys that change where/how fast results are produced but never their content
    RUNTIME_KEYS = ("out", "workers", "resume")

    def __post_init__(self):
        for name in ("instances", "severities", "strategies", "F_range"):
            setattr(self, name, tuple(getattr(self, name)))
        unknown = [i for i in self.instances if i not in INSTANCE_IDS]
        if unknown:
            raise ConfigError(f"unknown instances: {', '.join(unknown)}")
        bad = [s for s in self.severities if s not in SEVERITIES]
        if bad:
            raise ConfigError(f"severities must be drawn from {SEVERITIES}, got {bad}")
        unknown = [s for s in self.strategies if s not in STRATEGY_NAMES]
        if unknown:
            raise ConfigError(f"unknown strategies: {', '.join(unknown)}")
        if not (self.instances and self.severities and self.strategies):
            raise ConfigError("instances, severities and strategies must be non-empty")
        if self.runs < 1 or self.T < 1 or self.fc < 1 or self.workers < 1:
            raise ConfigError("runs, T, fc and workers must be positive")
        if len(self.F_range) != 2:
            raise ConfigError("F_range needs two values")

    def to_dict(self) -> dict:
        return {f.name: _jsonable(getattr(self, f.name)) for f in dataclasses.fields(self)}

    def content_hash(self) -> str:
        """Hash of every key that influences results."""
        d = {k: v for k, v in self.to_dict().items() if k not in self.RUNTIME_KEYS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def strategy_params(self) -> StrategyParams:
        return StrategyParams(self.pf, self.cp, self.theta_frac, self.tc_frac,
                              self.penalty_factor, self.eq_tolerance)

    def de_config(self, seed: int) -> DEConfig:
        return DEConfig(NP=self.NP, F_range=tuple(self.F_range), CR=self.CR, seed=seed,
                        bound_policy=self.bound_policy)


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


# -- config parsing ----------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def parse_value(key: str, text: str):
    """Convert the text of config key ``key`` to its typed value."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = _FIELDS[key].default
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, tuple):
            items = [s.strip() for s in text.split(",") if s.strip()]
            if key == "severities":
                return tuple(int(s) for s in items)
            if key == "F_range":
                return tuple(float(s) for s in items)
            return tuple(items)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; list values are comma-separated."""
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, text = (s.strip() for s in line.split("=", 1))
        values[key] = parse_value(key, text)
    return values


def load_config(path=None, overrides: Optional[Mapping] = None, env: Optional[Mapping] = None) -> ExperimentConfig:
    """Defaults <- config file <- environment (output dir only) <- explicit overrides."""
    values = read_config_file(path) if path else {}
    env = os.environ if env is None else env
    if env.get(OUT_ENV):
        values["out"] = env[OUT_ENV]
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        values[key] = parse_value(key, v) if isinstance(v, str) else v
    return ExperimentConfig(**values)


# -- grid and seeds ------------------------------------------------------------

def cells(config: ExperimentConfig) -> list[tuple[str, int]]:
    """(instance, S) pairs; static-constraint instances keep a single severity.

    The kept severity is 20 when requested, else the first one listed.
    """
    out = []
    for inst in config.instances:
        if inst in STATIC_IDS:
            sev = 20 if 20 in config.severities else config.severities[0]
            out.append((inst, sev))
        else:
            out.extend((inst, s) for s in config.severities)
    return out


def run_seed(master: int, instance: str, severity: int, strategy: str, run_index: int) -> int:
    return stream_seed(master, instance, severity, strategy, run_index)


@dataclass(frozen=True)
class RunTask:
    instance: str
    severity: int
    strategy: str
    run_index: int
    seed: int


def tasks(config: ExperimentConfig) -> list[RunTask]:
    return [
        RunTask(inst, sev, strat, r, run_seed(config.seed, inst, sev, strat, r))
        for inst, sev in cells(config)
        for strat in config.strategies
        for r in range(config.runs)
    ]


# -- store ---------------------------------------------------------------------

@dataclass
class ResultStore:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    def optima_path(self, instance: str, severity: int) -> Path:
        return self.root / "optima" / f"{instance}_S{severity}.tsv"

    def trace_path(self, instance: str, severity: int, strategy: str, run_index: int) -> Path:
        return self.root / "traces" / instance / f"S{severity}" / strategy / f"run{run_index:02d}.tsv"

    def has_trace(self, task: RunTask) -> bool:
        p = self.trace_path(task.instance, task.severity, task.strategy, task.run_index)
        return p.exists() and events_path(p).exists()

    def load_trace(self, task: RunTask, config: ExperimentConfig) -> RunTrace:
        p = self.trace_path(task.instance, task.severity, task.strategy, task.run_index)
        return RunTrace.load(p, task.instance, task.severity, task.strategy, task.seed,
                             config.NP, config.fc, config.T)

    def load_optima(self, instance: str, severity: int) -> Optional[OptimaTable]:
        p = self.optima_path(instance, severity)
        return OptimaTable.load(p) if p.exists() else None

    def read_manifest(self) -> Optional[dict]:
        return json.loads(self.manifest_path.read_text()) if self.manifest_path.exists() else None


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_trace(store: ResultStore, task: RunTask, trace: RunTrace):
    p = store.trace_path(task.instance, task.severity, task.strategy, task.run_index)
    # events first: a trace file without its sidecar never counts as complete
    _write_atomic(events_path(p), trace.dumps_events())
    _write_atomic(p, trace.dumps())


def write_manifest(store: ResultStore, config: ExperimentConfig, task_list: Sequence[RunTask]):
    manifest = {
        "config": config.to_dict(),
        "config_hash": config.content_hash(),
        "versions": {"dcopde": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "seeds": {f"{t.instance}/S{t.severity}/{t.strategy}/{t.run_index}": t.seed for t in task_list},
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _write_atomic(store.manifest_path, json.dumps(manifest, indent=1, sort_keys=True) + "\n")


# -- oracle --------------------------------------------------------------------

def ensure_optima(config: ExperimentConfig, store: ResultStore, force: bool = False) -> dict:
    """Load or compute the optima of every cell; returns {(instance, S): {t: f*}}."""
    optima = {}
    for inst, sev in cells(config):
        table = None if force else store.load_optima(inst, sev)
        if table is None:
            if not config.oracle and not force:
                raise ConfigError(f"no optima for {inst} S={sev} and oracle mode is disabled; "
                                  f"run the 'oracle' subcommand first")
            log.info("oracle %s S=%d", inst, sev)
            table = compute_oracle_optima(inst, sev, runs=config.oracle_runs, budget=config.oracle_budget,
                                          seed=config.seed, k=config.k, max_times=config.T)
            _write_atomic(store.optima_path(inst, sev), table.dumps())
        optima[(inst, sev)] = table.for_cell(inst, sev)
    return optima


# -- execution -----------------------------------------------------------------

def execute(task: RunTask, config: ExperimentConfig) -> RunTrace:
    """One seeded run of the grid."""
    problem = make_instance(task.instance, k=config.k, S=task.severity, fc=config.fc)
    strategy = make_strategy(task.strategy, config.strategy_params(), NP=config.NP,
                             generations_per_window=config.fc / (config.NP + 2))
    clock = EvaluationClock(config.fc, config.T)
    return run(problem, strategy, config.de_config(task.seed), clock,
               instance=task.instance, severity=task.severity)


def _execute_and_save(args):
    task, config, root = args
    save_trace(ResultStore(root), task, execute(task, config))
    return task


def run_experiment(config: ExperimentConfig) -> ResultStore:
    """Execute the grid, skipping finished runs when resuming a matching store."""
    store = ResultStore(config.out)
    previous = store.read_manifest()
    if config.resume and previous and previous.get("config_hash") != config.content_hash():
        raise ConfigError(f"{store.root} holds results of a different configuration; "
                          f"use a fresh output directory or drop --resume")
    ensure_optima(config, store)
    task_list = tasks(config)
    write_manifest(store, config, task_list)
    todo = [t for t in task_list if not (config.resume and store.has_trace(t))]
    log.info("%d runs (%d already present)", len(todo), len(task_list) - len(todo))
    jobs = [(t, config, str(store.root)) for t in todo]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for _ in pool.map(_execute_and_save, jobs, chunksize=max(1, len(jobs) // (8 * config.workers))):
                pass
    else:
        for job in jobs:
            _execute_and_save(job)
    return store


# -- reporting -----------------------------------------------------------------

@dataclass
class CellResult:
    instance: str
    severity: int
    per_strategy: dict[str, list[dict]] = field(default_factory=dict)
    reports: dict[str, MeasureReport] = field(default_factory=dict)
    mean_errors: dict[str, np.ndarray] = field(default_factory=dict)
    missing: list[RunTask] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing


def collect(config: ExperimentConfig, store: Optional[ResultStore] = None) -> list[CellResult]:
    """Per-run measures of every cell present in the store."""
    store = store or ResultStore(config.out)
    results = []
    for inst, sev in cells(config):
        cell = CellResult(inst, sev)
        table = store.load_optima(inst, sev)
        optima = table.for_cell(inst, sev) if table else {}
        for strat in config.strategies:
            rows, curves = [], []
            for r in range(config.runs):
                task = RunTask(inst, sev, strat, r, run_seed(config.seed, inst, sev, strat, r))
                if table is None or not store.has_trace(task):
                    cell.missing.append(task)
                    continue
                trace = store.load_trace(task, config)
                rows.append(run_measures(trace, optima))
                curves.append(generation_errors(trace, optima))
            cell.per_strategy[strat] = rows
            if rows:
                cell.reports[strat] = aggregate(rows)
                n = min(len(c) for c in curves)
                cell.mean_errors[strat] = np.mean([c[:n] for c in curves], axis=0)
        results.append(cell)
    return results


def fmt(v: float, digits: int = 3) -> str:
    return "NaN" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.{digits}f}"


def measures_tsv(results: Sequence[CellResult]) -> str:
    lines = ["instance\tS\tstrategy\tmeasure\tmean\tstd\tn_runs"]
    for cell in results:
        for strat, rep in cell.reports.items():
            for row in rep.rows(cell.instance, cell.severity, strat):
                inst, sev, s, m, mean, std, n = row
                lines.append(f"{inst}\t{sev}\t{s}\t{m}\t{_num(mean)}\t{_num(std)}\t{n}")
    return "\n".join(lines) + "\n"


def runs_tsv(results: Sequence[CellResult]) -> str:
    lines = ["instance\tS\tstrategy\trun\t" + "\t".join(MEASURES)]
    for cell in results:
        for strat, rows in cell.per_strategy.items():
            for r, row in enumerate(rows):
                lines.append(f"{cell.instance}\t{cell.severity}\t{strat}\t{r}\t"
                             + "\t".join(_num(row[m]) for m in MEASURES))
    return "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return "NaN" if math.isnan(v) else f"{v:.17g}"


def offline_error_table(results: Sequence[CellResult], strategies: Sequence[str]) -> str:
    """Mean(±std) modified offline error per cell; the lowest mean is starred."""
    lines = ["instance\tS\t" + "\t".join(strategies)]
    for cell in results:
        means = {s: cell.reports[s].mean["M_off_e"] for s in strategies if s in cell.reports}
        finite = {s: m for s, m in means.items() if not math.isnan(m)}
        best = min(finite, key=finite.get) if finite else None
        cols = []
        for s in strategies:
            if s not in cell.reports:
                cols.append("missing")
                continue
            rep = cell.reports[s]
            text = f"{fmt(rep.mean['M_off_e'])}(±{fmt(rep.std['M_off_e'])})"
            cols.append(text + ("*" if s == best else ""))
        lines.append(f"{cell.instance}\t{cell.severity}\t" + "\t".join(cols))
    return "\n".join(lines) + "\n"


def measure_blocks(results: Sequence[CellResult], strategies: Sequence[str]) -> str:
    """AE, CS, PR, FR, SR mean(±std) blocks, one per cell."""
    out = []
    for cell in results:
        out.append(f"{cell.instance} S={cell.severity}")
        out.append("measure\t" + "\t".join(strategies))
        for m in ("AE_t", "CS_t", "PR_t", "FR_t", "SR_t"):
            cols = []
            for s in strategies:
                rep = cell.reports.get(s)
                if rep is None or math.isnan(rep.mean[m]):
                    cols.append("NaN")
                else:
                    cols.append(f"{fmt(rep.mean[m], 2)}(±{fmt(rep.std[m], 2)})")
            out.append(m + "\t" + "\t".join(cols))
        out.append("")
    return "\n".join(out)


def comparisons(results: Sequence[CellResult], strategies: Sequence[str]) -> list[tuple[str, int, stats.ComparisonResult]]:
    """Kruskal-Wallis + post hoc on per-run offline errors of each complete cell."""
    rows = []
    for cell in results:
        samples = {s: [r["M_off_e"] for r in cell.per_strategy.get(s, []) if not math.isnan(r["M_off_e"])]
                   for s in strategies}
        if all(len(v) >= 2 for v in samples.values()) and len(samples) >= 2:
            rows.append((cell.instance, cell.severity, stats.compare(samples)))
    return rows


def plot_data(cell: CellResult) -> str:
    strategies = list(cell.mean_errors)
    n = min((len(v) for v in cell.mean_errors.values()), default=0)
    lines = ["generation\t" + "\t".join(strategies)]
    for g in range(n):
        lines.append(f"{g + 1}\t" + "\t".join(_num(float(cell.mean_errors[s][g])) for s in strategies))
    return "\n".join(lines) + "\n"


def make_report(config: ExperimentConfig, store: Optional[ResultStore] = None) -> dict[str, Path]:
    """Write every report file; cells with missing runs are listed in ``gaps.tsv``."""
    store = store or ResultStore(config.out)
    results = collect(config, store)
    strategies = list(config.strategies)
    rep = store.reports
    files = {
        "offline_error.tsv": offline_error_table(results, strategies),
        "dominance.tsv": stats.dominance_matrix(comparisons([c for c in results if c.complete], strategies),
                                                strategies),
        "measures.tsv": measures_tsv(results),
        "runs.tsv": runs_tsv(results),
        "measure_blocks.txt": measure_blocks(results, strategies),
        "gaps.tsv": "instance\tS\tstrategy\trun\n" + "".join(
            f"{t.instance}\t{t.severity}\t{t.strategy}\t{t.run_index}\n" for c in results for t in c.missing),
    }
    written = {}
    for name, text in files.items():
        _write_atomic(rep / name, text)
        written[name] = rep / name
    for cell in results:
        if cell.mean_errors:
            p = rep / "plots" / f"{cell.instance}_S{cell.severity}.tsv"
            _write_atomic(p, plot_data(cell))
            written[p.name] = p
    return written
