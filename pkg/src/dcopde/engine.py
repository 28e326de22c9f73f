"""DE/rand/1/bin with sentinel change detection and pluggable survivor selection.

A run draws every random number from one generator seeded by
``DEConfig.seed``, so a (problem, strategy, config) triple always yields the
same trace.  All evaluations, including sentinel checks and re-evaluation
sweeps, go through the shared clock and count against the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from dcopde.constraints import Strategy
from dcopde.problem import (
    BudgetExhausted,
    ContractViolation,
    DynamicProblem,
    EvaluationClock,
    Individual,
    evaluate,
)

BOUND_POLICIES = ("resample", "reflect", "clamp")
CHANGE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DEConfig:
    """Parameters of one DE run.

    ``sentinels`` are 0-based population indices; the default ``(0, NP//2 - 1)``
    corresponds to members 1 and NP/2.
    """

    NP: int = 20
    F_range: tuple[float, float] = (0.2, 0.8)
    CR: float = 0.2
    seed: int = 0
    sentinels: Optional[tuple[int, ...]] = None
    bound_policy: str = "resample"

    def __post_init__(self):
        if self.NP < 4:
            raise ContractViolation("NP must be at least 4")
        if not 0.0 <= self.CR <= 1.0:
            raise ContractViolation("CR must lie in [0, 1]")
        lo, hi = self.F_range
        if not (0.0 < lo <= hi <= 2.0):
            raise ContractViolation("F_range must be a sub-interval of (0, 2]")
        if self.bound_policy not in BOUND_POLICIES:
            raise ContractViolation(f"bound_policy must be one of {BOUND_POLICIES}")
        if self.sentinels is None:
            object.__setattr__(self, "sentinels", tuple(sorted({0, self.NP // 2 - 1})))
        elif any(not 0 <= s < self.NP for s in self.sentinels):
            raise ContractViolation("sentinel indices must address population members")


class GenerationRecord(NamedTuple):
    generation: int
    evaluations: int
    t: int
    best_f: float
    best_phi: float
    worst_f: float
    window_best_f: float
    change_detected: bool


class FeasibleEvent(NamedTuple):
    """A new best feasible objective within a time window."""

    t: int
    evaluation: int  # 1-based position of the evaluation inside its window
    f: float


TRACE_COLUMNS = GenerationRecord._fields
EVENT_COLUMNS = FeasibleEvent._fields


@dataclass
class RunTrace:
    instance: str
    severity: int
    strategy: str
    seed: int
    NP: int
    fc: int
    max_times: int
    evaluations: int = 0
    generations: list[GenerationRecord] = field(default_factory=list)
    events: list[FeasibleEvent] = field(default_factory=list)

    def dumps(self) -> str:
        lines = ["\t".join(TRACE_COLUMNS)]
        for r in self.generations:
            lines.append("\t".join((
                str(r.generation), str(r.evaluations), str(r.t),
                _fmt(r.best_f), _fmt(r.best_phi), _fmt(r.worst_f), _fmt(r.window_best_f),
                "1" if r.change_detected else "0",
            )))
        return "\n".join(lines) + "\n"

    def dumps_events(self) -> str:
        lines = ["\t".join(EVENT_COLUMNS)]
        lines += [f"{e.t}\t{e.evaluation}\t{_fmt(e.f)}" for e in self.events]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        """Write the generation table to ``path`` and the feasible events beside it."""
        path = Path(path)
        path.write_text(self.dumps())
        events_path(path).write_text(self.dumps_events())

    @classmethod
    def load(cls, path, instance: str = "", severity: int = 0, strategy: str = "",
             seed: int = 0, NP: int = 20, fc: int = 1000, max_times: int = 10) -> "RunTrace":
        path = Path(path)
        trace = cls(instance, severity, strategy, seed, NP, fc, max_times)
        rows = _read_table(path, TRACE_COLUMNS)
        trace.generations = [
            GenerationRecord(int(g), int(e), int(t), float(bf), float(bp), float(wf), float(wb), c == "1")
            for g, e, t, bf, bp, wf, wb, c in rows
        ]
        trace.events = [FeasibleEvent(int(t), int(e), float(f)) for t, e, f in _read_table(events_path(path), EVENT_COLUMNS)]
        trace.evaluations = trace.generations[-1].evaluations if trace.generations else 0
        return trace


def events_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name.removesuffix(".tsv") + ".events.tsv")


def _fmt(v: float) -> str:
    return "NaN" if math.isnan(v) else f"{v:.17g}"


def _read_table(path: Path, columns) -> list[list[str]]:
    lines = Path(path).read_text().splitlines()
    if not lines or tuple(lines[0].split("\t")) != tuple(columns):
        raise ValueError(f"{path}: unexpected header")
    return [line.split("\t") for line in lines[1:] if line]


# -- variation operators -----------------------------------------------------

def pick_partners(NP: int, i: int, rng: np.random.Generator) -> tuple[int, int, int]:
    """Three distinct indices, all different from ``i``, uniformly without replacement."""
    pool = [j for j in range(NP) if j != i]
    u = rng.random(3)
    r0 = pool.pop(int(u[0] * len(pool)))
    r1 = pool.pop(int(u[1] * len(pool)))
    r2 = pool.pop(int(u[2] * len(pool)))
    return r0, r1, r2


def mutate(X: np.ndarray, i: int, F: float, rng: np.random.Generator) -> np.ndarray:
    """``x_r0 + F (x_r1 - x_r2)`` for random distinct partners of member ``i``."""
    if len(X) < 4:
        raise ContractViolation("mutation needs at least 4 members")
    r0, r1, r2 = pick_partners(len(X), i, rng)
    return X[r0] + F * (X[r1] - X[r2])


def crossover(target: np.ndarray, mutant: np.ndarray, CR: float, rng: np.random.Generator) -> np.ndarray:
    """Binomial crossover; component ``J_rand`` always comes from the mutant."""
    d = len(target)
    if len(mutant) != d:
        raise ContractViolation("target and mutant differ in length")
    j_rand = int(rng.random() * d)
    take = rng.random(d) <= CR
    take[j_rand] = True
    return np.where(take, mutant, target)


def repair_bounds(v: np.ndarray, lower: np.ndarray, upper: np.ndarray, policy: str,
                  rng: np.random.Generator) -> np.ndarray:
    """Bring ``v`` back into the box; components already inside are untouched."""
    low, high = v < lower, v > upper
    if not (low.any() or high.any()):
        return v
    v = v.copy()
    if policy == "resample":
        bad = low | high
        v[bad] = lower[bad] + rng.random(int(bad.sum())) * (upper - lower)[bad]
    elif policy == "clamp":
        np.clip(v, lower, upper, out=v)
    elif policy == "reflect":
        v = np.where(low, 2 * lower - v, np.where(high, 2 * upper - v, v))
        np.clip(v, lower, upper, out=v)
    else:
        raise ContractViolation(f"unknown bound policy {policy!r}")
    return v


# -- change detection ---------------------------------------------------------

def values_differ(cached: Individual, fresh: Individual, tol: float = CHANGE_TOLERANCE) -> bool:
    """Whether objective or any raw constraint violation moved by more than ``tol``."""
    if abs(cached.f_val - fresh.f_val) > tol:
        return True
    return any(abs(a - b) > tol for a, b in zip(cached.violations, fresh.violations))


def detect_change(pop: Sequence[Individual], problem: DynamicProblem, clock: EvaluationClock,
                  index: int = 0, ctx=None,
                  evaluator: Optional[Callable[[np.ndarray], Individual]] = None) -> bool:
    """Re-evaluate the sentinel ``pop[index]`` (one evaluation) and report a change.

    Violations are compared raw so that a growing normalisation denominator is
    not mistaken for an environmental change.
    """
    evaluator = evaluator or (lambda x: evaluate(problem, x, clock, ctx))
    cached = pop[index]
    return values_differ(cached, evaluator(cached.x))


def _deb_key(ind: Individual):
    return (ind.phi, ind.f_val)


class _WindowTracker:
    """Logs every new best feasible objective per time window."""

    def __init__(self, fc: int):
        self.fc = fc
        self.best: dict[int, float] = {}
        self.events: list[FeasibleEvent] = []
        self.last_t = 0

    def see(self, ind: Individual, total_evaluations: int):
        self.last_t = ind.eval_time_index
        if ind.feasible and ind.f_val < self.best.get(ind.eval_time_index, math.inf):
            self.best[ind.eval_time_index] = ind.f_val
            position = total_evaluations - ind.eval_time_index * self.fc
            self.events.append(FeasibleEvent(ind.eval_time_index, position, ind.f_val))

    def window_best(self) -> float:
        return self.best.get(self.last_t, math.nan)


def run(problem: DynamicProblem, strategy: Strategy, config: DEConfig, clock: EvaluationClock,
        *, instance: str = "", severity: int = 0) -> RunTrace:
    """Run DE until the clock's budget is spent and return the per-generation trace."""
    if clock.total_evaluations:
        raise ContractViolation("run needs a fresh clock")
    rng = np.random.default_rng(config.seed)
    lower, upper = problem.lower, problem.upper
    NP, CR = config.NP, config.CR
    F_lo, F_hi = config.F_range
    sentinels = set(config.sentinels)
    tracker = _WindowTracker(clock.fc)
    trace = RunTrace(instance or problem.name, severity or problem.S, strategy.name, config.seed,
                     NP, clock.fc, clock.max_times)

    def ev(x) -> Individual:
        ind = evaluate(problem, x, clock, strategy.ctx)
        tracker.see(ind, clock.total_evaluations)
        return ind

    strategy.reset_window()
    pop: list[Individual] = []
    try:
        for _ in range(NP):
            pop.append(ev(lower + rng.random(problem.dimension) * (upper - lower)))
    except BudgetExhausted:
        raise ContractViolation("budget smaller than one population") from None

    G = 0
    done = False
    while not done and not clock.exhausted:
        G += 1
        changed = False
        strategy.begin_generation(pop)
        X = np.array([ind.x for ind in pop])
        work = list(pop)
        trials: list[Individual] = []
        try:
            for i in range(NP):
                if i in sentinels and detect_change(work, problem, clock, i, evaluator=ev):
                    changed = True
                    strategy.reset_window()
                    work = [ev(ind.x) for ind in work]
                    trials = [ev(ind.x) for ind in trials]
                    strategy.begin_generation(work)
                F = F_lo + (F_hi - F_lo) * rng.random()
                v = mutate(X, i, F, rng)
                u = repair_bounds(crossover(X[i], v, CR, rng), lower, upper, config.bound_policy, rng)
                trial = ev(u)
                if strategy.pairwise:
                    if strategy.prefer_trial(work[i], trial):
                        work[i] = trial
                else:
                    trials.append(trial)
        except BudgetExhausted:
            done = True
        if not strategy.pairwise and trials:
            work = strategy.select(work, trials, rng)
        pop = work
        best = min(pop, key=_deb_key)
        worst = max(pop, key=_deb_key)
        trace.generations.append(GenerationRecord(
            G, clock.total_evaluations, tracker.last_t, best.f_val, best.phi, worst.f_val,
            tracker.window_best(), changed,
        ))
    trace.evaluations = clock.total_evaluations
    trace.events = tracker.events
    return trace
