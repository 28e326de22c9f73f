"""Dynamic performance measures computed from run traces and reference optima.

Per run: modified offline error, feasibility ratio, success ratio, average
evaluations to first success, convergence score and progress ratio.  Runs
are aggregated into mean/std pairs by :func:`aggregate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from dcopde.engine import RunTrace

SUCCESS_PRECISION = 1e-4
MEASURES = ("M_off_e", "FR_t", "SR_t", "AE_t", "CS_t", "PR_t")


@dataclass
class TimeWindowRecord:
    t: int
    first_feasible_f: Optional[float]
    best_f: Optional[float]
    any_feasible_found: bool
    success: bool
    evals_to_first_success: Optional[int]
    errors: list[float] = field(default_factory=list)

    @property
    def best_feasible(self) -> bool:
        return self.any_feasible_found


def windows(trace: RunTrace, optima: Mapping[int, float],
            precision: float = SUCCESS_PRECISION) -> list[TimeWindowRecord]:
    """Summarise each of the ``trace.max_times`` windows of a run.

    ``optima`` maps a time index to its reference optimum (NaN when absent).
    A window without a reference optimum can never count as successful.
    """
    by_t: dict[int, list] = {t: [] for t in range(trace.max_times)}
    for e in trace.events:
        by_t.setdefault(e.t, []).append(e)
    errors: dict[int, list[float]] = {t: [] for t in by_t}
    for g, e in zip(trace.generations, generation_errors(trace, optima)):
        errors.setdefault(g.t, []).append(e)

    records = []
    for t in range(trace.max_times):
        ev = by_t[t]
        f_star = optima.get(t, math.nan)
        first_success = None
        if not math.isnan(f_star):
            first_success = next((e.evaluation for e in ev if abs(e.f - f_star) <= precision), None)
        records.append(TimeWindowRecord(
            t=t,
            first_feasible_f=ev[0].f if ev else None,
            best_f=ev[-1].f if ev else None,
            any_feasible_found=bool(ev),
            success=first_success is not None,
            evals_to_first_success=first_success,
            errors=errors.get(t, []),
        ))
    return records


def generation_errors(trace: RunTrace, optima: Mapping[int, float]) -> list[float]:
    """``|f*(t) - f|`` per generation, with ``f`` the best feasible value of the
    window so far or, before any feasible point, the population's worst member."""
    out = []
    for g in trace.generations:
        f = g.window_best_f if not math.isnan(g.window_best_f) else g.worst_f
        out.append(abs(optima.get(g.t, math.nan) - f))
    return out


def offline_error(trace: RunTrace, optima: Mapping[int, float]) -> float:
    """Modified offline error: mean per-generation error; NaN if any optimum is missing."""
    errs = generation_errors(trace, optima)
    return float(np.mean(errs)) if errs else math.nan


def feasibility_ratio(records: Sequence[TimeWindowRecord]) -> float:
    if not records:
        raise ValueError("need at least one window")
    return sum(r.any_feasible_found for r in records) / len(records)


def success_ratio(records: Sequence[TimeWindowRecord]) -> float:
    if not records:
        raise ValueError("need at least one window")
    return sum(r.success for r in records) / len(records)


def average_evaluations(records: Sequence[TimeWindowRecord]) -> float:
    """Mean in-window evaluation count of the first success; NaN without successes."""
    hits = [r.evals_to_first_success for r in records if r.success]
    return float(np.mean(hits)) if hits else math.nan


def convergence_score(ae: float, sr: float) -> float:
    if ae is None or sr is None or math.isnan(ae) or math.isnan(sr) or sr == 0:
        return math.nan
    return ae / sr


def window_progress(f_first: float, f_best: float) -> float:
    if f_best > 0:
        ratio = f_first / f_best
    elif f_best == 0:
        ratio = (f_first + 1) / (f_best + 1)
    else:
        ratio = (f_first + 2 * abs(f_best)) / (f_best + 2 * abs(f_best))
    return abs(math.log(math.sqrt(ratio)))


def progress_ratio(records: Sequence[TimeWindowRecord]) -> float:
    """Mean log-improvement from first to best feasible value over windows with a feasible point."""
    vals = [window_progress(r.first_feasible_f, r.best_f) for r in records if r.any_feasible_found]
    return float(np.mean(vals)) if vals else math.nan


def run_measures(trace: RunTrace, optima: Mapping[int, float]) -> dict[str, float]:
    """All six measures of one run; undefined values are NaN."""
    recs = windows(trace, optima)
    ae = average_evaluations(recs)
    sr = success_ratio(recs)
    return {
        "M_off_e": offline_error(trace, optima),
        "FR_t": feasibility_ratio(recs),
        "SR_t": sr,
        "AE_t": ae,
        "CS_t": convergence_score(ae, sr),
        "PR_t": progress_ratio(recs),
    }


@dataclass
class MeasureReport:
    """Mean/std of each measure over the runs where it is defined."""

    mean: dict[str, float]
    std: dict[str, float]
    n_runs: dict[str, int]

    def rows(self, instance: str, severity: int, strategy: str) -> list[tuple]:
        return [(instance, severity, strategy, m, self.mean[m], self.std[m], self.n_runs[m]) for m in MEASURES]


def aggregate(per_run: Sequence[Mapping[str, float]]) -> MeasureReport:
    """Population mean and std (ddof=0) over runs, skipping NaN entries."""
    mean, std, n = {}, {}, {}
    for m in MEASURES:
        vals = np.array([r[m] for r in per_run if not math.isnan(r[m])], dtype=float)
        n[m] = int(vals.size)
        mean[m] = float(vals.mean()) if vals.size else math.nan
        std[m] = float(vals.std()) if vals.size else math.nan
    return MeasureReport(mean, std, n)
