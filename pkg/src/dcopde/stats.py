"""Nonparametric comparison of strategies on one (instance, severity) cell.

Kruskal-Wallis omnibus test, Dunn's joint-rank post hoc test with
Bonferroni adjustment, and a normality diagnostic.  Dominance is decided at
``ALPHA`` with lower values (errors) being better.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2, norm, rankdata

from dcopde.problem import ContractViolation

ALPHA = 0.05

#: Column numbers used in dominance tables; unknown labels are numbered after these.
STRATEGY_INDEX = {"epsilon": 1, "feasibility": 2, "penalty": 3, "stochastic": 4}

OUTPERFORMS = "outperforms"
DOMINATED = "dominated"
NO_DIFFERENCE = "none"


@dataclass(frozen=True)
class SampleGroup:
    label: str
    values: tuple

    def __init__(self, label: str, values):
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ContractViolation(f"group {label!r} is empty")
        if not all(math.isfinite(v) for v in vals):
            raise ContractViolation(f"group {label!r} has non-finite values")
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "values", vals)


@dataclass
class ComparisonResult:
    """Omnibus result plus pairwise adjusted p-values and dominance.

    ``relation[(a, b)]`` is ``OUTPERFORMS`` when ``a`` is significantly
    better (lower) than ``b``, ``DOMINATED`` for the reverse and
    ``NO_DIFFERENCE`` otherwise; it is stored for both orders.
    """

    labels: list[str]
    H: float
    p: float
    p_adjusted: dict[tuple[str, str], float] = field(default_factory=dict)
    relation: dict[tuple[str, str], str] = field(default_factory=dict)
    mean_ranks: dict[str, float] = field(default_factory=dict)

    def outperformed_by(self, label: str) -> list[str]:
        """Labels that ``label`` beats significantly."""
        return [o for o in self.labels if o != label and self.relation[(label, o)] == OUTPERFORMS]

    def dominating(self, label: str) -> list[str]:
        """Labels that beat ``label`` significantly."""
        return [o for o in self.labels if o != label and self.relation[(label, o)] == DOMINATED]


def _pooled(groups: Sequence[SampleGroup]):
    if len(groups) < 2:
        raise ContractViolation("need at least two groups")
    if any(len(g.values) < 2 for g in groups):
        raise ContractViolation("each group needs at least two values")
    values = np.concatenate([np.asarray(g.values) for g in groups])
    sizes = np.array([len(g.values) for g in groups])
    return values, sizes


def _tie_term(ranks: np.ndarray) -> float:
    _, counts = np.unique(ranks, return_counts=True)
    return float(np.sum(counts ** 3 - counts))


def kruskal_wallis(groups: Sequence[SampleGroup]) -> tuple[float, float]:
    """H statistic with tie correction and its chi-square p-value (k-1 dof)."""
    values, sizes = _pooled(groups)
    N = values.size
    ranks = rankdata(values)
    correction = 1.0 - _tie_term(ranks) / (N ** 3 - N)
    if correction <= 0:
        return 0.0, 1.0
    bounds = np.cumsum(sizes)[:-1]
    rank_sums = np.array([r.sum() for r in np.split(ranks, bounds)])
    H = (12.0 / (N * (N + 1)) * np.sum(rank_sums ** 2 / sizes) - 3 * (N + 1)) / correction
    H = max(float(H), 0.0)
    return H, float(chi2.sf(H, len(groups) - 1))


def posthoc_bonferroni(groups: Sequence[SampleGroup], alpha: float = ALPHA) -> ComparisonResult:
    """Dunn's test on the joint ranking, Bonferroni-adjusted, gated on the omnibus test."""
    values, sizes = _pooled(groups)
    labels = [g.label for g in groups]
    if len(set(labels)) != len(labels):
        raise ContractViolation("group labels must be unique")
    H, p = kruskal_wallis(groups)
    N = values.size
    ranks = rankdata(values)
    bounds = np.cumsum(sizes)[:-1]
    mean_ranks = {lab: float(r.mean()) for lab, r in zip(labels, np.split(ranks, bounds))}
    variance = N * (N + 1) / 12.0 - _tie_term(ranks) / (12.0 * (N - 1))
    pairs = list(itertools.combinations(range(len(groups)), 2))
    result = ComparisonResult(labels, H, p, mean_ranks=mean_ranks)
    for i, j in pairs:
        a, b = labels[i], labels[j]
        if variance <= 0:
            p_adj = 1.0
        else:
            se = math.sqrt(variance * (1.0 / sizes[i] + 1.0 / sizes[j]))
            z = (mean_ranks[a] - mean_ranks[b]) / se
            p_adj = min(1.0, 2.0 * float(norm.sf(abs(z))) * len(pairs))
        result.p_adjusted[(a, b)] = result.p_adjusted[(b, a)] = p_adj
        if p < alpha and p_adj < alpha and mean_ranks[a] != mean_ranks[b]:
            better, worse = (a, b) if mean_ranks[a] < mean_ranks[b] else (b, a)
            result.relation[(better, worse)] = OUTPERFORMS
            result.relation[(worse, better)] = DOMINATED
        else:
            result.relation[(a, b)] = result.relation[(b, a)] = NO_DIFFERENCE
    return result


def ks_normality(values) -> float:
    """Kolmogorov-Smirnov p-value against a normal fitted by sample mean and std.

    The statistic uses estimated parameters, so the p-value comes from the
    Lilliefors null distribution.  A constant sample returns 0.
    """
    from statsmodels.stats.diagnostic import lilliefors

    x = np.asarray(values, dtype=float)
    if x.size < 5:
        raise ContractViolation("need at least 5 values")
    if np.ptp(x) == 0:
        return 0.0
    return float(lilliefors(x, dist="norm", pvalmethod="table")[1])


def compare(samples: Mapping[str, Sequence[float]], alpha: float = ALPHA) -> ComparisonResult:
    """Shortcut: build groups from a label -> values mapping and run the post hoc test."""
    return posthoc_bonferroni([SampleGroup(k, v) for k, v in samples.items()], alpha)


def dominance_cell(result: ComparisonResult, label: str, index: Mapping[str, int]) -> str:
    """Cell text like ``3(-), 4(+)``: ``X(-)`` means ``label`` outperformed X,
    ``X(+)`` means ``label`` was dominated by X; ``-`` when nothing is significant."""
    marks = []
    for other in sorted((o for o in result.labels if o != label), key=lambda o: index[o]):
        rel = result.relation[(label, other)]
        if rel == OUTPERFORMS:
            marks.append(f"{index[other]}(-)")
        elif rel == DOMINATED:
            marks.append(f"{index[other]}(+)")
    return ", ".join(marks) if marks else "-"


def dominance_matrix(rows: Sequence[tuple[str, int, ComparisonResult]],
                     strategies: Sequence[str]) -> str:
    """Tab-separated dominance table: one row per (instance, S), one column per strategy."""
    index = dict(STRATEGY_INDEX)
    for s in strategies:
        index.setdefault(s, len(index) + 1)
    header = ["instance", "S"] + [f"{s}({index[s]})" for s in strategies]
    lines = ["\t".join(header)]
    for instance, severity, result in rows:
        cells = [dominance_cell(result, s, index) if s in result.labels else "NaN" for s in strategies]
        lines.append("\t".join([instance, str(severity)] + cells))
    return "\n".join(lines) + "\n"
