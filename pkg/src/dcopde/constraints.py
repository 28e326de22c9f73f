"""Constraint-handling techniques as survivor-selection policies.

Four strategies share one interface: static penalty, feasibility rules,
epsilon-constrained comparison and stochastic ranking.  Each strategy
instance owns the mutable state of a single run (violation normalisation,
epsilon schedule) and must not be shared between runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dcopde.problem import EQ_TOLERANCE, ContractViolation, Individual

PENALTY_FACTOR = 2.5
STRATEGY_NAMES = ("epsilon", "feasibility", "penalty", "stochastic")


@dataclass
class ViolationContext:
    """Running per-constraint maxima used to normalise the violation sum.

    Maxima only grow within a time window; :meth:`reset` starts a new one.
    The arrays are sized by the first point seen after a reset.
    """

    eq_tolerance: float = EQ_TOLERANCE
    max_g: np.ndarray | None = None
    max_h: np.ndarray | None = None

    def reset(self):
        self.max_g = None
        self.max_h = None

    def violation(self, g, h) -> tuple[np.ndarray, float]:
        """Raw violations of one point and their normalised sum."""
        vg = np.maximum(np.asarray(g, dtype=float), 0.0)
        vh = np.maximum(np.abs(np.asarray(h, dtype=float)) - self.eq_tolerance, 0.0)
        phi = violation_sum(vg, vh, self, raw=True)
        return np.concatenate((vg, vh)), phi


def violation_sum(g, h, ctx: ViolationContext, raw: bool = False) -> float:
    """Normalised sum of constraint violation.

    Updates ``ctx`` with this point's violations first, then divides each
    violation by its running maximum floored at 1.  With ``raw=False`` the
    inputs are constraint values; with ``raw=True`` they are already
    violations (``max(0, g)`` and ``max(0, |h| - delta)``).
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if not raw:
        g = np.maximum(g, 0.0)
        h = np.maximum(np.abs(h) - ctx.eq_tolerance, 0.0)
    if ctx.max_g is None:
        ctx.max_g = np.zeros(g.shape)
        ctx.max_h = np.zeros(h.shape)
    elif ctx.max_g.shape != g.shape or ctx.max_h.shape != h.shape:
        raise ContractViolation("constraint count changed within a window")
    np.maximum(ctx.max_g, g, out=ctx.max_g)
    np.maximum(ctx.max_h, h, out=ctx.max_h)
    total = float(np.sum(g / np.maximum(ctx.max_g, 1.0)))
    if h.size:
        total += float(np.sum(h / np.maximum(ctx.max_h, 1.0)))
    return total


def penalized_fitness(f: float, phi: float, factor: float = PENALTY_FACTOR) -> float:
    return f + factor * phi


def deb_compare(a: Individual, b: Individual) -> Individual:
    """Feasibility rules; ``a`` is the incumbent and wins exact ties.

    Two infeasible points with identical violation fall back to the
    objective, i.e. the order is lexicographic in ``(phi, f)``.
    """
    if a.feasible and b.feasible:
        return a if a.f_val <= b.f_val else b
    if a.feasible != b.feasible:
        return a if a.feasible else b
    if a.phi == b.phi:
        return a if a.f_val <= b.f_val else b
    return a if a.phi < b.phi else b


def eps_compare(a: Individual, b: Individual, eps: float, strict: bool = False) -> Individual:
    """Epsilon-level comparison ``a <_eps b`` (``strict``) or ``a <=_eps b``.

    Returns ``a`` when the relation holds, else ``b``.  With ``strict=False``
    the incumbent ``a`` keeps its place on exact ties.
    """
    if eps < 0:
        raise ContractViolation("epsilon must be non-negative")
    if (a.phi <= eps and b.phi <= eps) or a.phi == b.phi:
        wins = a.f_val < b.f_val if strict else a.f_val <= b.f_val
    else:
        wins = a.phi < b.phi
    return a if wins else b


@dataclass
class EpsilonState:
    """Decaying epsilon level, restarted at every time window."""

    Tc: int
    cp: float = 5.0
    theta: int = 4
    eps0: float = 0.0
    eps: float = 0.0
    G: int = 0

    def reset(self):
        self.G = 0


def eps_update(state: EpsilonState, population: Sequence[Individual]) -> float:
    """Advance the schedule by one generation and return the epsilon level.

    On the first call of a window the initial level is the violation of the
    ``theta``-th least violating member.
    """
    if state.G == 0:
        phis = sorted(ind.phi for ind in population)
        state.eps0 = phis[min(state.theta, len(phis)) - 1]
    G = state.G
    if G < state.Tc:
        state.eps = state.eps0 * (1.0 - G / state.Tc) ** state.cp
    else:
        state.eps = 0.0
    state.G += 1
    return state.eps


def sr_sort(population: Sequence[Individual], pf: float, rng: np.random.Generator) -> list[int]:
    """Stochastic ranking: bubble-sort sweeps with a random choice of key.

    Adjacent pairs are compared by objective when both are feasible or with
    probability ``pf``, otherwise by violation.  A fresh uniform number is
    drawn for every comparison.  Returns the ranking as a list of indices.
    """
    n = len(population)
    if n == 0:
        raise ContractViolation("cannot rank an empty population")
    order = list(range(n))
    f = [ind.f_val for ind in population]
    phi = [ind.phi for ind in population]
    for _ in range(n):
        swapped = False
        u = rng.random(n - 1)
        for j in range(n - 1):
            a, b = order[j], order[j + 1]
            if (phi[a] == 0.0 and phi[b] == 0.0) or u[j] < pf:
                swap = f[a] > f[b]
            else:
                swap = phi[a] > phi[b]
            if swap:
                order[j], order[j + 1] = b, a
                swapped = True
        if not swapped:
            break
    return order


class Strategy:
    """Survivor-selection policy for one run.

    Pairwise strategies decide target-versus-trial inline through
    :meth:`prefer_trial`; the others rank the union of targets and trials in
    :meth:`select`.
    """

    name = ""
    pairwise = True

    def __init__(self, eq_tolerance: float = EQ_TOLERANCE):
        self.ctx = ViolationContext(eq_tolerance=eq_tolerance)

    def reset_window(self):
        """Forget per-window state; called at run start and after a detected change."""
        self.ctx.reset()

    def begin_generation(self, population: Sequence[Individual]):
        pass

    def prefer_trial(self, target: Individual, trial: Individual) -> bool:
        raise NotImplementedError

    def select(self, targets: Sequence[Individual], trials: Sequence[Individual],
               rng: np.random.Generator) -> list[Individual]:
        if len(targets) != len(trials):
            raise ContractViolation("targets and trials must have the same size")
        return [u if self.prefer_trial(x, u) else x for x, u in zip(targets, trials)]


class PenaltyStrategy(Strategy):
    name = "penalty"

    def __init__(self, penalty_factor: float = PENALTY_FACTOR, eq_tolerance: float = EQ_TOLERANCE):
        super().__init__(eq_tolerance)
        self.penalty_factor = penalty_factor

    def prefer_trial(self, target, trial):
        return (penalized_fitness(trial.f_val, trial.phi, self.penalty_factor)
                < penalized_fitness(target.f_val, target.phi, self.penalty_factor))


class FeasibilityStrategy(Strategy):
    name = "feasibility"

    def prefer_trial(self, target, trial):
        return deb_compare(target, trial) is trial


class EpsilonStrategy(Strategy):
    name = "epsilon"

    def __init__(self, Tc: int = 9, cp: float = 5.0, theta: int = 4, eq_tolerance: float = EQ_TOLERANCE):
        super().__init__(eq_tolerance)
        self.state = EpsilonState(Tc=max(int(Tc), 1), cp=cp, theta=max(int(theta), 1))

    @property
    def eps(self) -> float:
        return self.state.eps

    def reset_window(self):
        super().reset_window()
        self.state.reset()

    def begin_generation(self, population):
        eps_update(self.state, population)

    def prefer_trial(self, target, trial):
        return eps_compare(target, trial, self.state.eps, strict=False) is trial


class StochasticRankingStrategy(Strategy):
    name = "stochastic"
    pairwise = False

    def __init__(self, pf: float = 0.45, eq_tolerance: float = EQ_TOLERANCE):
        super().__init__(eq_tolerance)
        if not 0.0 <= pf <= 1.0:
            raise ContractViolation("pf must lie in [0, 1]")
        if pf >= 0.5:
            warnings.warn(f"pf={pf} >= 0.5 lets objective comparisons dominate infeasible ones", stacklevel=2)
        self.pf = pf

    def select(self, targets, trials, rng):
        n = len(targets)
        if len(trials) > n:
            raise ContractViolation("more trials than targets")
        union = list(targets) + list(trials)
        order = sr_sort(union, self.pf, rng)
        return [union[i] for i in order[:n]]


@dataclass
class StrategyParams:
    """Hyperparameters addressable by config key."""

    pf: float = 0.45
    cp: float = 5.0
    theta_frac: float = 0.2
    tc_frac: float = 0.2
    penalty_factor: float = PENALTY_FACTOR
    eq_tolerance: float = EQ_TOLERANCE


def make_strategy(name: str, params: StrategyParams | None = None, NP: int = 20,
                  generations_per_window: float = 1000 / 22) -> Strategy:
    """Strategy instance by name: ``penalty``, ``feasibility``, ``epsilon`` or ``stochastic``."""
    params = params or StrategyParams()
    if name == "penalty":
        return PenaltyStrategy(params.penalty_factor, params.eq_tolerance)
    if name == "feasibility":
        return FeasibilityStrategy(params.eq_tolerance)
    if name == "epsilon":
        return EpsilonStrategy(
            Tc=max(round(params.tc_frac * generations_per_window), 1),
            cp=params.cp,
            theta=max(math.ceil(params.theta_frac * NP), 1),
            eq_tolerance=params.eq_tolerance,
        )
    if name == "stochastic":
        return StochasticRankingStrategy(params.pf, params.eq_tolerance)
    raise ContractViolation(f"unknown strategy {name!r}; expected one of {', '.join(STRATEGY_NAMES)}")


def select_survivors(strategy: Strategy, targets: Sequence[Individual], trials: Sequence[Individual],
                     rng: np.random.Generator) -> list[Individual]:
    """Next population from ``targets`` and their ``trials`` under ``strategy``."""
    if len(targets) != len(trials):
        raise ContractViolation("targets and trials must have the same size")
    return strategy.select(targets, trials, rng)
