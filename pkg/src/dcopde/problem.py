"""Dynamic constrained problems, evaluated individuals and the evaluation clock.

A problem is frozen at a discrete time index ``t`` for ``fc`` consecutive
evaluations.  The clock turns the running evaluation count into that index,
so every evaluation is charged against the same budget no matter who asks
for it (trial vectors, sentinel checks, re-evaluation sweeps).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np

#: Default tolerance turning an equality ``h(x) = 0`` into ``|h(x)| <= delta``.
EQ_TOLERANCE = 1e-4

Function = Callable[[np.ndarray, int], np.ndarray]


class ContractViolation(ValueError):
    """A caller broke a documented precondition."""


class BudgetExhausted(RuntimeError):
    """The clock has handed out all ``max_times * fc`` evaluations."""


class ViolationNormalizer(Protocol):
    def violation(self, g: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, float]: ...


@dataclass(frozen=True)
class DynamicProblem:
    """Time-parameterised objective, constraints and box bounds.

    ``objective``, ``inequality`` and ``equality`` take ``(x, t)`` where ``x``
    has shape ``(..., D)``; they return shape ``(...)``, ``(..., m)`` and
    ``(..., p)`` respectively, so the same callables serve single points and
    Monte Carlo batches.
    """

    name: str
    lower: np.ndarray
    upper: np.ndarray
    objective: Function
    inequality: Optional[Function] = None
    equality: Optional[Function] = None
    m: int = 0
    p: int = 0
    k: float = 0.5
    S: int = 20
    fc: int = 1000
    has_dynamic_constraints: bool = False

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ContractViolation("bounds must be 1-D arrays of equal length")
        if not np.all(lower < upper):
            raise ContractViolation("every lower bound must be below its upper bound")
        if self.m < 0 or self.p < 0:
            raise ContractViolation("constraint counts must be non-negative")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def f(self, x, t: int):
        return self.objective(np.asarray(x, dtype=float), t)

    def g(self, x, t: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.inequality is None:
            return np.zeros(x.shape[:-1] + (0,))
        return self.inequality(x, t)

    def h(self, x, t: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.equality is None:
            return np.zeros(x.shape[:-1] + (0,))
        return self.equality(x, t)

    def is_feasible(self, x, t: int, eq_tolerance: float = EQ_TOLERANCE):
        """Vectorised feasibility test (``g <= 0`` and ``|h| <= eq_tolerance``)."""
        ok = np.all(self.g(x, t) <= 0.0, axis=-1)
        if self.p:
            ok &= np.all(np.abs(self.h(x, t)) <= eq_tolerance, axis=-1)
        return ok

    def frozen(self, t: int) -> "DynamicProblem":
        """The snapshot at time ``t`` as a problem that no longer changes."""
        objective, inequality, equality = self.objective, self.inequality, self.equality
        return DynamicProblem(
            name=f"{self.name}@t={t}",
            lower=self.lower,
            upper=self.upper,
            objective=lambda x, _t: objective(x, t),
            inequality=None if inequality is None else (lambda x, _t: inequality(x, t)),
            equality=None if equality is None else (lambda x, _t: equality(x, t)),
            m=self.m,
            p=self.p,
            k=self.k,
            S=self.S,
            fc=self.fc,
            has_dynamic_constraints=False,
        )


@dataclass(frozen=True, slots=True)
class Individual:
    """A decision vector with the values cached at its last evaluation.

    ``violations`` holds the raw per-constraint violations (inequalities
    first, then equalities); ``phi`` is their normalised sum.
    """

    x: np.ndarray
    f_val: float
    phi: float
    feasible: bool
    eval_time_index: int
    violations: tuple = ()


@dataclass
class EvaluationClock:
    """Evaluation counter that doubles as the discrete simulation time."""

    fc: int = 1000
    max_times: int = 10
    total_evaluations: int = 0
    t: int = field(default=0)

    def __post_init__(self):
        if self.fc <= 0:
            raise ContractViolation("fc must be positive")
        if self.max_times <= 0:
            raise ContractViolation("max_times must be positive")

    @property
    def budget(self) -> int:
        return self.fc * self.max_times

    @property
    def exhausted(self) -> bool:
        return self.total_evaluations >= self.budget

    @property
    def remaining(self) -> int:
        return max(self.budget - self.total_evaluations, 0)


def advance_time(clock: EvaluationClock) -> int:
    """Refresh and return ``clock.t = total_evaluations // fc``."""
    clock.t = clock.total_evaluations // clock.fc
    return clock.t


def raw_violations(g: np.ndarray, h: np.ndarray, eq_tolerance: float = EQ_TOLERANCE) -> np.ndarray:
    return np.concatenate((np.maximum(g, 0.0), np.maximum(np.abs(h) - eq_tolerance, 0.0)))


def evaluate(
    problem: DynamicProblem,
    x,
    clock: EvaluationClock,
    ctx: Optional[ViolationNormalizer] = None,
) -> Individual:
    """Evaluate ``x`` at the clock's current time and charge one evaluation.

    The evaluation that lands on a multiple of ``fc`` still belongs to the
    old time step; the new step starts with the next call.  ``ctx`` supplies
    the normalisation of the violation sum; without it the raw violations
    are summed.
    """
    x = np.array(x, dtype=float)
    x.setflags(write=False)
    if x.shape != problem.lower.shape:
        raise ContractViolation(f"expected a vector of length {problem.dimension}, got shape {x.shape}")
    if np.any(x < problem.lower) or np.any(x > problem.upper):
        raise ContractViolation("x lies outside the box bounds")
    if clock.exhausted:
        raise BudgetExhausted(f"budget of {clock.budget} evaluations used up")

    t = advance_time(clock)
    f_val = float(problem.objective(x, t))
    g = problem.inequality(x, t) if problem.inequality is not None else np.zeros(0)
    h = problem.equality(x, t) if problem.equality is not None else np.zeros(0)
    if ctx is None:
        viol = raw_violations(g, h)
        phi = float(viol.sum())
    else:
        viol, phi = ctx.violation(g, h)
    clock.total_evaluations += 1
    advance_time(clock)
    return Individual(x, f_val, phi, phi == 0.0, t, tuple(viol.tolist()))
