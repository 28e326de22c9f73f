"""Differential evolution for dynamic constrained optimization.

Four constraint-handling strategies (static penalty, feasibility rules,
epsilon-constrained, stochastic ranking) plugged into a DE/rand/1/bin
loop with sentinel change detection, the constrained G24 dynamic suite,
dynamic performance measures and a nonparametric comparison harness.
"""

from dcopde.problem import (
    BudgetExhausted,
    ContractViolation,
    DynamicProblem,
    EvaluationClock,
    Individual,
    advance_time,
    evaluate,
)
from dcopde.g24 import INSTANCE_IDS, make_instance
from dcopde.constraints import make_strategy
from dcopde.engine import DEConfig, RunTrace, run

__version__ = "0.1.0"

__all__ = [
    "BudgetExhausted",
    "ContractViolation",
    "DEConfig",
    "DynamicProblem",
    "EvaluationClock",
    "INSTANCE_IDS",
    "Individual",
    "RunTrace",
    "advance_time",
    "evaluate",
    "make_instance",
    "make_strategy",
    "run",
]
