"""The 14 constrained members of the dynamic G24 family.

Every instance is ``min f(x, t)`` over ``x1 in [0, 3]``, ``x2 in [0, 4]``.
Objectives are either the linear form ``-(p1(t) x1 + p2(t) x2)`` or, for
G24_8b, a peak moving on a circle.  Constraints are the two quartic G24
constraints with ``x2`` shifted by ``s2(t)``, or the piecewise G24_6 set.

Dynamics are read from :data:`TABLE`; nothing else in this module carries
instance-specific numbers, so the transcription can be audited in one place.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from dcopde.problem import ContractViolation, DynamicProblem

LOWER = np.array([0.0, 0.0])
UPPER = np.array([3.0, 4.0])
SEVERITIES = (10, 20, 50)

# G24_8b peak path: centre (C1, C2), radius RA.
C1 = 1.470561702
C2 = 3.442094786232
RA = 0.858958496


# -- time-dependent parameters ---------------------------------------------

def _one(t, k, S):
    return 1.0


def _zero(t, k, S):
    return 0.0


def _sine(t, k, S):
    return math.sin(k * math.pi * t + math.pi / 2)


def _sine_unit(t, k, S):
    # G24_6 switches sign every step whatever the objective severity.
    return math.sin(math.pi * t + math.pi / 2)


def _alt_p1(t, k, S):
    # p1 moves on even steps and holds on odd ones.
    t = t if t % 2 == 0 else t - 1
    return math.sin(k * math.pi * t / 2 + math.pi / 2)


def _alt_p2(t, k, S):
    # p2 moves on odd steps and holds on even ones; p2(0) = p2(-1).
    t = t if t % 2 != 0 else t - 1
    return math.sin(k * math.pi * (t - 1) / 2 + math.pi / 2)


def _shift_grow(t, k, S):
    return t * (UPPER[1] - LOWER[1]) / S


def _shift_shrink_from_two(t, k, S):
    return 2.0 - t * (UPPER[1] - LOWER[1]) / S


def _two(t, k, S):
    return 2.0


# -- objectives ------------------------------------------------------------

def _linear(x, p1, p2):
    return -(p1 * x[..., 0] + p2 * x[..., 1])


def _moving_peak(x, t, k):
    # X_i = p_i (x_i + q_i) with p_i = -1 and q the negated circle point.
    d1 = x[..., 0] - (C1 + RA * math.cos(k * math.pi * t))
    d2 = x[..., 1] - (C2 + RA * math.sin(k * math.pi * t))
    return -3.0 * np.exp(-np.sqrt(d1 * d1 + d2 * d2))


# -- constraints -----------------------------------------------------------

def _stack(*gs):
    if np.ndim(gs[0]) == 0:
        return np.array(gs, dtype=float)
    return np.stack(np.broadcast_arrays(*gs), axis=-1).astype(float)


def _g24_pair(x, s2):
    y1 = x[..., 0]
    y2 = x[..., 1] + s2
    y1_2 = y1 * y1
    y1_3 = y1_2 * y1
    y1_4 = y1_2 * y1_2
    g1 = -2.0 * y1_4 + 8.0 * y1_3 - 8.0 * y1_2 + y2 - 2.0
    g2 = -4.0 * y1_4 + 32.0 * y1_3 - 88.0 * y1_2 + 96.0 * y1 + y2 - 36.0
    return g1, g2


def _indicator(inside):
    return np.where(inside, -1.0, 1.0)


def _g3(x):
    return 2.0 * x[..., 0] + 3.0 * x[..., 1] - 9.0


def _g4(x):
    y1 = x[..., 0]
    return _indicator(((0 <= y1) & (y1 <= 1)) | ((2 <= y1) & (y1 <= 3)))


def _g5(x):
    y1 = x[..., 0]
    return _indicator(((0 <= y1) & (y1 <= 0.5)) | ((2 <= y1) & (y1 <= 2.5)))


def _g6(x):
    y1, y2 = x[..., 0], x[..., 1]
    return _indicator(((0 <= y1) & (y1 <= 1) & (2 <= y2) & (y2 <= 3)) | ((2 <= y1) & (y1 <= 3)))


PIECEWISE = {"g3": _g3, "g4": _g4, "g5": _g5, "g6": _g6}


@dataclass(frozen=True)
class G24Spec:
    """One row of the transcription table."""

    id: str
    p1: Callable = _one
    p2: Callable = _one
    s2: Callable = _zero
    peak: bool = False
    piecewise: tuple = ()
    dynamic_constraints: bool = False
    feasible_pct: tuple = (44.2, 44.2)


TABLE = {
    s.id: s
    for s in (
        G24Spec("G24_1", p1=_sine),
        G24Spec("G24_f"),
        G24Spec("G24_2", p1=_alt_p1, p2=_alt_p2),
        G24Spec("G24_3", s2=_shift_shrink_from_two, dynamic_constraints=True, feasible_pct=(7.1, 49.21)),
        G24Spec("G24_3b", p1=_sine, s2=_shift_shrink_from_two, dynamic_constraints=True, feasible_pct=(7.1, 49.21)),
        G24Spec("G24_3f", s2=_two, feasible_pct=(7.1, 7.1)),
        G24Spec("G24_4", p1=_sine, s2=_shift_grow, dynamic_constraints=True, feasible_pct=(0.0, 44.2)),
        G24Spec("G24_5", p1=_alt_p1, p2=_alt_p2, s2=_shift_grow, dynamic_constraints=True, feasible_pct=(0.0, 44.2)),
        G24Spec("G24_6a", p1=_sine_unit, piecewise=("g3", "g6"), feasible_pct=(16.68, 16.68)),
        G24Spec("G24_6b", p1=_sine_unit, piecewise=("g3",), feasible_pct=(50.01, 50.01)),
        G24Spec("G24_6c", p1=_sine_unit, piecewise=("g3", "g4"), feasible_pct=(33.33, 33.33)),
        G24Spec("G24_6d", p1=_sine_unit, piecewise=("g5", "g6"), feasible_pct=(20.91, 20.91)),
        G24Spec("G24_7", s2=_shift_grow, dynamic_constraints=True, feasible_pct=(0.0, 44.2)),
        G24Spec("G24_8b", peak=True),
    )
}

INSTANCE_IDS = tuple(TABLE)
STATIC_IDS = tuple(i for i, s in TABLE.items() if not s.dynamic_constraints)
DYNAMIC_IDS = tuple(i for i, s in TABLE.items() if s.dynamic_constraints)


def make_instance(id: str, k: float = 0.5, S: int = 20, fc: int = 1000) -> DynamicProblem:
    """Build the G24 instance ``id`` with objective severity ``k`` and constraint severity ``S``."""
    try:
        spec = TABLE[id]
    except KeyError:
        raise ContractViolation(f"unknown G24 instance {id!r}; expected one of {', '.join(INSTANCE_IDS)}") from None
    if S not in SEVERITIES:
        raise ContractViolation(f"severity S must be one of {SEVERITIES}, got {S}")
    if not k > 0:
        raise ContractViolation("k must be positive")
    if fc <= 0:
        raise ContractViolation("fc must be positive")

    if spec.peak:
        def objective(x, t):
            return _moving_peak(x, t, k)
    else:
        def objective(x, t):
            return _linear(x, spec.p1(t, k, S), spec.p2(t, k, S))

    if spec.piecewise:
        parts = [PIECEWISE[name] for name in spec.piecewise]

        def inequality(x, t):
            return _stack(*(g(x) for g in parts))

        m = len(parts)
    else:
        def inequality(x, t):
            return _stack(*_g24_pair(x, spec.s2(t, k, S)))

        m = 2

    return DynamicProblem(
        name=id,
        lower=LOWER,
        upper=UPPER,
        objective=objective,
        inequality=inequality,
        m=m,
        p=0,
        k=k,
        S=S,
        fc=fc,
        has_dynamic_constraints=spec.dynamic_constraints,
    )


def stream_seed(*parts) -> int:
    """64-bit seed from a named tuple, stable across processes and versions."""
    digest = hashlib.blake2b("|".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def feasible_region_ratio(
    instance: str, severity: int, t: int, n_samples: int = 10**6, seed: int = 0, k: float = 0.5
) -> float:
    """Fraction of uniform samples in the box that are feasible at time ``t``."""
    problem = make_instance(instance, k=k, S=severity)
    rng = np.random.default_rng(stream_seed(seed, instance, severity, t, "ratio"))
    feasible = 0
    chunk = 250_000
    for start in range(0, n_samples, chunk):
        n = min(chunk, n_samples - start)
        x = problem.lower + rng.random((n, problem.dimension)) * (problem.upper - problem.lower)
        feasible += int(np.count_nonzero(problem.is_feasible(x, t)))
    return feasible / n_samples


# -- oracle optima -------------------------------------------------------------

@dataclass(frozen=True)
class OptimumEntry:
    f_star: float
    witness: Optional[np.ndarray]

    @property
    def present(self) -> bool:
        return self.witness is not None


class OptimaTable:
    """Reference optimum per ``(instance, severity, t)``; missing entries mean "no feasible point found"."""

    COLUMNS = ("id", "S", "t", "f_star", "x1", "x2")

    def __init__(self, entries: Optional[dict] = None):
        self.entries: dict[tuple[str, int, int], OptimumEntry] = dict(entries or {})

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, OptimaTable) or self.entries.keys() != other.entries.keys():
            return False
        for key, a in self.entries.items():
            b = other.entries[key]
            if a.present != b.present or (a.present and (a.f_star != b.f_star or not np.array_equal(a.witness, b.witness))):
                return False
        return True

    def set(self, instance: str, severity: int, t: int, f_star: float, witness=None):
        w = None if witness is None else np.asarray(witness, dtype=float)
        self.entries[(instance, int(severity), int(t))] = OptimumEntry(float(f_star), w)

    def entry(self, instance: str, severity: int, t: int) -> Optional[OptimumEntry]:
        return self.entries.get((instance, int(severity), int(t)))

    def f_star(self, instance: str, severity: int, t: int) -> float:
        """Reference optimum, or NaN when absent."""
        e = self.entry(instance, severity, t)
        return e.f_star if e is not None and e.present else math.nan

    def for_cell(self, instance: str, severity: int) -> dict[int, float]:
        return {t: (e.f_star if e.present else math.nan)
                for (i, s, t), e in sorted(self.entries.items()) if i == instance and s == severity}

    def update(self, other: "OptimaTable"):
        self.entries.update(other.entries)

    def dumps(self) -> str:
        lines = ["\t".join(self.COLUMNS)]
        for (i, s, t), e in sorted(self.entries.items()):
            if e.present:
                vals = [f"{e.f_star:.17g}", f"{e.witness[0]:.17g}", f"{e.witness[1]:.17g}"]
            else:
                vals = ["NaN", "NaN", "NaN"]
            lines.append("\t".join([i, str(s), str(t), *vals]))
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "OptimaTable":
        rows = [line.split("\t") for line in text.splitlines() if line.strip()]
        if not rows or tuple(rows[0]) != cls.COLUMNS:
            raise ValueError("not an optima table: bad header")
        table = cls()
        for i, s, t, f, x1, x2 in rows[1:]:
            if f == "NaN":
                table.set(i, int(s), int(t), math.nan, None)
            else:
                table.set(i, int(s), int(t), float(f), [float(x1), float(x2)])
        return table

    @classmethod
    def load(cls, path) -> "OptimaTable":
        return cls.loads(Path(path).read_text())


def _oracle_de(problem: DynamicProblem, runs: int, budget: int, rng: np.random.Generator,
               pop_size: int = 40, cr: float = 0.9):
    """Vectorised DE/rand/1/bin with feasibility rules, ``runs`` independent populations at once.

    Returns the best feasible ``(f, x)`` over every evaluated point, or ``None``.
    """
    lo, hi = problem.lower, problem.upper
    d = problem.dimension
    gens = max(budget // pop_size - 1, 1)

    def score(x):
        f = problem.f(x, 0)
        phi = np.maximum(problem.g(x, 0), 0.0).sum(axis=-1)
        return f, phi

    x = lo + rng.random((runs, pop_size, d)) * (hi - lo)
    f, phi = score(x)
    best_f, best_x = math.inf, None

    def track(xs, fs, phis):
        nonlocal best_f, best_x
        masked = np.where(phis == 0.0, fs, np.inf)
        j = np.unravel_index(np.argmin(masked), masked.shape)
        if masked[j] < best_f:
            best_f, best_x = float(masked[j]), xs[j].copy()

    track(x, f, phi)
    rows = np.arange(runs)[:, None]
    for _ in range(gens):
        # three distinct partners per target, all different from the target
        idx = np.argsort(rng.random((runs, pop_size, pop_size)), axis=-1)
        own = np.arange(pop_size)[None, :, None]
        idx = np.where(idx == own, idx[..., -1:], idx)[..., :3]
        r0, r1, r2 = (x[rows, idx[..., j]] for j in range(3))
        F = rng.uniform(0.4, 0.9, (runs, pop_size, 1))
        v = r0 + F * (r1 - r2)
        bad = (v < lo) | (v > hi)
        v = np.where(bad, lo + rng.random(v.shape) * (hi - lo), v)
        mask = rng.random((runs, pop_size, d)) <= cr
        mask[rows, np.arange(pop_size)[None, :], rng.integers(0, d, (runs, pop_size))] = True
        u = np.where(mask, v, x)
        fu, phiu = score(u)
        track(u, fu, phiu)
        feas_u, feas_x = phiu == 0.0, phi == 0.0
        take = np.where(feas_u & feas_x, fu <= f, np.where(feas_u | feas_x, feas_u, phiu <= phi))
        x = np.where(take[..., None], u, x)
        f = np.where(take, fu, f)
        phi = np.where(take, phiu, phi)
    if best_x is None:
        return None
    return best_f, best_x


def compute_oracle_optima(
    instance: str,
    severity: int,
    runs: int = 30,
    budget: int = 20_000,
    seed: int = 0,
    k: float = 0.5,
    times: Optional[Iterable[int]] = None,
    max_times: int = 10,
) -> OptimaTable:
    """Best feasible objective per time index over ``runs`` independent DE runs.

    Each run optimises the frozen snapshot at ``t`` with ``budget``
    evaluations.  The stored value is the objective re-evaluated at the
    witness, so the table is self-consistent to the last bit.
    """
    if runs < 1:
        raise ContractViolation("runs must be positive")
    problem = make_instance(instance, k=k, S=severity)
    table = OptimaTable()
    for t in (range(max_times + 1) if times is None else times):
        rng = np.random.default_rng(stream_seed(seed, instance, severity, t, "oracle"))
        found = _oracle_de(problem.frozen(t), runs, budget, rng)
        if found is None:
            table.set(instance, severity, t, math.nan, None)
            continue
        _, x = found
        table.set(instance, severity, t, float(problem.f(x, t)), x)
    return table
