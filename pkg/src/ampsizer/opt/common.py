"""Evaluation bookkeeping shared by every optimizer.

Optimizers work on the unit cube. A :class:`Recorder` turns a unit vector
into one charged function evaluation: decode, simulate every corner, reduce
to the worst case, score, log. It also replays a previous log so that an
interrupted run can be continued by re-running the optimizer with the same
seed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import AmpSizerError, ReplayMismatch
from ..metrics import (
    FAILURE_VIOLATION,
    ConstraintSpec,
    MetricInfo,
    MetricVector,
    Status,
    moo_objectives,
    soo_objective,
    worst_case,
)
from ..space import DesignPoint, DesignSpace, PvtCorner, decode


@dataclass(frozen=True)
class Budget:
    max_fe: int = 1000
    repetitions: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.max_fe < 1:
            raise ValueError("max_fe must be at least 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")


ObjectiveFn = Callable[[MetricVector], "float | tuple[float, ...]"]


@dataclass(frozen=True)
class Objective:
    """How a worst-case vector is scored. ``width`` > 1 marks a vector objective."""
    name: str
    fn: ObjectiveFn
    width: int = 1

    @property
    def failure_value(self):
        return -math.inf if self.width == 1 else (-math.inf,) * self.width


SOO = Objective("soo", soo_objective)
MOO = Objective("moo", moo_objectives, 7)


@dataclass(frozen=True)
class Outcome:
    status: Status
    worst: MetricVector
    objective: float | tuple[float, ...]
    violation: tuple[float, ...]
    margins: tuple[float, ...]
    corners: tuple[tuple[PvtCorner, MetricVector], ...] = ()

    @property
    def feasible(self) -> bool:
        return self.status is Status.OK and all(v == 0.0 for v in self.violation)

    @property
    def total_violation(self) -> float:
        return math.fsum(self.violation)


def assess(corners: Sequence[tuple[PvtCorner, MetricVector]], constraints: ConstraintSpec,
           objective: Objective, catalog: Mapping[str, MetricInfo] | None = None) -> Outcome:
    """Score one design from its per-corner results.

    Violation and margin of each constraint are the largest over corners, so
    a point is feasible only if every corner meets every constraint. The
    objective is computed from the worst-case vector.
    """
    corners = tuple(corners)
    ncon = max(1, len(constraints))
    bad = next((mv.status for _, mv in corners if not mv.ok), None)
    if bad is None:
        try:
            worst = worst_case([mv for _, mv in corners], catalog)
            per = [[c.violation(mv[c.metric]) for c in constraints] for _, mv in corners]
            mar = [[c.margin(mv[c.metric]) for c in constraints] for _, mv in corners]
            viol = tuple(max(col) for col in zip(*per)) if constraints.constraints else ()
            margins = tuple(max(col) for col in zip(*mar)) if constraints.constraints else ()
            obj = objective.fn(worst)
            if objective.width > 1:
                obj = tuple(float(v) for v in obj)
            else:
                obj = float(obj)
            return Outcome(Status.OK, worst, obj, viol, margins, corners)
        except (AmpSizerError, ArithmeticError, ValueError):
            bad = Status.SIM_FAILED
    sentinel = (FAILURE_VIOLATION,) * ncon
    return Outcome(bad, MetricVector({}, bad), objective.failure_value, sentinel, sentinel,
                   corners)


def better(a: Outcome, b: Outcome) -> bool:
    """Feasibility-first strict ordering on scalar outcomes."""
    fa, fb = a.feasible, b.feasible
    if fa != fb:
        return fa
    if fa:
        return a.objective > b.objective
    return a.total_violation < b.total_violation


@dataclass(frozen=True)
class EvalLogEntry:
    fe: int
    u: tuple[float, ...]
    point: DesignPoint
    outcome: Outcome
    t_wall: float = 0.0
    t_sim: float = 0.0
    t_model: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.outcome.feasible

    @property
    def objective(self):
        return self.outcome.objective

    @property
    def violation(self) -> tuple[float, ...]:
        return self.outcome.violation

    @property
    def status(self) -> Status:
        return self.outcome.status

    @property
    def worst(self) -> MetricVector:
        return self.outcome.worst


class BudgetExhausted(Exception):
    """Raised by the recorder when an optimizer asks for one FE too many."""


# evaluator: design point -> list of (corner, metric vector)
Evaluator = Callable[[DesignPoint], Sequence[tuple[PvtCorner, MetricVector]]]


class Recorder:
    def __init__(self, space: DesignSpace, evaluator: Evaluator, constraints: ConstraintSpec,
                 objective: Objective, max_fe: int,
                 replay: Sequence[EvalLogEntry] = (),
                 on_entry: Callable[[EvalLogEntry], None] | None = None,
                 record_timing: bool = True,
                 catalog: Mapping[str, MetricInfo] | None = None):
        self.space = space
        self.catalog = catalog
        self.evaluator = evaluator
        self.constraints = constraints
        self.objective = objective
        self.max_fe = max_fe
        self.replay = list(replay)
        self.on_entry = on_entry
        self.record_timing = record_timing
        self.log: list[EvalLogEntry] = []
        self._mark = time.perf_counter()

    @property
    def used(self) -> int:
        return len(self.log)

    @property
    def remaining(self) -> int:
        return self.max_fe - len(self.log)

    def evaluate(self, u: Sequence[float]) -> EvalLogEntry:
        if self.remaining <= 0:
            raise BudgetExhausted()
        u = tuple(float(x) for x in np.clip(np.asarray(u, dtype=float), 0.0, 1.0))
        fe = len(self.log) + 1
        if fe <= len(self.replay):
            old = self.replay[fe - 1]
            if old.fe != fe or old.u != u:
                raise ReplayMismatch(f"FE {fe}: logged proposal differs from the optimizer's")
            self.log.append(old)
            self._mark = time.perf_counter()
            return old
        point = decode(self.space, u)
        t0 = time.perf_counter()
        corners = self.evaluator(point)
        t1 = time.perf_counter()
        outcome = assess(corners, self.constraints, self.objective, self.catalog)
        t2 = time.perf_counter()
        if self.record_timing:
            wall = t2 - self._mark
            sim = t1 - t0
            model = max(0.0, wall - sim)
        else:
            wall = sim = model = 0.0
        entry = EvalLogEntry(fe, u, point, outcome, wall, sim, model)
        self._mark = t2
        self.log.append(entry)
        if self.on_entry is not None:
            self.on_entry(entry)
        return entry

    def best(self) -> EvalLogEntry | None:
        return best_entry(self.log)


def best_entry(log: Sequence[EvalLogEntry]) -> EvalLogEntry | None:
    """Best feasible scalar entry, else the least violating one; ties go to the earliest."""
    best = None
    for e in log:
        if best is None or better(e.outcome, best.outcome):
            best = e
    return best


def best_so_far(log: Sequence[EvalLogEntry]) -> list[tuple[int, float]]:
    """(fe, best feasible objective) from the first feasible entry onwards."""
    out = []
    cur = None
    for e in log:
        if e.feasible and (cur is None or e.objective > cur):
            cur = e.objective
        if cur is not None:
            out.append((e.fe, cur))
    return out


@dataclass
class OptimizeResult:
    best: EvalLogEntry | None
    log: list[EvalLogEntry]
    archive: object | None = None
    hv_log: list[tuple[int, float]] = field(default_factory=list)
    model_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.best is not None and self.best.feasible

    @property
    def fe_count(self) -> int:
        return len(self.log)


def check_budget(recorder_or_max: "Recorder | int", needed: int, what: str) -> None:
    from ..errors import BudgetTooSmall
    max_fe = getattr(recorder_or_max, "max_fe", recorder_or_max)
    if max_fe < needed:
        raise BudgetTooSmall(f"{what} needs at least {needed} FEs, budget is {max_fe}")


def feasibility_rank(log: Sequence[EvalLogEntry]) -> list[int]:
    """Indices sorted best-first by the feasibility-first order (stable)."""
    def key(i):
        o = log[i].outcome
        if o.feasible:
            obj = o.objective if isinstance(o.objective, float) else 0.0
            return (0, -obj)
        return (1, o.total_violation)
    return sorted(range(len(log)), key=key)


