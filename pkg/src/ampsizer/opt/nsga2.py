"""NSGA-II with constraint domination and an unbounded Pareto archive."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .common import EvalLogEntry, OptimizeResult, Recorder, check_budget
from .hypervolume import MC_SAMPLES, IncrementalHv
from .pareto import ParetoArchive, crowding_distance, nondominated_sort


@dataclass(frozen=True)
class Nsga2Params:
    population: int = 40
    generations: int | None = None
    eta_c: float = 15.0
    eta_m: float = 20.0
    p_crossover: float = 0.9
    p_mutation: float | None = None    # None: 1/d
    hv_samples: int = MC_SAMPLES
    hv_seed: int = 0

    def __post_init__(self):
        if self.population < 8 or self.population % 2:
            raise ValueError("NSGA-II population must be even and at least 8")


def _rank(entries: Sequence[EvalLogEntry]) -> tuple[np.ndarray, np.ndarray]:
    """Constraint-domination rank and crowding for a set of entries.

    Feasible designs are sorted into Pareto fronts first; infeasible ones
    follow, ordered by total violation.
    """
    n = len(entries)
    rank = np.zeros(n, dtype=int)
    crowd = np.zeros(n)
    feas = [i for i, e in enumerate(entries) if e.feasible]
    infeas = [i for i, e in enumerate(entries) if not e.feasible]
    nf = 0
    if feas:
        F = np.array([entries[i].objective for i in feas])
        fronts = nondominated_sort(F)
        for r, front in enumerate(fronts):
            idx = [feas[j] for j in front]
            rank[idx] = r
            crowd[idx] = crowding_distance(F[front])
        nf = len(fronts)
    viol = sorted({entries[i].outcome.total_violation for i in infeas})
    level = {v: k for k, v in enumerate(viol)}
    for i in infeas:
        rank[i] = nf + level[entries[i].outcome.total_violation]
    return rank, crowd


def _select(entries: Sequence[EvalLogEntry], size: int) -> list[int]:
    rank, crowd = _rank(entries)
    order = sorted(range(len(entries)), key=lambda i: (rank[i], -crowd[i], i))
    return order[:size]


def _tournament(rng, rank, crowd):
    a, b = rng.integers(len(rank), size=2)
    if rank[a] != rank[b]:
        return a if rank[a] < rank[b] else b
    if crowd[a] != crowd[b]:
        return a if crowd[a] > crowd[b] else b
    return a if rng.random() < 0.5 else b


def _sbx(rng, p1, p2, eta, pc):
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() > pc:
        return c1, c2
    u = rng.random(len(p1))
    beta = np.where(u <= 0.5, (2 * u) ** (1 / (eta + 1)), (1 / (2 * (1 - u))) ** (1 / (eta + 1)))
    swap = rng.random(len(p1)) < 0.5
    c1 = 0.5 * ((1 + beta) * p1 + (1 - beta) * p2)
    c2 = 0.5 * ((1 - beta) * p1 + (1 + beta) * p2)
    c1[swap], c2[swap] = c2[swap].copy(), c1[swap].copy()
    return np.clip(c1, 0, 1), np.clip(c2, 0, 1)


def _poly_mutation(rng, x, eta, pm):
    y = x.copy()
    for j in np.flatnonzero(rng.random(len(x)) < pm):
        u = rng.random()
        if u < 0.5:
            delta = (2 * u + (1 - 2 * u) * (1 - y[j]) ** (eta + 1)) ** (1 / (eta + 1)) - 1
        else:
            delta = 1 - (2 * (1 - u) + 2 * (u - 0.5) * y[j] ** (eta + 1)) ** (1 / (eta + 1))
        y[j] = min(1.0, max(0.0, y[j] + delta))
    return y


class HvTracker:
    """Archive hypervolume after each generation, reproducible from a log.

    The sampling box is [ref, upper]. When ``upper`` is not configured it is
    fixed at the first generation holding a feasible design, as
    ``ideal + 2 (ideal - ref)`` (``ref + max(|ref|, 1)`` where the ideal does
    not clear the reference).
    """

    def __init__(self, ref: Sequence[float], upper: Sequence[float] | None = None,
                 samples: int = MC_SAMPLES, seed: int = 0):
        self.ref = np.asarray(ref, dtype=float)
        self.upper = None if upper is None else np.asarray(upper, dtype=float)
        self.samples = samples
        self.seed = seed
        self.hv: IncrementalHv | None = None
        self.archive = ParetoArchive()
        self.pending: list[np.ndarray] = []

    def _derive_upper(self) -> np.ndarray:
        ideal = np.max(np.array(self.pending), axis=0)
        span = np.where(ideal > self.ref, 2.0 * (ideal - self.ref),
                        np.maximum(np.abs(self.ref), 1.0))
        base = np.where(ideal > self.ref, ideal, self.ref)
        return base + span

    def generation(self, entries: Sequence[EvalLogEntry]) -> float:
        for e in entries:
            if e.feasible:
                obj = np.asarray(e.objective, dtype=float)
                if self.archive.add(obj, e.fe):
                    self.pending.append(obj)
        if self.hv is None and self.pending:
            upper = self.upper if self.upper is not None else self._derive_upper()
            self.hv = IncrementalHv(self.ref, upper, self.samples, self.seed)
        if self.hv is not None:
            for obj in self.pending:
                self.hv.add(obj)
            self.pending = []
        return 0.0 if self.hv is None else self.hv.value


def hv_curve(log: Sequence[EvalLogEntry], population: int, ref, upper=None,
             samples: int = MC_SAMPLES, seed: int = 0) -> list[tuple[int, float]]:
    """(fe, hv) at the end of every generation of ``population`` FEs."""
    tracker = HvTracker(ref, upper, samples, seed)
    out = []
    for start in range(0, len(log), population):
        chunk = log[start:start + population]
        out.append((chunk[-1].fe, tracker.generation(chunk)))
    return out


def nsga2_optimize(recorder: Recorder, seed: int, ref: Sequence[float],
                   params: Nsga2Params = Nsga2Params(), upper: Sequence[float] | None = None
                   ) -> OptimizeResult:
    n = params.population
    check_budget(recorder, n, "NSGA-II")
    gens = params.generations or recorder.max_fe // n
    limit = min(recorder.max_fe, n * gens)
    rng = np.random.default_rng(seed)
    d = len(recorder.space)
    pm = params.p_mutation if params.p_mutation is not None else 1.0 / d
    tracker = HvTracker(ref, upper, params.hv_samples, params.hv_seed)
    hv_log = []

    pop = [recorder.evaluate(x) for x in rng.random((n, d))]
    hv_log.append((recorder.used, tracker.generation(pop)))
    while recorder.used + n <= limit:
        rank, crowd = _rank(pop)
        X = np.array([e.u for e in pop])
        children = []
        while len(children) < n:
            a = _tournament(rng, rank, crowd)
            b = _tournament(rng, rank, crowd)
            c1, c2 = _sbx(rng, X[a], X[b], params.eta_c, params.p_crossover)
            children.append(_poly_mutation(rng, c1, params.eta_m, pm))
            children.append(_poly_mutation(rng, c2, params.eta_m, pm))
        offspring = [recorder.evaluate(c) for c in children[:n]]
        hv_log.append((recorder.used, tracker.generation(offspring)))
        merged = pop + offspring
        pop = [merged[i] for i in _select(merged, n)]
    return OptimizeResult(None, recorder.log, tracker.archive, hv_log)
