"""Differential evolution (rand/1/bin) with feasibility-first selection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .common import OptimizeResult, Recorder, better, check_budget


@dataclass(frozen=True)
class DeParams:
    population: int = 20
    generations: int | None = None     # None: as many as the budget allows
    f: float = 0.5
    cr: float = 0.9

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("differential evolution needs a population of at least 4")
        if not 0.0 <= self.cr <= 1.0 or self.f <= 0:
            raise ValueError("need F > 0 and 0 <= CR <= 1")


def de_optimize(recorder: Recorder, seed: int, params: DeParams = DeParams()) -> OptimizeResult:
    """The initial population is generation 0, so the charge is population x generations."""
    np_ = params.population
    check_budget(recorder, np_, "differential evolution")
    gens = params.generations or math.ceil(recorder.max_fe / np_)
    limit = min(recorder.max_fe, np_ * gens)
    rng = np.random.default_rng(seed)
    d = len(recorder.space)

    pop = rng.random((np_, d))
    entries = [recorder.evaluate(x) for x in pop]
    pop = np.array([e.u for e in entries])

    while recorder.used < limit:
        for i in range(np_):
            if recorder.used >= limit:
                break
            r1, r2, r3 = rng.choice([j for j in range(np_) if j != i], size=3, replace=False)
            base = pop[r1]
            mutant = base + params.f * (pop[r2] - pop[r3])
            # bounce back between the base vector and the violated bound
            lo = mutant < 0.0
            hi = mutant > 1.0
            mutant[lo] = base[lo] * rng.random(lo.sum())
            mutant[hi] = base[hi] + (1.0 - base[hi]) * rng.random(hi.sum())
            cross = rng.random(d) < params.cr
            cross[rng.integers(d)] = True
            trial = np.where(cross, mutant, pop[i])
            e = recorder.evaluate(trial)
            if not better(entries[i].outcome, e.outcome):
                pop[i] = e.u
                entries[i] = e
    return OptimizeResult(recorder.best(), recorder.log)
