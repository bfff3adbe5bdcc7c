"""Pareto dominance, nondominated sorting, crowding and an archive.

All objective vectors are maximised.
"""
from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from ..errors import DimensionMismatch


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    if len(a) != len(b):
        raise DimensionMismatch(f"objective vectors of length {len(a)} and {len(b)}")
    ge = all(x >= y for x, y in zip(a, b))
    return ge and any(x > y for x, y in zip(a, b))


def _dominance_matrix(F: np.ndarray) -> np.ndarray:
    """dom[i, j] is True when row i dominates row j."""
    ge = (F[:, None, :] >= F[None, :, :]).all(axis=2)
    gt = (F[:, None, :] > F[None, :, :]).any(axis=2)
    return ge & gt


def nondominated_sort(points: Sequence[Sequence[float]]) -> list[list[int]]:
    """Fronts of indices, best first; insertion order kept within a front."""
    F = np.asarray(points, dtype=float)
    if F.ndim != 2 or len(F) == 0:
        raise ValueError("nondominated_sort needs a nonempty 2-D array of points")
    dom = _dominance_matrix(F)
    count = dom.sum(axis=0)
    done = np.zeros(len(F), dtype=bool)
    fronts = []
    current = [i for i in range(len(F)) if count[i] == 0]
    while current:
        fronts.append(current)
        done[current] = True
        for i in current:
            count[dom[i]] -= 1
        current = [j for j in range(len(F)) if count[j] == 0 and not done[j]]
    return fronts


def crowding_distance(points: Sequence[Sequence[float]]) -> np.ndarray:
    F = np.asarray(points, dtype=float)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        lo, hi = F[order[0], k], F[order[-1], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = hi - lo
        if span <= 0 or not np.isfinite(span):
            continue
        dist[order[1:-1]] += (F[order[2:], k] - F[order[:-2], k]) / span
    return dist


class ParetoArchive:
    """Mutually nondominated (objective, payload) pairs.

    ``capacity=None`` keeps every nondominated point; otherwise the most
    crowded member is dropped whenever the archive overflows.
    """

    def __init__(self, capacity: int | None = None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.objectives: list[tuple[float, ...]] = []
        self.payloads: list[Any] = []

    def __len__(self) -> int:
        return len(self.objectives)

    def __iter__(self):
        return iter(zip(self.objectives, self.payloads))

    def add(self, objective: Sequence[float], payload: Any = None) -> bool:
        """Insert if not dominated by (or equal to) a member; return whether kept."""
        obj = tuple(float(v) for v in objective)
        for o in self.objectives:
            if o == obj or dominates(o, obj):
                return False
        keep = [i for i, o in enumerate(self.objectives) if not dominates(obj, o)]
        self.objectives = [self.objectives[i] for i in keep] + [obj]
        self.payloads = [self.payloads[i] for i in keep] + [payload]
        if self.capacity is not None and len(self.objectives) > self.capacity:
            cd = crowding_distance(self.objectives)
            drop = int(np.argmin(cd))
            del self.objectives[drop]
            del self.payloads[drop]
        return obj in self.objectives

    def front(self) -> np.ndarray:
        return np.asarray(self.objectives, dtype=float).reshape(len(self.objectives), -1)
