"""Hypervolume of a maximisation front above a reference point.

Exact for up to four objectives (sweep in 2-D, slicing above that) and a
seeded Monte-Carlo estimate with its standard error for five or more.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch

MC_SAMPLES = 100_000
EXACT_MAX_DIM = 4


@dataclass(frozen=True)
class HvResult:
    value: float
    stderr: float = 0.0
    exact: bool = True


def _prepare(front, ref) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(ref, dtype=float).ravel()
    F = np.asarray(front, dtype=float)
    if F.size == 0:
        return F.reshape(0, len(r)), r
    F = F.reshape(-1, F.shape[-1]) if F.ndim > 1 else F.reshape(1, -1)
    if F.shape[1] != len(r):
        raise DimensionMismatch(f"front has {F.shape[1]} objectives, reference has {len(r)}")
    # only points strictly above the reference in every objective add volume
    return F[(F > r).all(axis=1)], r


def _hv2(F: np.ndarray, r: np.ndarray) -> float:
    order = np.lexsort((-F[:, 1], -F[:, 0]))
    vol = 0.0
    top = r[1]
    for x, y in F[order]:
        if y > top:
            vol += (x - r[0]) * (y - top)
            top = y
    return vol


def _hv_slice(F: np.ndarray, r: np.ndarray) -> float:
    m = F.shape[1]
    if len(F) == 0:
        return 0.0
    if m == 1:
        return float(F[:, 0].max() - r[0])
    if m == 2:
        return _hv2(F, r)
    # slice along the last objective, highest level first
    order = np.argsort(-F[:, -1], kind="stable")
    F = F[order]
    levels = F[:, -1]
    vol = 0.0
    for i in range(len(F)):
        lower = levels[i + 1] if i + 1 < len(F) else r[-1]
        height = levels[i] - lower
        if height > 0:
            vol += height * _hv_slice(F[: i + 1, :-1], r[:-1])
    return vol


def hypervolume_exact(front, ref) -> float:
    F, r = _prepare(front, ref)
    if len(F) == 0:
        return 0.0
    return _hv_slice(F, r)


def hypervolume_mc(front, ref, samples: int = MC_SAMPLES, seed: int = 0,
                   upper: Sequence[float] | None = None) -> HvResult:
    """Fraction of uniform samples in [ref, upper] dominated by the front."""
    F, r = _prepare(front, ref)
    if len(F) == 0:
        return HvResult(0.0, 0.0, False)
    hi = F.max(axis=0) if upper is None else np.asarray(upper, dtype=float)
    box = float(np.prod(hi - r))
    rng = np.random.default_rng(seed)
    S = r + rng.random((samples, len(r))) * (hi - r)
    hit = np.zeros(samples, dtype=bool)
    for p in F:
        hit |= (S <= p).all(axis=1)
    frac = hit.mean()
    se = box * np.sqrt(frac * (1.0 - frac) / samples)
    return HvResult(box * float(frac), float(se), False)


def hypervolume(front, ref, samples: int = MC_SAMPLES, seed: int = 0) -> HvResult:
    """Exact for up to four objectives, Monte Carlo beyond."""
    r = np.asarray(ref, dtype=float).ravel()
    if len(r) <= EXACT_MAX_DIM:
        return HvResult(hypervolume_exact(front, r))
    return hypervolume_mc(front, r, samples, seed)


class IncrementalHv:
    """Monte-Carlo hypervolume of a growing point set in a fixed box.

    The sample set is drawn once, so adding points can only mark more
    samples as dominated: the estimate never decreases. Points beyond the
    upper corner are clipped to it.
    """

    def __init__(self, ref: Sequence[float], upper: Sequence[float],
                 samples: int = MC_SAMPLES, seed: int = 0):
        self.ref = np.asarray(ref, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.ref.shape != self.upper.shape:
            raise DimensionMismatch("reference and upper corner differ in length")
        if not (self.upper > self.ref).all():
            raise ValueError("upper corner must exceed the reference in every objective")
        rng = np.random.default_rng(seed)
        self.samples = self.ref + rng.random((samples, len(self.ref))) * (self.upper - self.ref)
        self.hit = np.zeros(samples, dtype=bool)
        self.box = float(np.prod(self.upper - self.ref))

    def add(self, point: Sequence[float]) -> None:
        p = np.minimum(np.asarray(point, dtype=float), self.upper)
        if not (p > self.ref).all():
            return
        todo = ~self.hit
        self.hit[todo] = (self.samples[todo] <= p).all(axis=1)

    @property
    def value(self) -> float:
        return self.box * float(self.hit.mean())

    @property
    def stderr(self) -> float:
        f = float(self.hit.mean())
        return self.box * float(np.sqrt(f * (1.0 - f) / len(self.hit)))
