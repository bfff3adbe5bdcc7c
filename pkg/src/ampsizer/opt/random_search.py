"""Uniform random sampling of the unit cube: the control baseline."""
from __future__ import annotations

import numpy as np

from .common import OptimizeResult, Recorder


def random_search(recorder: Recorder, seed: int) -> OptimizeResult:
    rng = np.random.default_rng(seed)
    d = len(recorder.space)
    while recorder.remaining > 0:
        recorder.evaluate(rng.random(d))
    return OptimizeResult(recorder.best(), recorder.log)
