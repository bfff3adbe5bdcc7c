"""Backends and the multi-corner sweep."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import EmptyInput
from ..metrics import (
    MetricVector,
    Status,
    active_area,
    fom_l,
    fom_s,
    geometry_from_params,
)
from ..space import PvtCorner
from ..testbench import Testbench
from .spice import AMP_MEASURES, ExternalSpice, FailureStore, SpiceJob, render_deck, run_spice
from .surrogate import SurrogateConfig, nominal_metrics, apply_corner


class SurrogateBackend:
    kind = "surrogate"

    def __init__(self, cfg: SurrogateConfig):
        self.cfg = cfg

    def check(self) -> None:
        pass

    def evaluate_many(self, tb: Testbench | None, point: Mapping[str, float],
                      corners: Sequence[PvtCorner]) -> list[MetricVector]:
        cload = tb.load_cap if tb is not None else None
        nom = nominal_metrics(point, self.cfg, cload)
        return [MetricVector(apply_corner(nom, c, self.cfg.corners)) for c in corners]

    def evaluate(self, tb, point, corner) -> MetricVector:
        return self.evaluate_many(tb, point, [corner])[0]


class SpiceBackend:
    kind = "spice"

    def __init__(self, settings: ExternalSpice, measures: Sequence[str] = AMP_MEASURES,
                 library: Mapping[str, str] | None = None, failure_dir: str | Path | None = None):
        self.settings = settings
        self.measures = tuple(measures)
        self.library = library
        root = Path(failure_dir) if failure_dir else None
        self.failures = FailureStore(root, settings.keep_failures) if root else None

    def check(self) -> None:
        self.settings.resolve_binary()

    def evaluate(self, tb: Testbench, point: Mapping[str, float], corner: PvtCorner
                 ) -> MetricVector:
        job = SpiceJob(render_deck(tb, point, corner, self.library), self.measures, corner.label)
        mv = run_spice(job, self.settings, self.failures)
        if not mv.ok:
            return mv
        return with_derived(mv, point, tb.load_cap)

    def evaluate_many(self, tb, point, corners) -> list[MetricVector]:
        return [self.evaluate(tb, point, c) for c in corners]


def with_derived(mv: MetricVector, point: Mapping[str, float], cload: float) -> MetricVector:
    """Add area and the load-normalised figures when their inputs were measured."""
    extra = {"area_um2": active_area(geometry_from_params(point))}
    cl_pf = cload * 1e12
    if "power_mw" in mv and mv["power_mw"] > 0:
        if "gbw_mhz" in mv:
            extra["foms"] = fom_s(mv["gbw_mhz"], cl_pf, mv["power_mw"])
        if "sr_v_per_us" in mv:
            extra["foml"] = fom_l(mv["sr_v_per_us"], cl_pf, mv["power_mw"])
    return mv.with_values(**{k: v for k, v in extra.items() if k not in mv})


@dataclass(frozen=True)
class SweepResult:
    records: tuple[tuple[PvtCorner, MetricVector], ...]
    wall_time: float
    fe_cost: int = 1

    @property
    def corner_sims(self) -> int:
        return len(self.records)

    @property
    def vectors(self) -> list[MetricVector]:
        return [mv for _, mv in self.records]

    @property
    def ok(self) -> bool:
        return all(mv.ok for _, mv in self.records)


def _safe(backend, tb, point, corner) -> MetricVector:
    try:
        return backend.evaluate(tb, point, corner)
    except Exception:  # a broken corner must not take the sweep down
        return MetricVector({}, Status.SIM_FAILED)


def sweep(backend, tb: Testbench | None, point: Mapping[str, float],
          corners: Sequence[PvtCorner], workers: int = 1) -> SweepResult:
    if not corners:
        raise EmptyInput("sweep needs at least one corner")
    t0 = time.perf_counter()
    if isinstance(backend, SurrogateBackend) and workers <= 1:
        # pure and cheap: share the nominal computation across corners
        try:
            vectors = backend.evaluate_many(tb, point, corners)
        except Exception:
            vectors = [MetricVector({}, Status.SIM_FAILED) for _ in corners]
    elif workers > 1 and len(corners) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(corners))) as pool:
            vectors = list(pool.map(lambda c: _safe(backend, tb, point, c), corners))
    else:
        vectors = [_safe(backend, tb, point, c) for c in corners]
    return SweepResult(tuple(zip(corners, vectors)), time.perf_counter() - t0)
