"""Cross-seed summaries and convergence plots built from ledgers."""
from __future__ import annotations

import csv
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import OutputDirUnwritable
from ..opt.common import best_so_far
from ..opt.nsga2 import hv_curve
from .ledger import LedgerRecord, LedgerScan, read_records

VALUE_LABELS = {
    "soo": ("best_objective", "best feasible FOML + FOMS (V/us*pF/mW + MHz*pF/mW)"),
    "fom_amp": ("best_objective", "best feasible FoM (dimensionless)"),
    "moo": ("final_hv", "archive hypervolume (product of objective units)"),
}
SUMMARY_COLUMNS = ("seed", "value", "feasible", "fe_count", "sim_time_s", "model_time_s",
                   "total_time_s", "status")


@dataclass
class SeedSummary:
    seed: int
    value: float              # best feasible objective, or final hypervolume
    feasible: bool
    fe_count: int
    sim_time: float
    model_time: float
    total_time: float
    status: str               # complete | failed | partial
    curve: list[tuple[int, float]] = field(default_factory=list)
    reason: str = ""

    @property
    def completed(self) -> bool:
        return self.status == "complete"


@dataclass
class Report:
    objective: str
    optimizer: str
    max_fe: int
    seeds: list[SeedSummary]

    @property
    def completed(self) -> list[SeedSummary]:
        return [s for s in self.seeds if s.completed]

    def column(self, name: str) -> list[float]:
        """Values of a numeric column over completed seeds (finite values only)."""
        vals = [float(getattr(s, name)) for s in self.completed]
        return [v for v in vals if math.isfinite(v)]

    def aggregate(self) -> tuple[dict[str, float], dict[str, float]]:
        mean, std = {}, {}
        for name in ("value", "feasible", "fe_count", "sim_time", "model_time", "total_time"):
            v = self.column(name)
            mean[name] = math.fsum(v) / len(v) if v else math.nan
            std[name] = float(np.std(v, ddof=1)) if len(v) > 1 else math.nan
        return mean, std


def _time_split(records: Sequence[LedgerRecord]) -> tuple[float, float, float]:
    """(sim, model, total) with sim + model <= total holding in floating point."""
    total = math.fsum(r.t_wall for r in records)
    sim = min(math.fsum(r.t_sim for r in records), total)
    model = min(math.fsum(r.t_model for r in records), total - sim)
    while sim + model > total and model > 0:
        model = math.nextafter(model, 0.0)
    return sim, max(model, 0.0), total


def seed_summary(scan: LedgerScan, records: Sequence[LedgerRecord]) -> SeedSummary:
    h = scan.header
    if h.objective == "moo":
        curve = hv_curve(records, h.population, h.reference, h.upper or None,
                         h.hv_samples, h.hv_seed) if records else []
        value = curve[-1][1] if curve else 0.0
    else:
        curve = best_so_far(records)
        value = curve[-1][1] if curve else math.nan
    sim, model, total = _time_split(records)
    return SeedSummary(h.seed, float(value), any(r.feasible for r in records), len(records),
                       sim, model, total, scan.status, curve, scan.reason)


def report_from_ledgers(paths: Sequence[str | Path]) -> Report:
    if not paths:
        raise ValueError("no ledgers given")
    seeds = []
    head = None
    for p in paths:
        scan, records = read_records(p)
        h = scan.header
        if head is None:
            head = h
        elif (h.objective, h.optimizer, h.max_fe, h.config_hash) != (
                head.objective, head.optimizer, head.max_fe, head.config_hash):
            raise ValueError(f"{p}: ledger belongs to a different run")
        seeds.append(seed_summary(scan, records))
    seeds.sort(key=lambda s: s.seed)
    return Report(head.objective, head.optimizer, head.max_fe, seeds)


# -- files -----------------------------------------------------------------------

def _num(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else ("nan" if math.isnan(v) else repr(v))


def summary_csv(report: Report) -> str:
    name = VALUE_LABELS.get(report.objective, VALUE_LABELS["soo"])[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name if c == "value" else c for c in SUMMARY_COLUMNS])
    for s in report.seeds:
        w.writerow([s.seed, _num(s.value), int(s.feasible), s.fe_count, _num(s.sim_time),
                    _num(s.model_time), _num(s.total_time), s.status])
    mean, std = report.aggregate()
    for label, row in (("mean", mean), ("stddev", std)):
        w.writerow([label, _num(row["value"]), _num(row["feasible"]), _num(row["fe_count"]),
                    _num(row["sim_time"]), _num(row["model_time"]), _num(row["total_time"]),
                    f"n={len(report.completed)}"])
    return buf.getvalue()


def curve_csv(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "fe", "value"])
    for s in report.seeds:
        for fe, v in s.curve:
            w.writerow([s.seed, fe, _num(v)])
    return buf.getvalue()


def mean_curve(report: Report) -> list[tuple[int, float]]:
    """Mean over seeds of each seed's step curve, at every FE where any seed has a value."""
    curves = [s.curve for s in report.seeds if s.curve]
    fes = sorted({fe for c in curves for fe, _ in c})
    out = []
    for fe in fes:
        vals = []
        for c in curves:
            xs = [x for x, _ in c]
            i = int(np.searchsorted(xs, fe, side="right")) - 1
            if i >= 0:
                vals.append(c[i][1])
        out.append((fe, math.fsum(vals) / len(vals)))
    return out


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def curve_svg(report: Report, width: int = 720, height: int = 440) -> str:
    ml, mr, mt, mb = 90, 30, 40, 60
    pw, ph = width - ml - mr, height - mt - mb
    ylabel = VALUE_LABELS.get(report.objective, VALUE_LABELS["soo"])[1]
    mean = mean_curve(report)
    pts = [v for s in report.seeds for _, v in s.curve] + [v for _, v in mean]
    pts = [v for v in pts if math.isfinite(v)]
    ylo, yhi = (min(pts), max(pts)) if pts else (0.0, 1.0)
    if yhi <= ylo:
        ylo, yhi = ylo - 0.5 * (abs(ylo) or 1.0), yhi + 0.5 * (abs(yhi) or 1.0)
    xhi = float(max(report.max_fe, 1))

    def sx(fe):
        return ml + pw * fe / xhi

    def sy(v):
        return mt + ph * (1.0 - (v - ylo) / (yhi - ylo))

    svg = ET.Element("svg", {"xmlns": "http://www.w3.org/2000/svg", "version": "1.1",
                             "width": str(width), "height": str(height),
                             "viewBox": f"0 0 {width} {height}"})
    ET.SubElement(svg, "title").text = f"{report.optimizer} convergence ({len(report.seeds)} seeds)"
    ET.SubElement(svg, "rect", {"x": "0", "y": "0", "width": str(width), "height": str(height),
                                "fill": "white"})
    axes = ET.SubElement(svg, "g", {"class": "axes", "stroke": "black", "fill": "none"})
    ET.SubElement(axes, "line", {"x1": str(ml), "y1": str(mt + ph), "x2": str(ml + pw),
                                 "y2": str(mt + ph)})
    ET.SubElement(axes, "line", {"x1": str(ml), "y1": str(mt), "x2": str(ml), "y2": str(mt + ph)})
    labels = ET.SubElement(svg, "g", {"class": "labels", "font-family": "sans-serif",
                                      "font-size": "11", "fill": "black"})
    for t in _ticks(0.0, xhi):
        x = f"{sx(t):.2f}"
        ET.SubElement(axes, "line", {"x1": x, "y1": str(mt + ph), "x2": x, "y2": str(mt + ph + 5)})
        e = ET.SubElement(labels, "text", {"x": x, "y": str(mt + ph + 18),
                                           "text-anchor": "middle"})
        e.text = f"{t:g}"
    for t in _ticks(ylo, yhi):
        y = f"{sy(t):.2f}"
        ET.SubElement(axes, "line", {"x1": str(ml - 5), "y1": y, "x2": str(ml), "y2": y})
        e = ET.SubElement(labels, "text", {"x": str(ml - 8), "y": y, "text-anchor": "end"})
        e.text = f"{t:.4g}"
    xl = ET.SubElement(labels, "text", {"x": f"{ml + pw / 2:.2f}", "y": str(height - 15),
                                        "text-anchor": "middle"})
    xl.text = "function evaluations (FE)"
    yl = ET.SubElement(labels, "text", {"x": "15", "y": f"{mt + ph / 2:.2f}",
                                        "text-anchor": "middle",
                                        "transform": f"rotate(-90 15 {mt + ph / 2:.2f})"})
    yl.text = ylabel

    palette = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
    lines = ET.SubElement(svg, "g", {"class": "curves", "fill": "none"})

    def poly(curve, attrs):
        path = " ".join(f"{sx(fe):.2f},{sy(v):.2f}" for fe, v in curve if math.isfinite(v))
        ET.SubElement(lines, "polyline", {"points": path, **attrs})

    for k, s in enumerate(report.seeds):
        poly(s.curve, {"class": "seed", "data-seed": str(s.seed),
                       "stroke": palette[k % len(palette)], "stroke-width": "1",
                       "stroke-opacity": "0.7"})
    poly(mean, {"class": "mean", "stroke": "black", "stroke-width": "2.5"})
    ET.indent(svg)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(svg, encoding="unicode") + "\n"


def emit_report(report: Report, outdir: str | Path) -> list[Path]:
    """Write summary.csv, curve.csv and curve.svg into ``outdir``."""
    outdir = Path(outdir)
    files = {"summary.csv": summary_csv(report), "curve.csv": curve_csv(report),
             "curve.svg": curve_svg(report)}
    written = []
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            p = outdir / name
            p.write_text(text, encoding="utf-8", newline="\n")
            written.append(p)
    except OSError as exc:
        raise OutputDirUnwritable(f"{outdir}: cannot write report ({exc.strerror})") from None
    return written
