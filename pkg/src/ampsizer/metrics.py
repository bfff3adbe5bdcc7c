"""Figures of merit, active area, constraints and PVT worst-case aggregation.

Sign convention: PSRR and CMRR are carried as signed dB where more negative
means better rejection. Every ratio or objective that uses them takes the
magnitude explicitly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateDenominator,
    EmptyInput,
    MissingBaseline,
    MissingMetric,
    NonpositiveDenominator,
    NonpositivePower,
)
from .testbench import DeviceKind, parse_device_name
from .units import parse_si_number

FAILURE_VIOLATION = 1e9


class Direction(str, enum.Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"


@dataclass(frozen=True)
class MetricInfo:
    id: str
    direction: Direction
    unit: str
    key: bool = False


def _m(id_, d, unit, key=False):
    return MetricInfo(id_, Direction.MAXIMIZE if d == "+" else Direction.MINIMIZE, unit, key)


AMP_METRICS = (
    _m("gain_db", "+", "dB", True),
    _m("sr_v_per_us", "+", "V/us", True),
    _m("gbw_mhz", "+", "MHz", True),
    _m("vos_mv", "-", "mV"),
    _m("ts_us", "-", "us", True),
    _m("vn_mvrms", "-", "mVrms"),
    _m("cmrr_db", "-", "dB"),
    _m("tc_ppm", "-", "ppm/C"),
    _m("power_mw", "-", "mW", True),
    _m("psrr_db", "-", "dB"),
    _m("area_um2", "-", "um^2"),
    # phase margin is a constraint; a lower margin is the less favourable one
    _m("pm_deg", "+", "deg"),
    _m("foms", "+", "MHz*pF/mW"),
    _m("foml", "+", "V/us*pF/mW"),
    _m("fom_amp", "+", ""),
)

LDO_METRICS = (
    _m("loop_bw_mhz", "+", "MHz"),
    _m("current_eff_pct", "+", "%", True),
    _m("dropout_mv", "-", "mV", True),
    _m("iq_ma", "-", "mA", True),
    _m("line_reg_mv_per_v", "-", "mV/V", True),
    _m("recovery_us", "-", "us", True),
    _m("vn_mvrms", "-", "mVrms"),
    _m("out_cap_pf", "-", "pF"),
    _m("vdev_mv", "-", "mV", True),
    _m("load_reg_uv_per_ma", "-", "uV/mA", True),
    _m("power_mw", "-", "mW", True),
    _m("psr_db", "-", "dB"),
    _m("area_um2", "-", "um^2"),
    _m("pm_deg", "+", "deg"),
)

VREF_METRICS = (
    _m("vdiff_mv", "-", "mV"),
    _m("ls_pct_per_mv", "-", "%/mV"),
    _m("tc_ppm", "-", "ppm/C", True),
    _m("power_mw", "-", "mW", True),
    _m("psrr_db", "-", "dB"),
    _m("area_um2", "-", "um^2"),
)

SENSING_METRICS = (
    _m("lin_rel_dev_pct", "-", "%"),
    _m("lin_abs_dev_deg", "-", "C"),
    _m("noise_rt_hz", "-", "Hz^0.5"),
    _m("temp_rel_inacc_pct", "-", "%", True),
    _m("temp_abs_inacc_deg", "-", "C", True),
    _m("power_mw", "-", "mW", True),
    _m("psrr_db", "-", "dB"),
    _m("area_um2", "-", "um^2"),
)

PLL_METRICS = (
    _m("loop_bw_hz", "+", "Hz"),
    _m("jitter_ps", "-", "ps", True),
    _m("power_mw", "-", "mW", True),
    _m("psrr_db", "-", "dB"),
    _m("area_um2", "-", "um^2"),
    _m("pm_deg", "+", "deg"),
)


class MetricCatalog(Mapping[str, MetricInfo]):
    def __init__(self, metrics: Iterable[MetricInfo]):
        self._by_id = {m.id: m for m in metrics}

    def __getitem__(self, key: str) -> MetricInfo:
        return self._by_id[key]

    def __iter__(self):
        return iter(self._by_id)

    def __len__(self) -> int:
        return len(self._by_id)

    def direction(self, metric: str) -> Direction:
        return self._by_id[metric].direction

    def with_overrides(self, overrides: Mapping[str, Direction]) -> "MetricCatalog":
        merged = dict(self._by_id)
        for k, d in overrides.items():
            old = merged.get(k)
            merged[k] = MetricInfo(k, d, old.unit if old else "", old.key if old else False)
        return MetricCatalog(merged.values())


CATALOGS = {
    "amp": MetricCatalog(AMP_METRICS),
    "ldo": MetricCatalog(LDO_METRICS),
    "vref": MetricCatalog(VREF_METRICS),
    "sensing": MetricCatalog(SENSING_METRICS),
    "pll": MetricCatalog(PLL_METRICS),
}


def load_catalog_overrides(path: str | Path, base: MetricCatalog | None = None) -> MetricCatalog:
    """Read ``metric_id = max|min`` lines on top of ``base`` (default AMP)."""
    table = {}
    for key, value in _read_flat(path):
        v = value.lower()
        if v not in ("max", "min"):
            raise ValueError(f"{path}: direction for {key} must be max or min, got {value!r}")
        table[key] = Direction(v)
    return (base or CATALOGS["amp"]).with_overrides(table)


class Status(str, enum.Enum):
    OK = "Ok"
    SIM_FAILED = "SimFailed"
    TIMEOUT = "Timeout"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class MetricVector:
    values: Mapping[str, float] = field(default_factory=dict)
    status: Status = Status.OK

    def __post_init__(self):
        object.__setattr__(self, "values",
                           MappingProxyType({k: float(v) for k, v in dict(self.values).items()}))
        if not isinstance(self.status, Status):
            object.__setattr__(self, "status", Status(self.status))

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    def __getitem__(self, metric: str) -> float:
        try:
            return self.values[metric]
        except KeyError:
            raise MissingMetric(metric) from None

    def __contains__(self, metric: str) -> bool:
        return metric in self.values

    def get(self, metric: str, default=None):
        return self.values.get(metric, default)

    def with_values(self, **extra: float) -> "MetricVector":
        return MetricVector({**self.values, **extra}, self.status)


# -- baseline ----------------------------------------------------------------

BASELINE_KEYS = ("psrr_db", "cmrr_db", "gain_db", "foms", "foml",
                 "ts_us", "area_um2", "vn_mvrms", "tc_ppm", "vos_mv")


@dataclass(frozen=True)
class Baseline:
    values: Mapping[str, float]
    cload: float | None = None   # farads

    def __post_init__(self):
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))
        for k, v in self.values.items():
            if not math.isfinite(v) or v == 0:
                raise ValueError(f"baseline value for {k} must be finite and nonzero, got {v}")

    def ref(self, metric: str) -> float:
        try:
            return self.values[metric]
        except KeyError:
            raise MissingBaseline(metric) from None


def _read_flat(path: str | Path):
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (t.strip() for t in s.split("=", 1))
        yield k, v


def load_baseline(path: str | Path) -> Baseline:
    """Read ``metric_id = value`` lines. ``cload`` holds the required load (F)."""
    values = {}
    cload = None
    for k, v in _read_flat(path):
        num = parse_si_number(v)
        if k.lower() == "cload":
            cload = num
        else:
            values[k] = num
    return Baseline(values, cload)


# -- area --------------------------------------------------------------------

@dataclass(frozen=True)
class Device:
    w: float   # um
    l: float   # um
    m: float = 1
    p: int = 1


@dataclass(frozen=True)
class DeviceGeometry:
    devices: tuple[Device, ...] = ()
    capacitors_pf: tuple[float, ...] = ()
    resistors_kohm: tuple[float, ...] = ()

    def __post_init__(self):
        for d in self.devices:
            if d.w <= 0 or d.l <= 0 or d.m < 1 or d.p < 1:
                raise ValueError(f"invalid device geometry {d}")
        if any(c <= 0 for c in self.capacitors_pf) or any(r <= 0 for r in self.resistors_kohm):
            raise ValueError("capacitor and resistor values must be positive")


CAP_AREA_PER_PF = 1089.0
RES_AREA_PER_KOHM = 5.0


def active_area(geom: DeviceGeometry, sqrt: bool = False) -> float:
    """Active area in um^2: sum(W*L*M*P) + 1089*sum(C_pF) + 5*sum(R_kOhm).

    ``sqrt=True`` returns the square root of that sum instead.
    """
    total = math.fsum(d.w * d.l * d.m * d.p for d in geom.devices)
    total += CAP_AREA_PER_PF * math.fsum(geom.capacitors_pf)
    total += RES_AREA_PER_KOHM * math.fsum(geom.resistors_kohm)
    return math.sqrt(total) if sqrt else total


def geometry_from_params(params: Mapping[str, float]) -> DeviceGeometry:
    """Group deck parameters into devices. Units follow the deck: W/L in um,
    capacitors in F, resistors in ohm. Missing M defaults to 1."""
    devices: dict[tuple, dict[str, float]] = {}
    parallel: dict[tuple, int] = {}
    caps, ress = [], []
    for name, value in params.items():
        try:
            dev = parse_device_name(name)
        except ValueError:
            continue
        if dev.kind is DeviceKind.MOSFET:
            devices.setdefault(dev.device_key, {})[dev.attribute] = value
            parallel[dev.device_key] = dev.parallel_count
        elif dev.kind is DeviceKind.CAPACITOR:
            caps.append(value * 1e12)
        elif dev.kind is DeviceKind.RESISTOR:
            ress.append(value / 1e3)
    out = []
    for key, attrs in devices.items():
        if "W" not in attrs or "L" not in attrs:
            raise ValueError(f"device {key} lacks W or L")
        out.append(Device(attrs["W"], attrs["L"], attrs.get("M", 1.0), parallel[key]))
    return DeviceGeometry(tuple(out), tuple(caps), tuple(ress))


# -- figures of merit ----------------------------------------------------------

def fom_s(gbw_mhz: float, cload_pf: float, power_mw: float) -> float:
    if power_mw <= 0:
        raise NonpositivePower(f"power must be positive, got {power_mw}")
    if cload_pf <= 0:
        raise NonpositiveDenominator(f"load capacitance must be positive, got {cload_pf}")
    return gbw_mhz * cload_pf / power_mw


def fom_l(sr_v_per_us: float, cload_pf: float, power_mw: float) -> float:
    if power_mw <= 0:
        raise NonpositivePower(f"power must be positive, got {power_mw}")
    if cload_pf <= 0:
        raise NonpositiveDenominator(f"load capacitance must be positive, got {cload_pf}")
    return sr_v_per_us * cload_pf / power_mw


def fom_vref(tmax: float, tmin: float, tc: float, ls: float, power: float,
             area: float, dv: float) -> float:
    """Voltage-reference FOM: (Tmax - Tmin)^2 / (TC * LS * Power * Area * dV)."""
    if not tmax > tmin:
        raise DegenerateDenominator(f"tmax ({tmax}) must exceed tmin ({tmin})")
    denom = tc * ls * power * area * dv
    if not all(x > 0 for x in (tc, ls, power, area, dv)):
        raise DegenerateDenominator(f"denominator terms must be positive, product {denom}")
    return (tmax - tmin) ** 2 / denom


def _penalty(value: float, ref: float) -> float:
    # ratio only when worse than the reference, otherwise neutral
    return value / ref if value > ref else 1.0


def fom_amp(m: MetricVector, base: Baseline) -> float:
    def pair(k):
        return m[k], base.ref(k)

    gain = 1.0
    for k in ("psrr_db", "cmrr_db"):
        v, r = pair(k)
        gain *= abs(v) / abs(r)
    for k in ("gain_db", "foms", "foml"):
        v, r = pair(k)
        gain *= v / r
    cost = 1.0
    for k in ("ts_us", "area_um2"):
        v, r = pair(k)
        cost *= v / r
    penalty = 1.0
    for k in ("vn_mvrms", "tc_ppm", "vos_mv"):
        penalty *= _penalty(*pair(k))
    return gain / cost / penalty


# -- PVT aggregation -----------------------------------------------------------

def worst_case(per_corner: Sequence[MetricVector], catalog: Mapping[str, MetricInfo] | None = None
               ) -> MetricVector:
    """Least favourable value of each metric across corners."""
    if not per_corner:
        raise EmptyInput("worst_case needs at least one corner")
    cat = catalog if catalog is not None else CATALOGS["amp"]
    keys: list[str] = []
    for mv in per_corner:
        for k in mv.values:
            if k not in keys:
                keys.append(k)
    out = {}
    for k in keys:
        vals = [mv.values[k] for mv in per_corner if k in mv.values]
        if k not in cat:
            raise MissingMetric(k)
        pick = min if cat[k].direction is Direction.MAXIMIZE else max
        out[k] = pick(vals)
    return MetricVector(out)


# -- constraints -----------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    """``op`` is one of ``le``, ``ge``, ``in`` or ``eq``."""
    metric: str
    op: str
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.op == "le" and self.hi is None or self.op == "ge" and self.lo is None:
            raise ValueError(f"{self.metric}: missing bound")
        if self.op == "in" and not (self.lo is not None and self.hi is not None
                                    and self.lo < self.hi):
            raise ValueError(f"{self.metric}: interval needs lo < hi")
        if self.op == "eq" and self.lo is None:
            raise ValueError(f"{self.metric}: missing target")
        if self.op not in ("le", "ge", "in", "eq"):
            raise ValueError(f"unknown comparator {self.op!r}")
        for b in (self.lo, self.hi):
            if b is not None and not math.isfinite(b):
                raise ValueError(f"{self.metric}: bounds must be finite")

    def violation(self, v: float) -> float:
        if self.op == "le":
            return max(0.0, v - self.hi)
        if self.op == "ge":
            return max(0.0, self.lo - v)
        if self.op == "in":
            return max(0.0, self.lo - v, v - self.hi)
        return abs(v - self.lo)

    def margin(self, v: float) -> float:
        """Signed distance to the boundary; negative means satisfied."""
        if self.op == "le":
            return v - self.hi
        if self.op == "ge":
            return self.lo - v
        if self.op == "in":
            return max(self.lo - v, v - self.hi)
        return abs(v - self.lo)

    def describe(self) -> str:
        if self.op == "le":
            return f"{self.metric} <= {self.hi:g}"
        if self.op == "ge":
            return f"{self.metric} >= {self.lo:g}"
        if self.op == "in":
            return f"{self.lo:g} <= {self.metric} <= {self.hi:g}"
        return f"{self.metric} == {self.lo:g}"


@dataclass(frozen=True)
class ConstraintSpec:
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    @property
    def metrics(self) -> tuple[str, ...]:
        return tuple(c.metric for c in self.constraints)


def constraint_violation(m: MetricVector, spec: ConstraintSpec) -> tuple[float, ...]:
    return tuple(c.violation(m[c.metric]) for c in spec)


def constraint_margins(m: MetricVector, spec: ConstraintSpec) -> tuple[float, ...]:
    return tuple(c.margin(m[c.metric]) for c in spec)


def parse_constraint(metric: str, text: str) -> Constraint:
    """``"<= 1"``, ``">= 100"``, ``"in 45 90"`` / ``"45..90"`` or ``"= 100p"``."""
    s = text.strip()
    if ".." in s:
        a, b = s.split("..", 1)
        return Constraint(metric, "in", parse_si_number(a), parse_si_number(b))
    for prefix, op in (("<=", "le"), (">=", "ge"), ("<", "le"), (">", "ge"), ("==", "eq"),
                       ("=", "eq")):
        if s.startswith(prefix):
            v = parse_si_number(s[len(prefix):])
            return Constraint(metric, op, lo=None if op == "le" else v,
                              hi=v if op == "le" else None)
    if s.lower().startswith("in"):
        parts = s[2:].replace(",", " ").split()
        if len(parts) == 2:
            return Constraint(metric, "in", parse_si_number(parts[0]), parse_si_number(parts[1]))
    raise ValueError(f"cannot parse constraint for {metric}: {text!r}")


# Strict "<"/">" bounds in the problem statements are treated as non-strict.
# The area bound is 500 mm^2 expressed in um^2.
def soo_constraints() -> ConstraintSpec:
    return ConstraintSpec((
        Constraint("pm_deg", "in", 45.0, 90.0),
        Constraint("gain_db", "ge", lo=100.0),
        Constraint("ts_us", "le", hi=1.0),
        Constraint("psrr_db", "le", hi=-60.0),
        Constraint("cmrr_db", "le", hi=-60.0),
        Constraint("vn_mvrms", "le", hi=1.0),
        Constraint("vos_mv", "le", hi=0.5),
        Constraint("tc_ppm", "le", hi=100.0),
        Constraint("area_um2", "le", hi=500.0e6),
    ))


def moo_constraints() -> ConstraintSpec:
    return ConstraintSpec((
        Constraint("pm_deg", "in", 45.0, 90.0),
        Constraint("vn_mvrms", "le", hi=1.0),
        Constraint("vos_mv", "le", hi=0.5),
        Constraint("tc_ppm", "le", hi=100.0),
    ))


# -- objectives ------------------------------------------------------------------

def soo_objective(m: MetricVector) -> float:
    return m["foml"] + m["foms"]


MOO_OBJECTIVE_NAMES = ("foml", "foms", "gain_db", "inv_area", "inv_ts", "abs_cmrr", "abs_psrr")


def moo_objectives(m: MetricVector) -> tuple[float, ...]:
    """Seven objectives, all to be maximised."""
    area, ts = m["area_um2"], m["ts_us"]
    if area <= 0 or ts <= 0:
        raise NonpositiveDenominator(f"area ({area}) and settling time ({ts}) must be positive")
    return (m["foml"], m["foms"], m["gain_db"], 1.0 / area, 1.0 / ts,
            abs(m["cmrr_db"]), abs(m["psrr_db"]))


def moo_reference_from_baseline(base: Baseline) -> tuple[float, ...]:
    """Nadir for hypervolume: the baseline's own objective vector."""
    return (base.ref("foml"), base.ref("foms"), base.ref("gain_db"),
            1.0 / base.ref("area_um2"), 1.0 / base.ref("ts_us"),
            abs(base.ref("cmrr_db")), abs(base.ref("psrr_db")))
