"""Sizing-parameter spaces, unit-cube encoding and PVT corners.

Dimension values use the units the deck uses: W and L are bare micrometre
numbers (sky130 convention), capacitance is farads, resistance ohms, bias
current amperes and multipliers are plain counts.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    OverrideOutOfNodeBounds,
    PointOutOfBounds,
    UnclassifiableParam,
    UnknownProcess,
    UnrecognizedName,
)
from .testbench import DeviceKind, Testbench, parse_device_name


class Process(str, enum.Enum):
    TT = "TT"
    FF = "FF"
    SS = "SS"
    FS = "FS"
    SF = "SF"


@dataclass(frozen=True, order=True)
class PvtCorner:
    process: Process
    voltage: float
    temperature: float

    def __post_init__(self):
        if not isinstance(self.process, Process):
            try:
                object.__setattr__(self, "process", Process(str(self.process).upper()))
            except ValueError:
                raise UnknownProcess(f"unknown process corner {self.process!r}") from None
        object.__setattr__(self, "voltage", float(self.voltage))
        object.__setattr__(self, "temperature", float(self.temperature))

    @property
    def label(self) -> str:
        return f"{self.process.value}/{self.voltage!r}/{self.temperature!r}"

    @classmethod
    def from_label(cls, label: str) -> "PvtCorner":
        parts = [p.strip() for p in label.replace(":", "/").split("/")]
        if len(parts) != 3:
            raise ValueError(f"corner label must be P/V/T, got {label!r}")
        return cls(parts[0], float(parts[1]), float(parts[2]))

    def __str__(self) -> str:
        return f"({self.process.value}, {self.voltage:g}V, {self.temperature:g}C)"


def _dec(x: float, exp: int) -> float:
    """``x * 10**exp`` without binary rounding of the scale factor."""
    return float(Decimal(repr(float(x))).scaleb(exp))


@dataclass(frozen=True)
class TechNode:
    name: str
    length_bounds: tuple[float, float]      # nm
    width_bounds: tuple[float, float]       # nm
    multiplier_bounds: tuple[int, int]
    ibias_bounds: tuple[float, float]       # uA
    supply: tuple[float, float, float]      # V: min, nominal, max
    temp_range: tuple[float, float]         # degC
    cap_bounds: tuple[float, float] = (1.0, 100.0)      # pF
    res_bounds: tuple[float, float] = (0.1, 1000.0)     # kOhm
    processes: tuple[Process, ...] = tuple(Process)

    def __post_init__(self):
        for lo, hi in (self.length_bounds, self.width_bounds, self.multiplier_bounds,
                       self.ibias_bounds, self.temp_range, self.cap_bounds, self.res_bounds):
            if not lo < hi:
                raise ValueError(f"{self.name}: empty bound ({lo}, {hi})")

    @property
    def nominal_voltage(self) -> float:
        return self.supply[1]

    def kind_bounds(self, kind: "Kind") -> tuple[float, float]:
        """Bounds for ``kind`` in deck units."""
        if kind is Kind.WIDTH:
            return _dec(self.width_bounds[0], -3), _dec(self.width_bounds[1], -3)
        if kind is Kind.LENGTH:
            return _dec(self.length_bounds[0], -3), _dec(self.length_bounds[1], -3)
        if kind is Kind.MULTIPLIER:
            return float(self.multiplier_bounds[0]), float(self.multiplier_bounds[1])
        if kind is Kind.CAPACITANCE:
            return _dec(self.cap_bounds[0], -12), _dec(self.cap_bounds[1], -12)
        if kind is Kind.RESISTANCE:
            return _dec(self.res_bounds[0], 3), _dec(self.res_bounds[1], 3)
        return _dec(self.ibias_bounds[0], -6), _dec(self.ibias_bounds[1], -6)

    def corner_violations(self, corner: PvtCorner) -> list[str]:
        out = []
        if not self.supply[0] <= corner.voltage <= self.supply[2]:
            out.append(f"voltage {corner.voltage} outside {self.supply[0]}..{self.supply[2]} V")
        if not self.temp_range[0] <= corner.temperature <= self.temp_range[1]:
            out.append(f"temperature {corner.temperature} outside "
                       f"{self.temp_range[0]}..{self.temp_range[1]} C")
        if corner.process not in self.processes:
            out.append(f"process {corner.process.value} not offered")
        return out


NODES: dict[str, TechNode] = {
    "n180": TechNode("n180", (180, 20000), (220, 50000), (1, 1000), (0.5, 100),
                     (1.62, 1.8, 1.98), (-25, 125)),
    "n130": TechNode("n130", (130, 5000), (200, 10000), (1, 1000), (0.5, 100),
                     (1.08, 1.2, 1.32), (-25, 125)),
    "n22": TechNode("n22", (22, 500), (40, 1000), (1, 1000), (0.5, 100),
                    (0.72, 0.8, 0.88), (-25, 125)),
}


def get_node(name: str) -> TechNode:
    try:
        return NODES[name]
    except KeyError:
        raise ValueError(f"unknown technology node {name!r}; choose from {sorted(NODES)}") from None


class Kind(str, enum.Enum):
    WIDTH = "Width"
    LENGTH = "Length"
    MULTIPLIER = "Multiplier"
    CAPACITANCE = "Capacitance"
    RESISTANCE = "Resistance"
    BIAS_CURRENT = "BiasCurrent"


_DEFAULT_SCALE = {
    Kind.WIDTH: "linear",
    Kind.LENGTH: "linear",
    Kind.MULTIPLIER: "linear",
    Kind.CAPACITANCE: "log",
    Kind.RESISTANCE: "log",
    Kind.BIAS_CURRENT: "log",
}

ANY = "*"


@dataclass(frozen=True)
class ParamDim:
    name: str
    kind: Kind
    lower: float
    upper: float
    scale: str = "linear"
    integral: bool = False

    def __post_init__(self):
        if not isinstance(self.kind, Kind):
            object.__setattr__(self, "kind", Kind(self.kind))
        if self.scale not in ("linear", "log"):
            raise ValueError(f"{self.name}: scale must be 'linear' or 'log'")
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower {self.lower} must be < upper {self.upper}")
        if self.scale == "log" and self.lower <= 0:
            raise ValueError(f"{self.name}: log scale needs lower > 0")
        if self.integral and self.kind is not Kind.MULTIPLIER:
            raise ValueError(f"{self.name}: only multipliers may be integral")

    def to_unit(self, value: float) -> float:
        if self.scale == "log":
            return math.log(value / self.lower) / math.log(self.upper / self.lower)
        return (value - self.lower) / (self.upper - self.lower)

    def from_unit(self, u: float) -> float:
        if self.scale == "log":
            v = self.lower * (self.upper / self.lower) ** u
        else:
            v = self.lower + u * (self.upper - self.lower)
        if self.integral:
            v = math.floor(v + 0.5)
        return min(max(v, self.lower), self.upper)


class DesignPoint(Mapping[str, float]):
    """Immutable name -> value assignment."""

    __slots__ = ("_items", "_map")

    def __init__(self, values: Mapping[str, float] | Iterable[tuple[str, float]] = ()):
        items = tuple((str(k), float(v)) for k, v in dict(values).items())
        self._items = items
        self._map = dict(items)

    def __getitem__(self, key: str) -> float:
        return self._map[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return hash(frozenset(self._items))

    def __eq__(self, other) -> bool:
        if isinstance(other, Mapping):
            return self._map == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"DesignPoint({self._map!r})"


@dataclass(frozen=True)
class DesignSpace:
    dims: tuple[ParamDim, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")

    def __len__(self) -> int:
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    def dim(self, name: str) -> ParamDim:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    def lower_point(self) -> DesignPoint:
        return DesignPoint((d.name, d.lower) for d in self.dims)

    def upper_point(self) -> DesignPoint:
        return DesignPoint((d.name, d.upper) for d in self.dims)


@dataclass(frozen=True)
class Violation:
    name: str
    reason: str
    distance: float


def classify(name: str) -> tuple[Kind, object]:
    """Dimension kind of a deck parameter name, plus its parsed device name."""
    try:
        dev = parse_device_name(name)
    except UnrecognizedName as exc:
        raise UnclassifiableParam(str(exc)) from None
    if dev.kind is DeviceKind.MOSFET:
        kind = {"W": Kind.WIDTH, "L": Kind.LENGTH, "M": Kind.MULTIPLIER}[dev.attribute]
    else:
        kind = {
            DeviceKind.CAPACITOR: Kind.CAPACITANCE,
            DeviceKind.RESISTOR: Kind.RESISTANCE,
            DeviceKind.CURRENT: Kind.BIAS_CURRENT,
        }[dev.kind]
    return kind, dev


def experiment_overrides() -> list[ParamDim]:
    """The narrowed ranges used for the four-corner AMP experiments."""
    return [
        ParamDim(ANY, Kind.WIDTH, 0.2, 10.0),
        ParamDim(ANY, Kind.LENGTH, 0.13, 1.0),
        ParamDim(ANY, Kind.MULTIPLIER, 1.0, 100.0, integral=True),
        ParamDim(ANY, Kind.CAPACITANCE, 1e-12, 1e-10, scale="log"),
        ParamDim(ANY, Kind.RESISTANCE, 100.0, 1e6, scale="log"),
        ParamDim(ANY, Kind.BIAS_CURRENT, 1e-6, 4e-5, scale="log"),
    ]


def space_from_testbench(tb: Testbench, node: TechNode,
                         overrides: Sequence[ParamDim] = ()) -> DesignSpace:
    """One dimension per deck parameter, bounded by ``node`` and ``overrides``.

    An override whose name is ``"*"`` applies to every parameter of its kind;
    otherwise it applies to the parameter with that name. Named overrides win
    over kind-wide ones. Overrides may only narrow the node bounds.
    """
    by_kind = {o.kind: o for o in overrides if o.name == ANY}
    by_name = {o.name: o for o in overrides if o.name != ANY}
    dims = []
    for p in tb.params:
        kind, _ = classify(p.name)
        lo, hi = node.kind_bounds(kind)
        scale = _DEFAULT_SCALE[kind]
        integral = kind is Kind.MULTIPLIER
        o = by_name.get(p.name) or by_kind.get(kind)
        if o is not None:
            if o.kind is not kind:
                raise OverrideOutOfNodeBounds(f"override for {p.name} has kind {o.kind.value}, "
                                              f"parameter is {kind.value}")
            if o.lower < lo or o.upper > hi:
                raise OverrideOutOfNodeBounds(
                    f"{p.name}: override [{o.lower}, {o.upper}] widens {node.name} "
                    f"bounds [{lo}, {hi}]"
                )
            lo, hi, scale = o.lower, o.upper, o.scale
        dims.append(ParamDim(p.name, kind, lo, hi, scale, integral))
    return DesignSpace(tuple(dims))


def validate(space: DesignSpace, point: Mapping[str, float]) -> list[Violation]:
    """Every reason ``point`` is not a valid member of ``space``; never raises."""
    out = []
    for d in space.dims:
        if d.name not in point:
            out.append(Violation(d.name, "missing", math.inf))
            continue
        v = float(point[d.name])
        if not math.isfinite(v):
            out.append(Violation(d.name, "non_finite", math.inf))
            continue
        if v < d.lower:
            out.append(Violation(d.name, "below", d.lower - v))
        elif v > d.upper:
            out.append(Violation(d.name, "above", v - d.upper))
        if d.integral and v != math.floor(v):
            out.append(Violation(d.name, "non_integral", abs(v - round(v))))
    names = set(space.names)
    for k in point:
        if k not in names:
            out.append(Violation(k, "unknown", math.inf))
    return out


def encode(space: DesignSpace, point: Mapping[str, float]) -> np.ndarray:
    bad = validate(space, point)
    if bad:
        raise PointOutOfBounds("; ".join(f"{v.name}: {v.reason}" for v in bad))
    return np.array([min(max(d.to_unit(point[d.name]), 0.0), 1.0) for d in space.dims],
                    dtype=float)


def decode(space: DesignSpace, vector: Sequence[float], tol: float = 1e-12) -> DesignPoint:
    u = np.asarray(vector, dtype=float).reshape(-1)
    if u.shape[0] != len(space):
        raise DimensionMismatch(f"vector has {u.shape[0]} coordinates, space has {len(space)}")
    if np.any(u < -tol) or np.any(u > 1 + tol) or not np.all(np.isfinite(u)):
        raise PointOutOfBounds("unit vector outside [0, 1]")
    u = np.clip(u, 0.0, 1.0)
    return DesignPoint((d.name, d.from_unit(float(x))) for d, x in zip(space.dims, u))


def corner_grid(node: TechNode, temperatures: Sequence[float] = (-40.0, 25.0, 125.0)
                ) -> list[PvtCorner]:
    """Full process x voltage x temperature grid in lexical order."""
    procs = sorted(node.processes, key=lambda p: p.value)
    volts = sorted(node.supply)
    temps = sorted(temperatures)
    return [PvtCorner(p, v, t) for p, v, t in itertools.product(procs, volts, temps)]


def experiment_corners() -> list[PvtCorner]:
    return [
        PvtCorner(Process.SS, 1.08, -25.0),
        PvtCorner(Process.FF, 1.32, 125.0),
        PvtCorner(Process.SF, 1.32, -25.0),
        PvtCorner(Process.FS, 1.08, 125.0),
    ]


def narrow(dim: ParamDim, lower: float | None = None, upper: float | None = None) -> ParamDim:
    return replace(dim, lower=dim.lower if lower is None else lower,
                   upper=dim.upper if upper is None else upper)
