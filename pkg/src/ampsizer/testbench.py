"""Parse, edit and serialize the six-block testbench wrapper deck.

A deck looks like::

    .include ./netlist/NMCNR_Pin_3.txt
    .include ./mosfet model/sky130_pdk/libs.tech/ngspice/corners/tt.spice
    .PARAM supply_voltage = 1.8
    .temp 27
    .PARAM PARAM_CLOAD =10p
    .PARAM    MOSFET_10_1_L_gm2_PMOS=1 MOSFET_10_1_M_gm2_PMOS=38 ...
    MOSFET_23_1_L_gm3_NMOS=1 ...

The wrapped netlist is opaque. Every source line is kept verbatim, so a
parse followed by :func:`serialize` reproduces the input byte for byte.
Edits only rewrite the character span of the literal being changed.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import (
    DuplicateParam,
    MalformedLiteral,
    MissingLine,
    UnknownParam,
    UnknownProcess,
    UnrecognizedName,
)
from .units import format_si, parse_si_number, split_literal

ROLES = ("netlist", "corner", "supply", "temperature", "load_cap")

SUPPLY_PARAM = "supply_voltage"
LOAD_CAP_PARAM = "param_cload"

_ASSIGN_RE = re.compile(r"([A-Za-z_]\w*)\s*=\s*([^\s=]+)")
_DIRECTIVE_RE = re.compile(r"\s*(\.\w+)")


@dataclass(frozen=True)
class Line:
    text: str
    role: str


@dataclass(frozen=True)
class ParamAssignment:
    name: str
    value: float
    raw: str
    line: int = field(default=-1, compare=False, repr=False)
    span: tuple[int, int] = field(default=(0, 0), compare=False, repr=False)

    @property
    def suffix(self) -> str:
        return split_literal(self.raw)[1]


@dataclass(frozen=True)
class Testbench:
    netlist_include: str
    corner_include: str
    supply_voltage: float
    temperature: float
    load_cap: float
    params: tuple[ParamAssignment, ...]
    raw_lines: tuple[Line, ...]
    # role -> (line index, start, end) of the editable literal or path
    spans: Mapping[str, tuple[int, int, int]] = field(
        default_factory=dict, compare=False, repr=False
    )

    def param(self, name: str) -> ParamAssignment:
        for p in self.params:
            if p.name == name:
                return p
        raise UnknownParam(name)

    def param_values(self) -> dict[str, float]:
        return {p.name: p.value for p in self.params}

    def serialize(self) -> str:
        return "".join(line.text for line in self.raw_lines)


def _directive(stripped: str) -> str:
    m = _DIRECTIVE_RE.match(stripped)
    return m.group(1).lower() if m else ""


def _assignments(text: str, start: int, lineno: int) -> list[ParamAssignment]:
    """All ``name=value`` pairs in ``text[start:]``; anything else is an error."""
    out = []
    pos = start
    for m in _ASSIGN_RE.finditer(text, start):
        gap = text[pos:m.start()]
        if gap.strip():
            raise MalformedLiteral(f"line {lineno + 1}: unexpected text {gap.strip()!r}")
        raw = m.group(2)
        out.append(
            ParamAssignment(
                name=m.group(1),
                value=parse_si_number(raw),
                raw=raw,
                line=lineno,
                span=(m.start(2), m.end(2)),
            )
        )
        pos = m.end()
    if text[pos:].strip():
        raise MalformedLiteral(f"line {lineno + 1}: unexpected text {text[pos:].strip()!r}")
    return out


def parse_testbench(text: str) -> Testbench:
    """Parse deck text.

    Raises:
        MissingLine: one of the five fixed roles is absent.
        DuplicateParam: a tunable parameter is assigned twice.
        MalformedLiteral: a value is not a numeric literal.
    """
    lines = text.splitlines(keepends=True)
    tagged: list[Line] = []
    spans: dict[str, tuple[int, int, int]] = {}
    found: dict[str, object] = {}
    params: list[ParamAssignment] = []
    seen: set[str] = set()
    includes = 0
    in_params = False

    for i, src in enumerate(lines):
        body = src.rstrip("\r\n")
        stripped = body.strip()
        role = "other"
        if not stripped:
            role = "blank"
        elif stripped.startswith("*"):
            role = "comment"
        else:
            directive = _directive(body)
            if directive in (".include", ".inc"):
                in_params = False
                includes += 1
                if includes <= 2:
                    role = "netlist" if includes == 1 else "corner"
                    m = re.match(r"\s*\.\w+\s+", body)
                    start = m.end() if m else len(body)
                    end = len(body.rstrip())
                    found[role] = body[start:end]
                    spans[role] = (i, start, end)
            elif directive == ".temp":
                in_params = False
                m = re.match(r"\s*\.\w+\s*=?\s*(\S+)\s*$", body)
                if m is None:
                    raise MalformedLiteral(f"line {i + 1}: bad .temp line")
                role = "temperature"
                found[role] = parse_si_number(m.group(1))
                spans[role] = (i, m.start(1), m.end(1))
            elif directive == ".param":
                start = _DIRECTIVE_RE.match(body).end()
                assigns = _assignments(body, start, i)
                names = {a.name.lower() for a in assigns}
                if len(assigns) == 1 and names == {SUPPLY_PARAM}:
                    role, in_params = "supply", False
                elif len(assigns) == 1 and names == {LOAD_CAP_PARAM}:
                    role, in_params = "load_cap", False
                else:
                    role, in_params = "params", True
                if role in ("supply", "load_cap"):
                    a = assigns[0]
                    found[role] = a.value
                    spans[role] = (i, *a.span)
                else:
                    for a in assigns:
                        if a.name in seen:
                            raise DuplicateParam(a.name)
                        seen.add(a.name)
                        params.append(a)
            elif in_params and (stripped.startswith("+") or not stripped.startswith(".")):
                role = "params"
                start = body.index("+") + 1 if stripped.startswith("+") else 0
                for a in _assignments(body, start, i):
                    if a.name in seen:
                        raise DuplicateParam(a.name)
                    seen.add(a.name)
                    params.append(a)
            else:
                in_params = False
        tagged.append(Line(src, role))

    for role in ROLES:
        if role not in found:
            raise MissingLine(role)

    return Testbench(
        netlist_include=found["netlist"],
        corner_include=found["corner"],
        supply_voltage=found["supply"],
        temperature=found["temperature"],
        load_cap=found["load_cap"],
        params=tuple(params),
        raw_lines=tuple(tagged),
        spans=spans,
    )


def serialize(tb: Testbench) -> str:
    return tb.serialize()


def _apply_edits(tb: Testbench, edits: Iterable[tuple[int, int, int, str]]) -> Testbench:
    by_line: dict[int, list[tuple[int, int, str]]] = {}
    for lineno, start, end, new in edits:
        by_line.setdefault(lineno, []).append((start, end, new))
    if not by_line:
        return tb
    texts = [line.text for line in tb.raw_lines]
    for lineno, items in by_line.items():
        text = texts[lineno]
        for start, end, new in sorted(items, reverse=True):
            text = text[:start] + new + text[end:]
        texts[lineno] = text
    return parse_testbench("".join(texts))


def _literal_edit(tb: Testbench, role: str, current: float, new: float):
    lineno, start, end = tb.spans[role]
    if float(new) == current:
        return None
    raw = tb.raw_lines[lineno].text[start:end]
    return (lineno, start, end, format_si(new, split_literal(raw)[1]))


# -- device names --------------------------------------------------------------

class DeviceKind(str, enum.Enum):
    MOSFET = "MOSFET"
    CAPACITOR = "CAPACITOR"
    RESISTOR = "RESISTOR"
    CURRENT = "CURRENT"


@dataclass(frozen=True)
class DeviceParamName:
    kind: DeviceKind
    index: int
    parallel_count: int | None = None
    attribute: str | None = None
    function_tag: str | None = None
    device_type: str | None = None

    def format(self) -> str:
        if self.kind is DeviceKind.MOSFET:
            return (
                f"MOSFET_{self.index}_{self.parallel_count}_{self.attribute}"
                f"_{self.function_tag}_{self.device_type}"
            )
        tail = f"_{self.function_tag}" if self.function_tag else ""
        return f"{self.kind.value}_{self.index}{tail}"

    @property
    def device_key(self) -> tuple:
        """Identity of the physical device, independent of the attribute."""
        return (self.kind, self.index, self.parallel_count, self.function_tag, self.device_type)

    def __str__(self) -> str:
        return self.format()


def _canonical_int(field_: str) -> int | None:
    if field_.isdigit() and (field_ == "0" or not field_.startswith("0")):
        return int(field_)
    return None


def parse_device_name(name: str) -> DeviceParamName:
    """Decode ``MOSFET_<idx>_<parallel>_<W|L|M>_<tag>_<NMOS|PMOS>`` and the
    passive/source forms ``CAPACITOR_<idx>``, ``RESISTOR_<idx>``,
    ``CURRENT_<idx>_<tag>``.
    """
    parts = name.split("_")
    head = parts[0]
    try:
        kind = DeviceKind(head)
    except ValueError:
        raise UnrecognizedName(f"unknown device kind in {name!r}") from None

    if kind is DeviceKind.MOSFET:
        if len(parts) < 6:
            raise UnrecognizedName(f"MOSFET name needs 6 fields: {name!r}")
        index = _canonical_int(parts[1])
        parallel = _canonical_int(parts[2])
        attr = parts[3]
        tag = "_".join(parts[4:-1])
        dtype = parts[-1]
        if index is None or parallel is None or parallel < 1:
            raise UnrecognizedName(f"bad index/parallel count in {name!r}")
        if attr not in ("W", "L", "M"):
            raise UnrecognizedName(f"bad attribute {attr!r} in {name!r}")
        if dtype not in ("NMOS", "PMOS"):
            raise UnrecognizedName(f"bad device type {dtype!r} in {name!r}")
        if not tag:
            raise UnrecognizedName(f"missing function tag in {name!r}")
        return DeviceParamName(kind, index, parallel, attr, tag, dtype)

    if len(parts) < 2:
        raise UnrecognizedName(f"missing index in {name!r}")
    index = _canonical_int(parts[1])
    if index is None:
        raise UnrecognizedName(f"bad index in {name!r}")
    tag = "_".join(parts[2:]) or None
    return DeviceParamName(kind, index, function_tag=tag)


# -- corners -----------------------------------------------------------------

DEFAULT_CORNER_TEMPLATE = "./mosfet model/sky130_pdk/libs.tech/ngspice/corners/{process}.spice"


class CornerLibrary(dict):
    """Mapping of process name (``"TT"``...) to corner include path."""

    @classmethod
    def from_template(cls, template: str = DEFAULT_CORNER_TEMPLATE,
                      processes: Iterable[str] = ("TT", "FF", "SS", "FS", "SF")):
        return cls({p: template.format(process=p.lower(), PROCESS=p) for p in processes})

    def path_for(self, process) -> str:
        key = getattr(process, "value", process)
        try:
            return self[key]
        except KeyError:
            raise UnknownProcess(f"no corner include for process {key!r}") from None


def set_corner(tb: Testbench, corner, library: Mapping[str, str] | None = None) -> Testbench:
    """Copy of ``tb`` with the corner include, supply and temperature rewritten."""
    lib = CornerLibrary(library) if library is not None else CornerLibrary.from_template()
    path = lib.path_for(corner.process)
    edits = []
    if path != tb.corner_include:
        lineno, start, end = tb.spans["corner"]
        edits.append((lineno, start, end, path))
    for role, cur, new in (
        ("supply", tb.supply_voltage, corner.voltage),
        ("temperature", tb.temperature, corner.temperature),
    ):
        e = _literal_edit(tb, role, cur, new)
        if e:
            edits.append(e)
    return _apply_edits(tb, edits)


def set_load_cap(tb: Testbench, farads: float) -> Testbench:
    e = _literal_edit(tb, "load_cap", tb.load_cap, farads)
    return _apply_edits(tb, [e] if e else [])


def set_netlist(tb: Testbench, path: str) -> Testbench:
    if path == tb.netlist_include:
        return tb
    lineno, start, end = tb.spans["netlist"]
    return _apply_edits(tb, [(lineno, start, end, path)])


def substitute_params(tb: Testbench, point: Mapping[str, float]) -> Testbench:
    """Copy of ``tb`` with parameter literals replaced by ``point`` values.

    Unchanged values keep their original literal; changed ones are written
    with the suffix of the literal they replace.
    """
    index = {p.name: p for p in tb.params}
    edits = []
    for name, value in point.items():
        p = index.get(name)
        if p is None:
            raise UnknownParam(name)
        if float(value) == p.value:
            continue
        edits.append((p.line, p.span[0], p.span[1], format_si(value, p.suffix)))
    return _apply_edits(tb, edits)
