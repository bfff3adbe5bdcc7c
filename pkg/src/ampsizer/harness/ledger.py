"""Append-only run ledgers.

One record per line, ``key=value`` pairs separated by spaces, every line
closed by a CRC32 of the text before it. The first line is the header.
Floats use ``repr`` so they round-trip exactly; vectors are comma lists.

Entry keys: ``fe``, ``status``, ``feasible``, ``obj``, ``viol``, ``u``,
``t_wall``, ``t_sim``, ``t_model``, then ``p.<param>`` for the design and
``c<k>=<P/V/T>``, ``c<k>.status``, ``c<k>.<metric>`` for each corner.
"""
from __future__ import annotations

import logging
import math
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence
from urllib.parse import quote, unquote

from ..errors import CorruptLedger, HashMismatch
from ..metrics import ConstraintSpec, MetricVector, Status
from ..opt.common import EvalLogEntry, Objective, assess
from ..space import DesignPoint, PvtCorner

log = logging.getLogger(__name__)

MAGIC = "ampsizer-ledger"
FORMAT_VERSION = "1"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v) if v else "-"
    s = str(v)
    if not s or any(ch.isspace() for ch in s) or "=" in s:
        raise ValueError(f"ledger value {s!r} is empty or contains spaces or '='")
    return s


def _floats(s: str) -> tuple[float, ...]:
    return () if s == "-" else tuple(float(x) for x in s.split(","))


def _seal(body: str) -> str:
    return f"{body} crc={zlib.crc32(body.encode()):08x}\n"


def _open(line: str) -> dict[str, str] | None:
    """Fields of a sealed line, or None when the seal does not match."""
    body, sep, crc = line.rpartition(" crc=")
    if not sep or crc != f"{zlib.crc32(body.encode()):08x}":
        return None
    out = {}
    for tok in body.split(" "):
        k, eq, v = tok.partition("=")
        if not eq:
            return None
        out[k] = v
    return out


@dataclass(frozen=True)
class LedgerHeader:
    config_hash: str
    seed: int
    optimizer: str
    objective: str
    max_fe: int
    versions: str
    started: str = "-"
    population: int = 0
    reference: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()
    hv_samples: int = 0
    hv_seed: int = 0

    def line(self) -> str:
        fields = [("magic", MAGIC), ("format", FORMAT_VERSION), ("hash", self.config_hash),
                  ("seed", self.seed), ("optimizer", self.optimizer),
                  ("objective", self.objective), ("max_fe", self.max_fe),
                  ("versions", self.versions), ("started", self.started),
                  ("population", self.population), ("ref", tuple(map(float, self.reference))),
                  ("upper", tuple(map(float, self.upper))), ("hv_samples", self.hv_samples),
                  ("hv_seed", self.hv_seed)]
        return _seal(" ".join(f"{k}={_fmt(v)}" for k, v in fields))

    @classmethod
    def parse(cls, fields: Mapping[str, str]) -> "LedgerHeader":
        if fields.get("magic") != MAGIC or fields.get("format") != FORMAT_VERSION:
            raise CorruptLedger("not an ampsizer ledger (bad header)")
        try:
            return cls(fields["hash"], int(fields["seed"]), fields["optimizer"],
                       fields["objective"], int(fields["max_fe"]), fields["versions"],
                       fields["started"], int(fields["population"]), _floats(fields["ref"]),
                       _floats(fields["upper"]), int(fields["hv_samples"]),
                       int(fields["hv_seed"]))
        except (KeyError, ValueError) as exc:
            raise CorruptLedger(f"bad ledger header: {exc}") from None


def entry_line(e: EvalLogEntry) -> str:
    o = e.outcome
    obj = o.objective
    parts = [("fe", e.fe), ("status", o.status.value), ("feasible", o.feasible),
             ("obj", tuple(obj) if isinstance(obj, tuple) else float(obj)),
             ("viol", tuple(o.violation)), ("u", tuple(e.u)),
             ("t_wall", float(e.t_wall)), ("t_sim", float(e.t_sim)),
             ("t_model", float(e.t_model))]
    parts += [(f"p.{k}", float(v)) for k, v in e.point.items()]
    for k, (corner, mv) in enumerate(o.corners):
        parts.append((f"c{k}", corner.label))
        parts.append((f"c{k}.status", mv.status.value))
        parts += [(f"c{k}.{m}", float(v)) for m, v in mv.values.items()]
    return _seal(" ".join(f"{k}={_fmt(v)}" for k, v in parts))


def parse_entry(fields: Mapping[str, str], constraints: ConstraintSpec, objective: Objective,
                catalog=None) -> EvalLogEntry:
    """Rebuild an entry; the outcome is recomputed from the corner results."""
    try:
        fe = int(fields["fe"])
        u = _floats(fields["u"])
        point = DesignPoint((k[2:], float(v)) for k, v in fields.items() if k.startswith("p."))
        corners = []
        k = 0
        while f"c{k}" in fields:
            prefix = f"c{k}."
            vals = {m[len(prefix):]: float(v) for m, v in fields.items()
                    if m.startswith(prefix) and m != prefix + "status"}
            corners.append((PvtCorner.from_label(fields[f"c{k}"]),
                            MetricVector(vals, Status(fields[prefix + "status"]))))
            k += 1
        times = (float(fields["t_wall"]), float(fields["t_sim"]), float(fields["t_model"]))
        stored_obj = _floats(fields["obj"])
        status = Status(fields["status"])
    except (KeyError, ValueError) as exc:
        raise CorruptLedger(f"bad entry: {exc}") from None
    outcome = assess(corners, constraints, objective, catalog)
    obj = outcome.objective
    recomputed = tuple(obj) if isinstance(obj, tuple) else (obj,)
    if outcome.status is not status or not _same(recomputed, stored_obj):
        raise CorruptLedger(f"FE {fe}: stored outcome disagrees with its corner results")
    return EvalLogEntry(fe, u, point, outcome, *times)


def _same(a: Sequence[float], b: Sequence[float]) -> bool:
    return len(a) == len(b) and all(x == y or (math.isnan(x) and math.isnan(y))
                                    for x, y in zip(a, b))


@dataclass(frozen=True)
class LedgerRecord:
    """The summary fields of one entry, enough to rebuild reports."""
    fe: int
    status: Status
    feasible: bool
    objective: float | tuple[float, ...]
    t_wall: float
    t_sim: float
    t_model: float


@dataclass
class LedgerScan:
    header: LedgerHeader
    rows: list[dict[str, str]]
    end: dict[str, str] | None   # closing record, when the run finished
    valid_bytes: int             # offset just past the last intact entry
    truncated: bool = False

    @property
    def status(self) -> str:
        """``complete``, ``failed`` or ``partial`` (no closing record)."""
        return self.end["end"] if self.end else "partial"

    @property
    def reason(self) -> str:
        return unquote(self.end.get("reason", "")) if self.end else ""


def scan_ledger(path: str | Path) -> LedgerScan:
    """Split a ledger into sealed records. A damaged final record is dropped
    with a warning; damage anywhere else raises :class:`CorruptLedger`."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorruptLedger(f"{path}: cannot read ledger ({exc.strerror})") from None
    lines = data.split(b"\n")
    # a trailing newline leaves one empty element; anything else is a partial record
    tail = lines.pop()
    pieces = [(ln, True) for ln in lines] + ([(tail, False)] if tail else [])
    if not pieces:
        raise CorruptLedger(f"{path}: empty ledger")
    header = None
    rows: list[dict[str, str]] = []
    end = None
    offset = valid = 0
    truncated = False
    for i, (raw, complete) in enumerate(pieces):
        last = i == len(pieces) - 1
        try:
            fields = _open(raw.decode("utf-8")) if complete else None
        except UnicodeDecodeError:
            fields = None
        if fields is None:
            if last and header is not None:
                log.warning("%s: dropping damaged final record (line %d)", path, i + 1)
                truncated = True
                break
            raise CorruptLedger(f"{path}: line {i + 1} is damaged")
        offset += len(raw) + 1
        if header is None:
            header = LedgerHeader.parse(fields)
            valid = offset
        elif end is not None:
            raise CorruptLedger(f"{path}: line {i + 1} follows the closing record")
        elif "end" in fields:
            end = fields
        else:
            try:
                fe = int(fields["fe"])
            except (KeyError, ValueError):
                raise CorruptLedger(f"{path}: line {i + 1} has no FE number") from None
            if fe != len(rows) + 1:
                raise CorruptLedger(f"{path}: line {i + 1} has FE {fe}, expected {len(rows) + 1}")
            rows.append(fields)
            valid = offset
    return LedgerScan(header, rows, end, valid, truncated)


def record_of(fields: Mapping[str, str], objective_width: int) -> LedgerRecord:
    try:
        obj = _floats(fields["obj"])
        return LedgerRecord(int(fields["fe"]), Status(fields["status"]), fields["feasible"] == "1",
                            obj if objective_width > 1 else obj[0],
                            float(fields["t_wall"]), float(fields["t_sim"]),
                            float(fields["t_model"]))
    except (KeyError, ValueError, IndexError) as exc:
        raise CorruptLedger(f"bad entry: {exc}") from None


def read_records(path: str | Path) -> tuple[LedgerScan, list[LedgerRecord]]:
    scan = scan_ledger(path)
    width = 7 if scan.header.objective == "moo" else 1
    return scan, [record_of(f, width) for f in scan.rows]


def read_entries(scan: LedgerScan, constraints: ConstraintSpec, objective: Objective,
                 catalog=None) -> list[EvalLogEntry]:
    return [parse_entry(f, constraints, objective, catalog) for f in scan.rows]


def read_header(path: str | Path) -> LedgerHeader:
    with open(path, "rb") as fh:
        first = fh.readline()
    fields = _open(first.decode("utf-8", errors="replace").rstrip("\n"))
    if fields is None:
        raise CorruptLedger(f"{path}: damaged header")
    return LedgerHeader.parse(fields)


def check_hash(header: LedgerHeader, expected: str, path: str | Path = "ledger") -> None:
    if header.config_hash != expected:
        raise HashMismatch(f"{path}: ledger was written for config {header.config_hash[:12]}, "
                           f"current config is {expected[:12]}")


class LedgerWriter:
    """Single-writer append, flushed per record (``sync`` adds an fsync)."""

    def __init__(self, path: str | Path, header: LedgerHeader | None = None,
                 truncate_at: int | None = None, sync: bool = False):
        self.path = Path(path)
        self.sync = sync
        if header is not None:
            self.fh = open(self.path, "w", encoding="utf-8", newline="\n")
            self._write(header.line())
        else:
            self.fh = open(self.path, "r+", encoding="utf-8", newline="\n")
            if truncate_at is not None:
                self.fh.truncate(truncate_at)
            self.fh.seek(0, os.SEEK_END)

    def _write(self, text: str) -> None:
        self.fh.write(text)
        self.fh.flush()
        if self.sync:
            os.fsync(self.fh.fileno())

    def append(self, entry: EvalLogEntry) -> None:
        self._write(entry_line(entry))

    def finish(self, status: str, reason: str = "") -> None:
        body = f"end={status}"
        if reason:
            body += f" reason={quote(reason, safe='')}"
        self._write(_seal(body))

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
