"""External SPICE driver: deck rendering, batch runs and ``.measure`` scraping."""
from __future__ import annotations

import itertools
import logging
import math
import os
import re
import shutil
import signal
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from ..errors import BackendUnavailable
from ..metrics import MetricVector, Status
from ..space import PvtCorner
from ..testbench import Testbench, set_corner, substitute_params

log = logging.getLogger(__name__)

SPICE_BIN_ENV = "ANALOG_SPICE_BIN"

DEFAULT_ALIASES = {
    "gain": "gain_db",
    "dcgain": "gain_db",
    "pm": "pm_deg",
    "phase_margin": "pm_deg",
    "gbw": "gbw_mhz",
    "ugf": "gbw_mhz",
    "sr": "sr_v_per_us",
    "slew": "sr_v_per_us",
    "ts": "ts_us",
    "settling": "ts_us",
    "psrr": "psrr_db",
    "cmrr": "cmrr_db",
    "vn": "vn_mvrms",
    "noise": "vn_mvrms",
    "vos": "vos_mv",
    "offset": "vos_mv",
    "tc": "tc_ppm",
    "power": "power_mw",
}

AMP_MEASURES = ("gain_db", "pm_deg", "gbw_mhz", "sr_v_per_us", "ts_us", "psrr_db",
                "cmrr_db", "vn_mvrms", "vos_mv", "tc_ppm", "power_mw")

_MEASURE_RE = re.compile(
    r"^\s*(?P<name>[A-Za-z_][\w.]*)\s*=\s*"
    r"(?P<value>[-+]?(?:(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|nan|inf(?:inity)?))"
    r"(?:\s+\S+)?",
    re.IGNORECASE,
)


def load_alias_map(path: str | Path) -> dict[str, str]:
    """Read flat ``raw_name = canonical_id`` lines."""
    table = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ValueError(f"{path}:{lineno}: expected 'raw_name = canonical_id'")
        raw, canon = (t.strip() for t in s.split("=", 1))
        table[raw.lower()] = canon
    return table


def parse_measures(stdout: str, expected: Sequence[str] = (),
                   aliases: Mapping[str, str] | None = None) -> MetricVector:
    """Scrape ``name = value`` lines. Later lines win over earlier ones."""
    amap = DEFAULT_ALIASES if aliases is None else aliases
    values: dict[str, float] = {}
    for line in stdout.splitlines():
        m = _MEASURE_RE.match(line)
        if not m:
            continue
        raw = m.group("name").lower()
        values[amap.get(raw, raw)] = float(m.group("value"))
    ok = all(k in values and math.isfinite(values[k]) for k in expected)
    finite = {k: v for k, v in values.items() if math.isfinite(v)}
    return MetricVector(finite if not ok else values, Status.OK if ok else Status.SIM_FAILED)


def render_deck(tb: Testbench, point: Mapping[str, float], corner: PvtCorner,
                library: Mapping[str, str] | None = None) -> str:
    return substitute_params(set_corner(tb, corner, library), point).serialize()


_job_ids = itertools.count(1)


@dataclass(frozen=True)
class SpiceJob:
    deck: str
    measures: tuple[str, ...]
    corner: str = ""
    job_id: str = field(default_factory=lambda: f"job{next(_job_ids):06d}")

    def __post_init__(self):
        if not self.deck.strip():
            raise ValueError("deck text is empty")
        object.__setattr__(self, "measures", tuple(self.measures))
        if len(set(self.measures)) != len(self.measures):
            raise ValueError("measure names must be unique")


@dataclass(frozen=True)
class ExternalSpice:
    binary: str = "ngspice"
    args: tuple[str, ...] = ("-b", "{deck}")
    workdir: str | None = None
    timeout: float = 60.0
    aliases: Mapping[str, str] | None = None
    keep_failures: int = 100

    def __post_init__(self):
        if not self.binary:
            raise ValueError("simulator binary path is empty")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_env(cls, **kw) -> "ExternalSpice":
        env = os.environ.get(SPICE_BIN_ENV)
        if env:
            kw["binary"] = env
        return cls(**kw)

    def resolve_binary(self) -> str:
        found = shutil.which(self.binary)
        if found is None:
            raise BackendUnavailable(f"simulator binary not found: {self.binary}")
        return found


class FailureStore:
    """Keeps the newest ``cap`` failed job directories under ``root``."""

    def __init__(self, root: str | Path, cap: int = 100):
        self.root = Path(root)
        self.cap = cap
        self._lock = threading.Lock()

    def keep(self, jobdir: Path) -> Path:
        with self._lock:
            self.root.mkdir(parents=True, exist_ok=True)
            dest = self.root / jobdir.name
            if dest.exists():
                shutil.rmtree(dest)
            shutil.move(str(jobdir), dest)
            kept = sorted(self.root.iterdir(), key=lambda p: (p.stat().st_mtime_ns, p.name))
            for old in kept[:max(0, len(kept) - self.cap)]:
                shutil.rmtree(old, ignore_errors=True)
            return dest


def run_spice(job: SpiceJob, backend: ExternalSpice,
              failures: FailureStore | None = None) -> MetricVector:
    binary = backend.resolve_binary()
    root = Path(backend.workdir) if backend.workdir else Path(tempfile.gettempdir()) / "ampsizer"
    root.mkdir(parents=True, exist_ok=True)
    jobdir = Path(tempfile.mkdtemp(prefix=f"{job.job_id}-", dir=root))
    deck = jobdir / "deck.sp"
    deck.write_text(job.deck, encoding="utf-8")
    argv = [binary] + [a.format(deck=str(deck)) for a in backend.args]

    status = None
    stdout = ""
    proc = subprocess.Popen(argv, cwd=jobdir, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
                            start_new_session=True)
    try:
        out, _ = proc.communicate(timeout=backend.timeout)
        stdout = out.decode("utf-8", errors="replace")
        if proc.returncode != 0:
            status = Status.SIM_FAILED
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        out, _ = proc.communicate()
        stdout = out.decode("utf-8", errors="replace")
        status = Status.TIMEOUT

    (jobdir / "stdout.txt").write_text(stdout, encoding="utf-8")
    if status is None:
        mv = parse_measures(stdout, job.measures, backend.aliases)
    else:
        mv = MetricVector({}, status)
    if mv.ok:
        shutil.rmtree(jobdir, ignore_errors=True)
    else:
        kept = (failures or FailureStore(root / "failures", backend.keep_failures)).keep(jobdir)
        log.warning("%s at corner %s failed (%s); artifacts kept in %s",
                    job.job_id, job.corner, mv.status.value, kept)
    return mv
