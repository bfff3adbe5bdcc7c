"""Run orchestration: one ledger per seed, resumable, then a report."""
from __future__ import annotations

import datetime
import functools
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .. import __version__
from ..errors import OutputDirUnwritable, RunLocked
from ..metrics import CATALOGS, fom_amp, load_baseline
from ..opt import MOO, SOO, Objective, Recorder, bo_optimize, de_optimize, nsga2_optimize
from ..opt import random_search
from ..opt.hypervolume import MC_SAMPLES
from ..sim import (
    SURROGATE_VERSION,
    ExternalSpice,
    SpiceBackend,
    SurrogateBackend,
    SurrogateConfig,
    load_alias_map,
    sweep,
)
from ..space import DesignSpace, get_node, space_from_testbench
from ..testbench import CornerLibrary, Testbench, parse_testbench, set_load_cap, set_netlist
from .config import RunConfig, space_overrides
from .ledger import (
    LedgerHeader,
    LedgerWriter,
    check_hash,
    read_entries,
    read_header,
    scan_ledger,
)
from .report import Report, emit_report, report_from_ledgers

log = logging.getLogger(__name__)

LOCK_NAME = ".lock"


@dataclass
class RunContext:
    """Everything a seed needs, built once per run."""
    cfg: RunConfig
    tb: Testbench
    space: DesignSpace
    backend: object
    objective: Objective
    catalog: object
    config_hash: str

    def evaluator(self):
        def evaluate(point):
            return sweep(self.backend, self.tb, point, self.cfg.corners, self.cfg.workers).records
        return evaluate


def make_objective(cfg: RunConfig) -> Objective:
    if cfg.objective == "moo":
        return MOO
    if cfg.objective == "fom_amp":
        return Objective("fom_amp", functools.partial(fom_amp, base=load_baseline(cfg.baseline)))
    return SOO


def make_backend(cfg: RunConfig, space: DesignSpace):
    b = cfg.backend
    if b.kind == "surrogate":
        return SurrogateBackend(SurrogateConfig.for_space(space))
    kw = {"timeout": b.timeout}
    if b.binary:
        kw["binary"] = b.binary
    if b.aliases is not None:
        kw["aliases"] = load_alias_map(b.aliases)
    settings = ExternalSpice.from_env(**kw)
    library = CornerLibrary.from_template(b.corner_template) if b.corner_template else None
    extra = {"measures": b.measures} if b.measures else {}
    return SpiceBackend(settings, library=library, failure_dir=cfg.outdir / "failures", **extra)


def build_context(cfg: RunConfig) -> RunContext:
    tb = parse_testbench(cfg.testbench.read_text(encoding="utf-8"))
    if cfg.netlist:
        tb = set_netlist(tb, cfg.netlist)
    if cfg.load_cap is not None:
        tb = set_load_cap(tb, cfg.load_cap)
    space = space_from_testbench(tb, get_node(cfg.node), space_overrides(cfg))
    return RunContext(cfg, tb, space, make_backend(cfg, space), make_objective(cfg),
                      CATALOGS[cfg.circuit_class], cfg.config_hash())


def ledger_path(outdir: Path, seed: int) -> Path:
    return Path(outdir) / f"seed-{seed}.ledger"


def _header(ctx: RunContext, seed: int) -> LedgerHeader:
    cfg = ctx.cfg
    params = cfg.params_object()
    started = (datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
               if cfg.record_timing else "-")
    moo = cfg.objective == "moo"
    return LedgerHeader(
        ctx.config_hash, seed, cfg.optimizer, cfg.objective, cfg.max_fe,
        f"ampsizer-{__version__}+{SURROGATE_VERSION}", started,
        population=getattr(params, "population", 0),
        reference=tuple(cfg.moo_reference or ()) if moo else (),
        upper=tuple(cfg.moo_upper or ()) if moo else (),
        hv_samples=getattr(params, "hv_samples", MC_SAMPLES) if moo else 0,
        hv_seed=getattr(params, "hv_seed", 0) if moo else 0,
    )


def optimizer_fn(cfg: RunConfig) -> Callable[[Recorder, int], object]:
    params = cfg.params_object()
    if cfg.optimizer == "random":
        return random_search
    if cfg.optimizer == "de":
        return lambda rec, seed: de_optimize(rec, seed, params)
    if cfg.optimizer == "bo":
        return lambda rec, seed: bo_optimize(rec, seed, params)
    return lambda rec, seed: nsga2_optimize(rec, seed, cfg.moo_reference, params, cfg.moo_upper)


def run_seed(ctx: RunContext, seed: int, path: Path) -> None:
    """Run or continue one seed. Failures are written to the ledger, not raised."""
    cfg = ctx.cfg
    replay = []
    if path.exists():
        scan = scan_ledger(path)
        check_hash(scan.header, ctx.config_hash, path)
        if scan.status == "complete":
            return
        replay = read_entries(scan, cfg.constraints, ctx.objective, ctx.catalog)
        writer = LedgerWriter(path, truncate_at=scan.valid_bytes)
    else:
        writer = LedgerWriter(path, _header(ctx, seed))
    with writer:
        rec = Recorder(ctx.space, ctx.evaluator(), cfg.constraints, ctx.objective, cfg.max_fe,
                       replay=replay, on_entry=writer.append, record_timing=cfg.record_timing,
                       catalog=ctx.catalog)
        try:
            optimizer_fn(cfg)(rec, seed)
        except Exception as exc:    # one broken seed must not stop the others
            log.error("seed %d failed: %s", seed, exc)
            writer.finish("failed", f"{type(exc).__name__}: {exc}")
            return
        if rec.used < len(replay):
            writer.finish("failed", "optimizer stopped before the end of the replayed ledger")
            return
        writer.finish("complete")


# -- locking ---------------------------------------------------------------------

def _alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class OutdirLock:
    """Exclusive ownership of an output directory; stale locks are taken over."""

    def __init__(self, outdir: Path):
        self.path = Path(outdir) / LOCK_NAME
        self.held = False

    def acquire(self) -> None:
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
            except FileExistsError:
                try:
                    pid = int(self.path.read_text().strip() or "0")
                except (OSError, ValueError):
                    pid = 0
                if pid and pid != os.getpid() and _alive(pid):
                    raise RunLocked(f"{self.path.parent} is in use by process {pid}") from None
                log.warning("taking over stale lock %s (pid %s)", self.path, pid or "unknown")
                self.path.unlink(missing_ok=True)
                continue
            with os.fdopen(fd, "w") as fh:
                fh.write(f"{os.getpid()}\n")
            self.held = True
            return
        raise RunLocked(f"could not lock {self.path.parent}")

    def release(self) -> None:
        if self.held:
            self.path.unlink(missing_ok=True)
            self.held = False

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()


def _prepare_outdir(outdir: Path) -> None:
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputDirUnwritable(f"{outdir}: {exc.strerror}") from None
    if not os.access(outdir, os.W_OK):
        raise OutputDirUnwritable(f"{outdir}: not writable")


# -- entry points ----------------------------------------------------------------

def run(cfg: RunConfig) -> Report:
    """Run every seed (continuing any partial ledgers) and write the report."""
    ctx = build_context(cfg)
    ctx.backend.check()                 # BackendUnavailable aborts before any seed
    outdir = Path(cfg.outdir)
    _prepare_outdir(outdir)
    with OutdirLock(outdir):
        paths = []
        for seed in cfg.seeds:
            path = ledger_path(outdir, seed)
            run_seed(ctx, seed, path)
            paths.append(path)
        report = report_from_ledgers(paths)
        emit_report(report, outdir)
    return report


def resume(ledger: str | Path, cfg: RunConfig) -> Report:
    """Continue the seed recorded in ``ledger``, then report on its directory."""
    ledger = Path(ledger)
    header = read_header(ledger)
    ctx = build_context(cfg)
    check_hash(header, ctx.config_hash, ledger)
    ctx.backend.check()
    outdir = ledger.parent
    with OutdirLock(outdir):
        run_seed(ctx, header.seed, ledger)
        paths = [p for p in (ledger_path(outdir, s) for s in cfg.seeds) if p.exists()]
        if ledger not in paths:
            paths.append(ledger)
        report = report_from_ledgers(paths)
        emit_report(report, outdir)
    return report
