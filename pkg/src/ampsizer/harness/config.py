"""Run configuration: a sectioned ``key = value`` file.

Input paths are resolved against the directory holding the config file;
the output directory is resolved against the working directory.

Sections and keys::

    [run]        circuit_class, testbench, netlist, node, corners, load_cap,
                 objective, baseline, max_fe, repetitions, seed, seeds,
                 outdir, workers, record_timing
    [space]      ranges (experiment | node), then per-kind (W L M C R I) or
                 per-parameter overrides written ``lo..hi [log|linear]``
    [backend]    kind (surrogate | spice), binary, timeout, aliases,
                 corner_template, measures
    [optimizer]  kind (random | de | bo | nsga2) plus hyperparameters
    [constraints] template (soo | moo | none), then ``metric = <= 1`` lines
    [moo]        reference (baseline | comma list), upper (comma list)
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import AmpSizerError, ConfigParseError, ValidationError
from ..metrics import (
    CATALOGS,
    Constraint,
    ConstraintSpec,
    load_baseline,
    moo_constraints,
    moo_reference_from_baseline,
    parse_constraint,
    soo_constraints,
)
from ..opt import BoParams, DeParams, Nsga2Params
from ..space import (
    ANY,
    Kind,
    ParamDim,
    PvtCorner,
    corner_grid,
    experiment_corners,
    experiment_overrides,
    get_node,
    space_from_testbench,
)
from ..testbench import parse_testbench
from ..units import parse_si_number

DEFAULT_MAX_FE = 1000
DEFAULT_REPETITIONS = 10

SECTIONS = ("run", "space", "backend", "optimizer", "constraints", "moo")
RUN_KEYS = ("circuit_class", "testbench", "netlist", "node", "corners", "load_cap",
            "objective", "baseline", "max_fe", "repetitions", "seed", "seeds", "outdir",
            "workers", "record_timing")
BACKEND_KEYS = ("kind", "binary", "timeout", "aliases", "corner_template", "measures")
OBJECTIVES = ("soo", "moo", "fom_amp")
OPTIMIZER_PARAMS = {"random": None, "de": DeParams, "bo": BoParams, "nsga2": Nsga2Params}
KIND_KEYS = {"w": Kind.WIDTH, "l": Kind.LENGTH, "m": Kind.MULTIPLIER,
             "c": Kind.CAPACITANCE, "r": Kind.RESISTANCE, "i": Kind.BIAS_CURRENT}
# keys that change neither the evaluated designs nor the ledger entries
UNHASHED = ("outdir", "workers", "record_timing")


def derive_seeds(master: int, repetitions: int) -> tuple[int, ...]:
    state = np.random.SeedSequence(master).generate_state(repetitions, dtype=np.uint32)
    return tuple(int(s) for s in state)


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "surrogate"
    binary: str | None = None
    timeout: float = 60.0
    aliases: Path | None = None
    corner_template: str | None = None
    measures: tuple[str, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    path: Path | None
    testbench: Path
    circuit_class: str = "amp"
    netlist: str | None = None
    node: str = "n130"
    corners: tuple[PvtCorner, ...] = ()
    corner_selector: str = "experiment"
    load_cap: float | None = None
    objective: str = "soo"
    baseline: Path | None = None
    max_fe: int = DEFAULT_MAX_FE
    seed: int = 0
    seeds: tuple[int, ...] = ()
    outdir: Path = Path("runs")
    workers: int = 1
    record_timing: bool = True
    ranges: str = "experiment"
    overrides: tuple[ParamDim, ...] = ()
    backend: BackendConfig = BackendConfig()
    optimizer: str = "random"
    optimizer_params: Mapping[str, str] = field(default_factory=dict)
    constraints: ConstraintSpec = ConstraintSpec()
    moo_reference: tuple[float, ...] | None = None
    moo_upper: tuple[float, ...] | None = None

    @property
    def repetitions(self) -> int:
        return len(self.seeds)

    def canonical(self) -> dict[str, str]:
        """Every setting that influences results, as strings."""
        out = {
            "circuit_class": self.circuit_class,
            "netlist": self.netlist or "",
            "node": self.node,
            "corners": ",".join(c.label for c in self.corners),
            "load_cap": repr(self.load_cap),
            "objective": self.objective,
            "max_fe": str(self.max_fe),
            "seeds": ",".join(map(str, self.seeds)),
            "ranges": self.ranges,
            "overrides": ";".join(f"{d.name}|{d.kind.value}|{d.lower!r}|{d.upper!r}|{d.scale}"
                                  for d in self.overrides),
            "backend": f"{self.backend.kind}|{self.backend.binary}|{self.backend.timeout!r}|"
                       f"{self.backend.corner_template}|{self.backend.measures}",
            "optimizer": self.optimizer,
            "optimizer_params": ";".join(f"{k}={v}" for k, v in sorted(
                self.optimizer_params.items())),
            "constraints": ";".join(c.describe() for c in self.constraints),
            "moo_reference": repr(self.moo_reference),
            "moo_upper": repr(self.moo_upper),
        }
        return out

    def config_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.canonical(), sort_keys=True).encode())
        for p in (self.testbench, self.baseline, self.backend.aliases):
            h.update(b"\0")
            if p is not None:
                h.update(Path(p).read_bytes())
        return h.hexdigest()

    def params_object(self):
        """Hyperparameter dataclass for the configured optimizer (None for random)."""
        cls = OPTIMIZER_PARAMS[self.optimizer]
        if cls is None:
            return None
        return cls(**{k: coerce_param(cls, k, v) for k, v in self.optimizer_params.items()})


# -- value parsing ---------------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(parse_si_number(t) for t in re.split(r"[,\s]+", text.strip()) if t)


def parse_corners(text: str, node_name: str) -> tuple[PvtCorner, ...]:
    t = text.strip()
    if t.lower() in ("experiment", "experiment-4"):
        return tuple(experiment_corners())
    if t.lower() in ("grid", "full"):
        return tuple(corner_grid(get_node(node_name)))
    return tuple(PvtCorner.from_label(s) for s in re.split(r"[,;]", t) if s.strip())


def parse_range(name: str, text: str) -> ParamDim:
    """``"0.2..10"`` or ``"1p..100p log"`` for a kind letter or a parameter name."""
    from ..space import classify
    parts = text.split()
    if not parts or ".." not in parts[0] or len(parts) > 2:
        raise ValueError(f"range must look like 'lo..hi [log|linear]', got {text!r}")
    lo, hi = (parse_si_number(t) for t in parts[0].split("..", 1))
    kind = KIND_KEYS.get(name.lower())
    if kind is None:
        kind, _ = classify(name)
        dim_name = name
    else:
        dim_name = ANY
    scale = parts[1].lower() if len(parts) == 2 else (
        "log" if kind in (Kind.CAPACITANCE, Kind.RESISTANCE, Kind.BIAS_CURRENT) else "linear")
    return ParamDim(dim_name, kind, lo, hi, scale)


def coerce_param(cls, key: str, text: str):
    """Convert a hyperparameter string to the type of the dataclass field."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ValueError(f"unknown {cls.__name__} field {key!r}; "
                         f"choose from {', '.join(fields)}")
    t = text.strip()
    default = fields[key].default
    annot = str(fields[key].type)
    if t.lower() == "none":
        if "None" not in annot:
            raise ValueError(f"{key} cannot be none")
        return None
    if key == "local_steps":
        steps = []
        for tok in t.replace(",", " ").split():
            sigma, count = tok.split(":")
            steps.append((float(sigma), int(count)))
        return tuple(steps)
    if isinstance(default, bool):
        return _bool(t)
    if isinstance(default, int) or annot.startswith("int"):
        return int(t)
    if isinstance(default, float) or annot.startswith("float"):
        return float(t)
    return t


# -- loading ---------------------------------------------------------------------

def _key_line(text: str, section: str, key: str) -> int | None:
    cur = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip().lower()
        elif cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return n
    return None


def _resolve(base: Path, value: str) -> Path:
    p = Path(value).expanduser()
    return p if p.is_absolute() else base / p


def read_config_text(path: str | Path) -> tuple[configparser.ConfigParser, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"{path}: cannot read config ({exc.strerror})") from None
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       strict=True)
    parser.optionxform = str     # parameter names are case-sensitive
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigParseError(str(exc)) from None
    for sec in parser.sections():
        if sec.lower() not in SECTIONS:
            line = next((n for n, l in enumerate(text.splitlines(), 1)
                         if l.strip() == f"[{sec}]"), None)
            raise ConfigParseError(f"{path}:{line}: unknown section [{sec}]")
    return parser, text


def load_config(path: str | Path) -> RunConfig:
    """Parse, default and validate a run configuration."""
    path = Path(path)
    parser, text = read_config_text(path)
    base = path.parent
    problems: list[str] = []

    def sec(name):
        for s in parser.sections():
            if s.lower() == name:
                return {k.strip(): v.strip() for k, v in parser.items(s)}
        return {}

    def parse(section, key, fn, raw):
        try:
            return fn(raw)
        except (ValueError, AmpSizerError) as exc:
            line = _key_line(text, section, key)
            where = f"{path}:{line}" if line else str(path)
            raise ConfigParseError(f"{where}: [{section}] {key}: {exc}") from None

    run = sec("run")
    for k in run:
        if k not in RUN_KEYS:
            raise ConfigParseError(f"{path}:{_key_line(text, 'run', k)}: [run] {k}: unknown key")
    node = run.get("node", "n130")
    kw: dict = {"path": path}
    kw["circuit_class"] = run.get("circuit_class", "amp").lower()
    kw["node"] = node
    if "testbench" in run and run["testbench"]:
        kw["testbench"] = _resolve(base, run["testbench"])
    else:
        kw["testbench"] = None
        problems.append("[run] testbench: missing")
    kw["netlist"] = run.get("netlist") or None
    kw["corner_selector"] = run.get("corners", "experiment")
    if node in ("n180", "n130", "n22"):
        kw["corners"] = parse("run", "corners", lambda t: parse_corners(t, node),
                              kw["corner_selector"])
    else:
        kw["corners"] = ()
        problems.append(f"[run] node: unknown technology node {node!r}")
    if "load_cap" in run:
        kw["load_cap"] = parse("run", "load_cap", parse_si_number, run["load_cap"])
    kw["objective"] = run.get("objective", "soo").lower()
    kw["baseline"] = _resolve(base, run["baseline"]) if run.get("baseline") else None
    kw["max_fe"] = parse("run", "max_fe", int, run.get("max_fe", str(DEFAULT_MAX_FE)))
    kw["seed"] = parse("run", "seed", int, run.get("seed", "0"))
    reps = parse("run", "repetitions", int, run.get("repetitions", str(DEFAULT_REPETITIONS)))
    if "seeds" in run:
        kw["seeds"] = parse("run", "seeds",
                            lambda t: tuple(int(s) for s in re.split(r"[,\s]+", t) if s),
                            run["seeds"])
        if "repetitions" in run and reps != len(kw["seeds"]):
            problems.append(f"[run] seeds: {len(kw['seeds'])} seeds listed but repetitions "
                            f"is {reps}")
    else:
        kw["seeds"] = derive_seeds(kw["seed"], reps) if reps >= 1 else ()
        if reps < 1:
            problems.append("[run] repetitions: must be at least 1")
    kw["outdir"] = Path(run.get("outdir", "runs")).expanduser()
    kw["workers"] = parse("run", "workers", int, run.get("workers", "1"))
    kw["record_timing"] = parse("run", "record_timing", _bool, run.get("record_timing", "true"))

    space = sec("space")
    kw["ranges"] = space.pop("ranges", "experiment").lower()
    kw["overrides"] = tuple(parse("space", k, lambda t, k=k: parse_range(k, t), v)
                            for k, v in space.items())

    be = sec("backend")
    for k in be:
        if k not in BACKEND_KEYS:
            problems.append(f"[backend] {k}: unknown key")
    kw["backend"] = BackendConfig(
        kind=be.get("kind", "surrogate").lower(),
        binary=be.get("binary") or None,
        timeout=parse("backend", "timeout", float, be.get("timeout", "60")),
        aliases=_resolve(base, be["aliases"]) if be.get("aliases") else None,
        corner_template=be.get("corner_template") or None,
        measures=tuple(be["measures"].replace(",", " ").split()) if be.get("measures") else None,
    )

    opt = sec("optimizer")
    kw["optimizer"] = opt.pop("kind", "random").lower()
    kw["optimizer_params"] = dict(opt)

    cons = sec("constraints")
    template = cons.pop("template", None)
    if template is None:
        template = {"soo": "soo", "moo": "moo"}.get(kw["objective"], "none")
    kw["constraints"] = parse("constraints", "template",
                              lambda t: _constraint_template(t, kw["circuit_class"]), template)
    extra = [parse("constraints", k, lambda t, k=k: parse_constraint(k, t), v)
             for k, v in cons.items()]
    kw["constraints"] = merge_constraints(kw["constraints"], extra)

    moo = sec("moo")
    ref = moo.get("reference")
    if ref and ref.lower() != "baseline":
        kw["moo_reference"] = parse("moo", "reference", _floats, ref)
    elif ref:
        kw["moo_reference"] = None     # resolved from the baseline below
    if moo.get("upper"):
        kw["moo_upper"] = parse("moo", "upper", _floats, moo["upper"])

    cfg = _build(kw, problems)
    return cfg


def _constraint_template(name: str, circuit_class: str) -> ConstraintSpec:
    n = name.lower()
    if n == "none":
        return ConstraintSpec()
    if n == "soo":
        return soo_constraints()
    if n == "moo":
        return moo_constraints()
    if n == "ldo":
        return ConstraintSpec((Constraint("pm_deg", "in", 45.0, 90.0),))
    raise ValueError(f"unknown constraint template {name!r}; use soo, moo, ldo or none")


def merge_constraints(spec: ConstraintSpec, extra) -> ConstraintSpec:
    """Constraints in ``extra`` replace template entries on the same metric."""
    out = {c.metric: c for c in spec}
    for c in extra:
        out[c.metric] = c
    return ConstraintSpec(tuple(out.values()))


def _build(kw: dict, problems: list[str]) -> RunConfig:
    if kw["testbench"] is None:
        raise ValidationError(problems)
    cfg = RunConfig(**kw)
    if cfg.moo_reference is None and cfg.objective == "moo" and cfg.baseline is not None:
        try:
            ref = moo_reference_from_baseline(load_baseline(cfg.baseline))
            cfg = replace(cfg, moo_reference=ref)
        except (OSError, ValueError, AmpSizerError) as exc:
            problems.append(f"[moo] reference: cannot derive from baseline ({exc})")
    problems.extend(validate_config(cfg))
    if problems:
        raise ValidationError(problems)
    return cfg


def validate_config(cfg: RunConfig) -> list[str]:
    """Every problem with ``cfg``; empty when it can be run."""
    out = []
    if cfg.circuit_class not in CATALOGS:
        out.append(f"[run] circuit_class: {cfg.circuit_class!r} not one of {sorted(CATALOGS)}")
    elif cfg.circuit_class != "amp" and cfg.backend.kind == "surrogate":
        out.append(f"[backend] kind: the surrogate only models amplifiers, not "
                   f"{cfg.circuit_class}")
    tb = None
    if not cfg.testbench.is_file():
        out.append(f"[run] testbench: no such file {cfg.testbench}")
    else:
        try:
            tb = parse_testbench(cfg.testbench.read_text(encoding="utf-8"))
        except (ValueError, AmpSizerError) as exc:
            out.append(f"[run] testbench: {exc}")
    if cfg.baseline is not None and not cfg.baseline.is_file():
        out.append(f"[run] baseline: no such file {cfg.baseline}")
    if cfg.objective not in OBJECTIVES:
        out.append(f"[run] objective: {cfg.objective!r} not one of {', '.join(OBJECTIVES)}")
    if cfg.objective == "fom_amp" and cfg.baseline is None:
        out.append("[run] baseline: required by the fom_amp objective")
    if cfg.optimizer not in OPTIMIZER_PARAMS:
        out.append(f"[optimizer] kind: {cfg.optimizer!r} not one of "
                   f"{', '.join(OPTIMIZER_PARAMS)}")
    else:
        if (cfg.objective == "moo") != (cfg.optimizer == "nsga2"):
            out.append("[optimizer] kind: nsga2 pairs with objective moo, the others with "
                       "scalar objectives")
        try:
            cfg.params_object()
        except (ValueError, TypeError) as exc:
            out.append(f"[optimizer] {exc}")
    if cfg.objective == "moo":
        if cfg.moo_reference is None:
            out.append("[moo] reference: needed (a comma list, or 'baseline' with [run] baseline)")
        elif len(cfg.moo_reference) != 7:
            out.append(f"[moo] reference: needs 7 values, got {len(cfg.moo_reference)}")
        if cfg.moo_upper is not None and len(cfg.moo_upper) != 7:
            out.append(f"[moo] upper: needs 7 values, got {len(cfg.moo_upper)}")
    if not cfg.corners:
        out.append("[run] corners: empty corner set")
    if cfg.max_fe < 1:
        out.append("[run] max_fe: must be at least 1")
    if not cfg.seeds:
        out.append("[run] seeds: need at least one seed")
    elif len(set(cfg.seeds)) != len(cfg.seeds):
        out.append("[run] seeds: duplicates")
    if cfg.workers < 1:
        out.append("[run] workers: must be at least 1")
    if cfg.backend.kind not in ("surrogate", "spice"):
        out.append(f"[backend] kind: {cfg.backend.kind!r} not one of surrogate, spice")
    if cfg.backend.timeout <= 0:
        out.append("[backend] timeout: must be positive")
    if cfg.backend.aliases is not None and not cfg.backend.aliases.is_file():
        out.append(f"[backend] aliases: no such file {cfg.backend.aliases}")
    if cfg.ranges not in ("experiment", "node"):
        out.append(f"[space] ranges: {cfg.ranges!r} not one of experiment, node")
    if cfg.circuit_class in CATALOGS:
        cat = CATALOGS[cfg.circuit_class]
        for c in cfg.constraints:
            if c.metric not in cat:
                out.append(f"[constraints] {c.metric}: not a {cfg.circuit_class} metric")
    if cfg.node in ("n180", "n130", "n22"):
        node = get_node(cfg.node)
        for c in cfg.corners:
            for why in node.corner_violations(c):
                out.append(f"[run] corners: {c.label}: {why}")
        if tb is not None:
            try:
                space_from_testbench(tb, node, space_overrides(cfg))
            except (ValueError, AmpSizerError) as exc:
                out.append(f"[space] {exc}")
    return out


def space_overrides(cfg: RunConfig) -> list[ParamDim]:
    """Preset ranges followed by the config's own overrides (later wins)."""
    merged: dict[tuple[str, Kind], ParamDim] = {}
    if cfg.ranges == "experiment":
        for d in experiment_overrides():
            merged[(d.name, d.kind)] = d
    for d in cfg.overrides:
        base = merged.get((d.name, d.kind))
        if base is not None and base.integral and d.kind is Kind.MULTIPLIER:
            d = replace(d, integral=True)
        merged[(d.name, d.kind)] = d
    return list(merged.values())


def with_overrides(cfg: RunConfig, seed: int | None = None, budget: int | None = None,
                   backend: str | None = None, workers: int | None = None,
                   outdir: str | Path | None = None) -> RunConfig:
    """Apply command-line overrides and re-validate."""
    kw = {}
    if seed is not None:
        kw["seed"] = seed
        kw["seeds"] = derive_seeds(seed, cfg.repetitions)
    if budget is not None:
        kw["max_fe"] = budget
    if backend is not None:
        kw["backend"] = replace(cfg.backend, kind=backend.lower())
    if workers is not None:
        kw["workers"] = workers
    if outdir is not None:
        kw["outdir"] = Path(outdir)
    if not kw:
        return cfg
    out = replace(cfg, **kw)
    problems = validate_config(out)
    if problems:
        raise ValidationError(problems)
    return out
