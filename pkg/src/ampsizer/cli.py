"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 backend unavailable,
4 runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import (
    AmpSizerError,
    BackendUnavailable,
    ConfigParseError,
    HashMismatch,
    ValidationError,
)

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_RUNTIME = 0, 2, 3, 4


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed; per-repetition seeds derive from it")
    p.add_argument("--budget", type=int, help="function evaluations per seed")
    p.add_argument("--backend", choices=("surrogate", "spice"))
    p.add_argument("--workers", type=int, help="parallel corner simulations")
    p.add_argument("--outdir", help="output directory")


def _config(args):
    from .harness.config import load_config, with_overrides
    cfg = load_config(args.config)
    return with_overrides(cfg, seed=args.seed, budget=args.budget, backend=args.backend,
                          workers=args.workers, outdir=args.outdir)


def _print_report(report) -> None:
    mean, std = report.aggregate()
    for s in report.seeds:
        extra = f" ({s.reason})" if s.reason else ""
        print(f"seed {s.seed}: {s.status}{extra}, value {s.value:.6g}, "
              f"feasible {int(s.feasible)}, {s.fe_count} FEs, {s.total_time:.1f} s")
    print(f"mean {mean['value']:.6g}  stddev {std['value']:.6g}  "
          f"over {len(report.completed)} completed seeds")


def cmd_run(args) -> int:
    from .harness.runner import run
    report = run(_config(args))
    _print_report(report)
    return EXIT_OK


def cmd_resume(args) -> int:
    from .harness.runner import resume
    report = resume(args.ledger, _config(args))
    _print_report(report)
    return EXIT_OK


def cmd_report(args) -> int:
    from .harness.report import emit_report, report_from_ledgers
    report = report_from_ledgers(args.ledgers)
    outdir = Path(args.outdir) if args.outdir else Path(args.ledgers[0]).parent
    for p in emit_report(report, outdir):
        print(p)
    _print_report(report)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _config(args)
    print(f"{args.config}: ok ({cfg.optimizer}, {cfg.objective}, {len(cfg.corners)} corners, "
          f"{cfg.max_fe} FEs x {cfg.repetitions} seeds, hash {cfg.config_hash()[:12]})")
    return EXIT_OK


def cmd_corners(args) -> int:
    from .space import corner_grid, get_node
    try:
        node = get_node(args.node)
    except ValueError as exc:
        raise ConfigParseError(str(exc)) from None
    for c in corner_grid(node):
        print(c.label)
    return EXIT_OK


def cmd_area(args) -> int:
    from .metrics import active_area, geometry_from_params
    from .testbench import parse_testbench
    try:
        tb = parse_testbench(Path(args.testbench).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigParseError(f"{args.testbench}: {exc.strerror}") from None
    area = active_area(geometry_from_params({p.name: p.value for p in tb.params}))
    print(f"{area!r} um^2")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ampsizer",
                                     description="Analog amplifier sizing experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every seed of a config")
    p.add_argument("config")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue an interrupted ledger")
    p.add_argument("ledger")
    p.add_argument("config")
    _add_overrides(p)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("report", help="rebuild summary.csv, curve.csv and curve.svg")
    p.add_argument("ledgers", nargs="+")
    p.add_argument("--outdir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    _add_overrides(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("corners", help="print the PVT corner grid of a node")
    p.add_argument("node")
    p.set_defaults(func=cmd_corners)

    p = sub.add_parser("area", help="print the active area of a testbench")
    p.add_argument("testbench")
    p.set_defaults(func=cmd_area)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigParseError, ValidationError, HashMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendUnavailable as exc:
        print(f"backend unavailable: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (AmpSizerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
