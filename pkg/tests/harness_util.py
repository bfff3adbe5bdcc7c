"""Helpers for writing small run configs in a temporary directory."""
import shutil
import textwrap
from pathlib import Path

from conftest import DATA


def write_config(tmp: Path, body: str, name: str = "run.ini", copy_inputs: bool = True) -> Path:
    """Write ``body`` next to copies of the shipped testbench and baseline."""
    tmp.mkdir(parents=True, exist_ok=True)
    if copy_inputs:
        for f in ("nmcnr_sky130.tb", "nmcnr_baseline.txt"):
            if not (tmp / f).exists():
                shutil.copy(DATA / f, tmp / f)
    p = tmp / name
    p.write_text(textwrap.dedent(body).lstrip(), encoding="utf-8")
    return p


SOO_RUN = """
[run]
testbench = nmcnr_sky130.tb
corners = experiment
load_cap = 100p
objective = soo
max_fe = {max_fe}
repetitions = {reps}
seed = {seed}
outdir = {outdir}
record_timing = {timing}

[optimizer]
kind = {optimizer}
{params}
"""

MOO_RUN = """
[run]
testbench = nmcnr_sky130.tb
corners = experiment
load_cap = 100p
objective = moo
baseline = nmcnr_baseline.txt
max_fe = {max_fe}
repetitions = {reps}
outdir = {outdir}
record_timing = {timing}

[optimizer]
kind = nsga2
population = {population}
hv_samples = 4000

[moo]
reference = baseline
"""


def soo_config(tmp: Path, optimizer="random", max_fe=30, reps=3, seed=0, outdir=None,
               timing=False, params="", name="run.ini") -> Path:
    outdir = outdir or (tmp / "out")
    return write_config(tmp, SOO_RUN.format(max_fe=max_fe, reps=reps, seed=seed, outdir=outdir,
                                            timing=str(timing).lower(), optimizer=optimizer,
                                            params=params), name)


def moo_config(tmp: Path, max_fe=40, reps=2, population=20, outdir=None, timing=False) -> Path:
    outdir = outdir or (tmp / "out")
    return write_config(tmp, MOO_RUN.format(max_fe=max_fe, reps=reps, outdir=outdir,
                                            timing=str(timing).lower(), population=population))


def read_all(outdir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(Path(outdir).iterdir()) if p.is_file()}
