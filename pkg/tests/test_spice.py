import os
import shutil
import stat
import sys
import textwrap
import time

import pytest

from ampsizer.errors import BackendUnavailable
from ampsizer.metrics import Status
from ampsizer.sim import (
    AMP_MEASURES,
    SPICE_BIN_ENV,
    ExternalSpice,
    FailureStore,
    SpiceBackend,
    SpiceJob,
    load_alias_map,
    parse_measures,
    render_deck,
    run_spice,
    sweep,
)
from ampsizer.space import Process, PvtCorner, experiment_corners
from ampsizer.testbench import CornerLibrary, parse_testbench

from conftest import DATA, FIXTURES

STDOUT = (FIXTURES / "ngspice_amp_stdout.txt").read_text(encoding="utf-8")

# Stand-in simulator: echoes the fixture output, behaviour picked by FAKE_SPICE_MODE.
FAKE = textwrap.dedent(f"""\
    #!{sys.executable}
    import os, re, sys, time
    mode = os.environ.get("FAKE_SPICE_MODE", "ok")
    deck = open(sys.argv[-1]).read()
    if mode == "hang":
        time.sleep(30)
    if mode == "crash":
        print("fatal: singular matrix")
        sys.exit(1)
    out = open({str(FIXTURES / "ngspice_amp_stdout.txt")!r}).read()
    if mode == "partial":
        out = "\\n".join(l for l in out.splitlines() if not l.startswith("power"))
    print(out)
    m = re.search(r"supply_voltage\\s*=\\s*(\\S+)", deck)
    print("vdd_seen = " + m.group(1))
    print("temp_seen = " + re.search(r"^\\.temp\\s+(\\S+)", deck, re.M).group(1))
""")


@pytest.fixture
def fake_bin(tmp_path):
    p = tmp_path / "fakespice"
    p.write_text(FAKE, encoding="utf-8")
    p.chmod(p.stat().st_mode | stat.S_IXUSR)
    return p


@pytest.fixture
def settings(fake_bin, tmp_path):
    return ExternalSpice(binary=str(fake_bin), workdir=str(tmp_path / "work"), timeout=10.0)


CORNER = PvtCorner(Process.SS, 1.08, 125.0)


def test_parse_measures_fixture():
    mv = parse_measures(STDOUT, AMP_MEASURES)
    assert mv.status is Status.OK
    assert mv["gain_db"] == 111.1776           # later line wins
    assert mv["pm_deg"] == 51.23               # trailing "at=" clause ignored
    assert mv["psrr_db"] == -76.31
    assert set(AMP_MEASURES) <= set(mv.values)


def test_missing_measure_is_failure():
    text = "\n".join(l for l in STDOUT.splitlines() if not l.startswith("power"))
    mv = parse_measures(text, AMP_MEASURES)
    assert mv.status is Status.SIM_FAILED
    assert "power_mw" not in mv.values and mv.values["gain_db"] == 111.1776


def test_nan_measure_is_failure():
    mv = parse_measures("gain = nan\npm = 60\n", ["gain_db", "pm_deg"])
    assert mv.status is Status.SIM_FAILED
    assert "gain_db" not in mv.values


def test_custom_aliases(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("# raw = canonical\nADC_GAIN = gain_db\n\nphmarg = pm_deg  # trailing\n")
    table = load_alias_map(p)
    assert table == {"adc_gain": "gain_db", "phmarg": "pm_deg"}
    mv = parse_measures("adc_gain = 80\nphmarg = 60\n", ["gain_db", "pm_deg"], table)
    assert mv.ok and mv.values == {"gain_db": 80.0, "pm_deg": 60.0}


def test_shipped_aliases_cover_amp_measures():
    table = load_alias_map(DATA / "ngspice_aliases.txt")
    assert set(AMP_MEASURES) <= set(table.values())


def test_bad_alias_line(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("gain gain_db\n")
    with pytest.raises(ValueError, match=":1:"):
        load_alias_map(p)


def test_render_deck_edits_only_targets(reference_tb, reference_text):
    point = {p.name: p.value for p in reference_tb.params}
    point["CAPACITOR_0"] = 47e-12
    text = render_deck(reference_tb, point, CORNER)
    tb = parse_testbench(text)
    assert tb.supply_voltage == 1.08 and tb.temperature == 125.0
    assert tb.corner_include.endswith("/ss.spice")
    assert {p.name: p.value for p in tb.params}["CAPACITOR_0"] == pytest.approx(47e-12)
    changed = [(a, b) for a, b in zip(reference_text.splitlines(), text.splitlines()) if a != b]
    assert len(changed) == 4     # corner include, supply, temperature, one parameter line


def test_render_deck_custom_library(reference_tb):
    lib = CornerLibrary.from_template("/pdk/{PROCESS}.lib")
    text = render_deck(reference_tb, {}, CORNER, lib)
    assert parse_testbench(text).corner_include == "/pdk/SS.lib"


def test_job_validation():
    with pytest.raises(ValueError):
        SpiceJob("  \n", ["gain_db"])
    with pytest.raises(ValueError):
        SpiceJob("x", ["gain_db", "gain_db"])
    a, b = SpiceJob("x", []), SpiceJob("x", [])
    assert a.job_id != b.job_id


def test_settings_validation():
    with pytest.raises(ValueError):
        ExternalSpice(binary="")
    with pytest.raises(ValueError):
        ExternalSpice(timeout=0)


def test_run_ok(settings, reference_tb, tmp_path):
    deck = render_deck(reference_tb, {}, CORNER)
    mv = run_spice(SpiceJob(deck, AMP_MEASURES, CORNER.label), settings)
    assert mv.status is Status.OK
    assert mv["vdd_seen"] == 1.08 and mv["temp_seen"] == 125.0
    assert list((tmp_path / "work").glob("job*")) == []       # cleaned up on success


def test_nonzero_exit_keeps_artifacts(settings, reference_tb, tmp_path, monkeypatch):
    monkeypatch.setenv("FAKE_SPICE_MODE", "crash")
    store = FailureStore(tmp_path / "failures", cap=5)
    mv = run_spice(SpiceJob(render_deck(reference_tb, {}, CORNER), AMP_MEASURES), settings, store)
    assert mv.status is Status.SIM_FAILED and mv.values == {}
    kept = list((tmp_path / "failures").iterdir())
    assert len(kept) == 1
    assert (kept[0] / "deck.sp").exists()
    assert "singular" in (kept[0] / "stdout.txt").read_text()


def test_missing_measure_from_simulator(settings, reference_tb, monkeypatch, tmp_path):
    monkeypatch.setenv("FAKE_SPICE_MODE", "partial")
    store = FailureStore(tmp_path / "failures")
    mv = run_spice(SpiceJob(render_deck(reference_tb, {}, CORNER), AMP_MEASURES), settings, store)
    assert mv.status is Status.SIM_FAILED


def test_timeout_kills_process(fake_bin, reference_tb, monkeypatch, tmp_path):
    monkeypatch.setenv("FAKE_SPICE_MODE", "hang")
    s = ExternalSpice(binary=str(fake_bin), workdir=str(tmp_path / "work"), timeout=0.5)
    t0 = time.perf_counter()
    mv = run_spice(SpiceJob(render_deck(reference_tb, {}, CORNER), AMP_MEASURES), s,
                   FailureStore(tmp_path / "failures"))
    assert mv.status is Status.TIMEOUT
    assert time.perf_counter() - t0 < 10


def test_missing_binary():
    s = ExternalSpice(binary="/nonexistent/ngspice-xyz")
    with pytest.raises(BackendUnavailable):
        s.resolve_binary()
    with pytest.raises(BackendUnavailable):
        SpiceBackend(s).check()


def test_binary_from_environment(fake_bin, monkeypatch):
    monkeypatch.setenv(SPICE_BIN_ENV, str(fake_bin))
    assert ExternalSpice.from_env(binary="ngspice").binary == str(fake_bin)
    monkeypatch.delenv(SPICE_BIN_ENV)
    assert ExternalSpice.from_env().binary == "ngspice"


def test_failure_store_cap(tmp_path):
    store = FailureStore(tmp_path / "keep", cap=3)
    for k in range(6):
        d = tmp_path / f"job{k:03d}"
        d.mkdir()
        (d / "deck.sp").write_text(str(k))
        store.keep(d)
        time.sleep(0.01)
    assert sorted(p.name for p in (tmp_path / "keep").iterdir()) == ["job003", "job004", "job005"]


def test_backend_adds_derived_metrics(settings, loaded_tb):
    point = {p.name: p.value for p in loaded_tb.params}
    be = SpiceBackend(settings)
    res = sweep(be, loaded_tb, point, experiment_corners(), workers=2)
    assert res.ok and res.corner_sims == 4
    mv = res.vectors[0]
    assert mv["area_um2"] == pytest.approx(96126.05)
    assert mv["foms"] == pytest.approx(3.05214 * 100 / 0.1579)
    assert [v["vdd_seen"] for v in res.vectors] == [c.voltage for c in experiment_corners()]


NGSPICE = os.environ.get(SPICE_BIN_ENV) or shutil.which("ngspice")
ASSETS = os.environ.get("AMPSIZER_SKY130_DIR")


@pytest.mark.skipif(not (NGSPICE and ASSETS),
                    reason="needs ngspice and AMPSIZER_SKY130_DIR with the sky130 testbench assets")
def test_ngspice_integration(reference_tb):
    # includes are made absolute because each job runs in its own scratch directory
    from pathlib import Path
    from ampsizer.testbench import DEFAULT_CORNER_TEMPLATE, set_netlist
    root = Path(ASSETS).resolve()
    tb = set_netlist(reference_tb, str(root / reference_tb.netlist_include.lstrip("./")))
    lib = CornerLibrary.from_template(str(root / DEFAULT_CORNER_TEMPLATE.lstrip("./")))
    s = ExternalSpice(binary=NGSPICE, timeout=300.0,
                      aliases=load_alias_map(DATA / "ngspice_aliases.txt"))
    point = {p.name: p.value for p in tb.params}
    corner = PvtCorner(Process.TT, 1.8, 27.0)
    mv = run_spice(SpiceJob(render_deck(tb, point, corner, lib), AMP_MEASURES), s)
    assert mv.status is Status.OK
    assert set(AMP_MEASURES) <= set(mv.values)
