import math

import pytest

from ampsizer.errors import CorruptLedger, HashMismatch
from ampsizer.harness import LedgerHeader, LedgerWriter, read_records, scan_ledger
from ampsizer.harness.ledger import (
    _floats,
    _open,
    _seal,
    check_hash,
    entry_line,
    parse_entry,
    read_entries,
    read_header,
)
from ampsizer.metrics import soo_constraints
from ampsizer.opt import SOO, DeParams, de_optimize, random_search

HEADER = LedgerHeader("ab" * 32, 123, "random", "soo", 10, "ampsizer-0.1.0+nmc-v1")


@pytest.fixture
def entries(make_recorder):
    rec = make_recorder(10)
    random_search(rec, 2)
    return rec.log


def write(path, entries, end=True):
    with LedgerWriter(path, HEADER) as w:
        for e in entries:
            w.append(e)
        if end:
            w.finish("complete")


def test_header_round_trip(tmp_path):
    h = LedgerHeader("f" * 64, 7, "nsga2", "moo", 1000, "v", "2026-01-01T00:00:00Z", 40,
                     (0.5, -1e300, 3.0), (1.0, 2.0, 4.0), 1000, 3)
    p = tmp_path / "l"
    with LedgerWriter(p, h):
        pass
    assert read_header(p) == h
    assert scan_ledger(p).header == h


def test_entry_round_trip_is_exact(entries):
    for e in entries:
        line = entry_line(e)
        back = parse_entry(_open(line.rstrip("\n")), soo_constraints(), SOO)
        assert back == e


def test_write_and_scan(tmp_path, entries):
    p = tmp_path / "seed.ledger"
    write(p, entries)
    scan, recs = read_records(p)
    assert scan.status == "complete" and not scan.truncated
    assert [r.fe for r in recs] == list(range(1, 11))
    assert [r.objective for r in recs] == [e.objective for e in entries]
    assert read_entries(scan, soo_constraints(), SOO) == entries


def test_failed_run_keeps_reason(tmp_path, entries):
    p = tmp_path / "l"
    with LedgerWriter(p, HEADER) as w:
        w.append(entries[0])
        w.finish("failed", "ValueError: bad thing = 3%")
    scan = scan_ledger(p)
    assert scan.status == "failed" and scan.reason == "ValueError: bad thing = 3%"


def test_partial_final_line_dropped(tmp_path, entries, caplog):
    p = tmp_path / "l"
    write(p, entries[:6], end=False)
    intact = p.stat().st_size
    with open(p, "a") as fh:
        fh.write(entry_line(entries[6])[:40])
    scan = scan_ledger(p)
    assert scan.truncated and len(scan.rows) == 6 and scan.valid_bytes == intact
    assert scan.status == "partial"
    assert "dropping damaged final record" in caplog.text


def test_resume_writer_truncates(tmp_path, entries):
    p = tmp_path / "l"
    write(p, entries[:4], end=False)
    with open(p, "a") as fh:
        fh.write("garbage without newline")
    scan = scan_ledger(p)
    with LedgerWriter(p, truncate_at=scan.valid_bytes) as w:
        for e in entries[4:]:
            w.append(e)
        w.finish("complete")
    q = tmp_path / "q"
    write(q, entries)
    assert p.read_bytes() == q.read_bytes()


def test_damage_in_the_middle_is_fatal(tmp_path, entries):
    p = tmp_path / "l"
    write(p, entries)
    lines = p.read_text().splitlines(keepends=True)
    lines[3] = lines[3].replace("fe=3", "fe=4", 1)
    p.write_text("".join(lines))
    with pytest.raises(CorruptLedger, match="line 4"):
        scan_ledger(p)


def test_fe_gap_is_fatal(tmp_path, entries):
    p = tmp_path / "l"
    with LedgerWriter(p, HEADER) as w:
        w.append(entries[0])
        w.append(entries[2])
    with pytest.raises(CorruptLedger, match="expected 2"):
        scan_ledger(p)


def test_lines_after_end_are_fatal(tmp_path, entries):
    p = tmp_path / "l"
    write(p, entries[:2])
    with LedgerWriter(p) as w:
        w.append(entries[2])
    with pytest.raises(CorruptLedger, match="follows the closing record"):
        scan_ledger(p)


def test_bad_header(tmp_path):
    p = tmp_path / "l"
    p.write_text("hello world\n")
    with pytest.raises(CorruptLedger):
        scan_ledger(p)
    with pytest.raises(CorruptLedger):
        read_header(p)
    (tmp_path / "e").write_text("")
    with pytest.raises(CorruptLedger):
        scan_ledger(tmp_path / "e")


def test_tampered_outcome_detected(tmp_path, make_recorder):
    rec = make_recorder(200)
    de_optimize(rec, 0, DeParams(population=10))
    e = next(x for x in rec.log if x.feasible)
    fields = _open(entry_line(e).rstrip("\n"))
    fields["obj"] = repr(e.objective + 1.0)
    body = " ".join(f"{k}={v}" for k, v in fields.items() if k != "crc")
    with pytest.raises(CorruptLedger, match="disagrees"):
        parse_entry(_open(_seal(body).rstrip("\n")), soo_constraints(), SOO)


def test_nan_and_inf_survive():
    assert _floats("-inf,nan,1.5")[0] == -math.inf and math.isnan(_floats("nan")[0])
    assert _floats("-") == ()


def test_hash_check():
    check_hash(HEADER, HEADER.config_hash)
    with pytest.raises(HashMismatch):
        check_hash(HEADER, "0" * 64)


def test_values_with_spaces_rejected():
    with pytest.raises(ValueError):
        LedgerHeader("h", 1, "random search", "soo", 1, "v").line()
