import math

import pytest
from hypothesis import given, strategies as st

from ampsizer.errors import MalformedLiteral
from ampsizer.units import SUFFIX_EXPONENTS, engineering_suffix, format_si, parse_si_number


@pytest.mark.parametrize("literal, value", [
    ("63p", 63e-12),
    ("25p", 25e-12),
    ("5u", 5e-6),
    ("0.5k", 500.0),
    ("2meg", 2e6),
    ("2MEG", 2e6),
    ("1.5K", 1500.0),
    ("10f", 10e-15),
    ("3n", 3e-9),
    ("7m", 7e-3),
    ("1g", 1e9),
    ("0.411", 0.411),
    ("1e-3", 1e-3),
    ("-1.08", -1.08),
    (".5", 0.5),
    ("1.2e1k", 12000.0),
])
def test_parse_si_number_oracle(literal, value):
    assert parse_si_number(literal) == value


@pytest.mark.parametrize("bad", ["", "abc", "1x", "p", "1..2", "1 p", "1e"])
def test_parse_rejects_malformed(bad):
    with pytest.raises(MalformedLiteral):
        parse_si_number(bad)


def test_decimal_decoding_avoids_double_rounding():
    # 63 * 1e-12 as floats is not the nearest double to 63e-12
    assert parse_si_number("63p") == float("63e-12")


@pytest.mark.parametrize("value, text", [
    (63e-12, "63p"), (5e-6, "5u"), (500.0, "500"), (2e6, "2meg"), (0.0, "0"),
])
def test_format_si_engineering(value, text):
    assert format_si(value) == text


def test_format_keeps_suffix_case():
    assert format_si(1500.0, "K") == "1.5K"
    assert format_si(1500.0, "") == "1500"


def test_format_rejects_nonfinite_and_unknown_suffix():
    with pytest.raises(MalformedLiteral):
        format_si(math.inf)
    with pytest.raises(MalformedLiteral):
        format_si(1.0, "x")


def test_engineering_suffix_ranges():
    assert engineering_suffix(1e-13) == "f"
    assert engineering_suffix(999e-12) == "p"
    assert engineering_suffix(1e-9) == "n"
    assert engineering_suffix(1.0) == ""


finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e15, max_value=1e15)


@given(finite, st.sampled_from(sorted(SUFFIX_EXPONENTS) + ["", None]))
def test_format_parse_roundtrip(value, suffix):
    assert parse_si_number(format_si(value, suffix)) == value
