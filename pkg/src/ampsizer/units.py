"""SPICE-style numeric literals with engineering suffixes.

Decoding goes through :mod:`decimal` so that ``"63p"`` becomes the float
nearest to 63e-12, not the product of two rounded floats. Encoding is the
exact inverse: ``parse_si_number(format_si(v, s)) == v`` for every finite
``v`` and suffix ``s``.
"""
from __future__ import annotations

import math
import re
from decimal import Decimal

from .errors import MalformedLiteral

SUFFIX_EXPONENTS = {
    "f": -15,
    "p": -12,
    "n": -9,
    "u": -6,
    "m": -3,
    "k": 3,
    "meg": 6,
    "g": 9,
}
_BY_EXPONENT = {exp: sfx for sfx, exp in SUFFIX_EXPONENTS.items()}

# "meg" must be tried before "m".
_LITERAL_RE = re.compile(
    r"(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<sfx>meg|[fpnumkg])?",
    re.IGNORECASE,
)


def split_literal(literal: str) -> tuple[str, str]:
    """Split a literal into its decimal part and its suffix as written."""
    m = _LITERAL_RE.fullmatch(literal.strip()) if literal else None
    if m is None:
        raise MalformedLiteral(f"not a numeric literal: {literal!r}")
    return m.group("num"), m.group("sfx") or ""


def parse_si_number(literal: str) -> float:
    """Decode ``<decimal>[suffix]`` into a float.

    >>> parse_si_number("63p")
    6.3e-11
    >>> parse_si_number("2meg")
    2000000.0
    """
    num, sfx = split_literal(literal)
    exp = SUFFIX_EXPONENTS[sfx.lower()] if sfx else 0
    return float(Decimal(num).scaleb(exp))


def _plain(d: Decimal) -> str:
    d = d.normalize()
    if d == 0:
        return "-0" if d.is_signed() else "0"
    if -9 <= d.adjusted() <= 20:
        return format(d, "f")
    return format(d, "e")


def engineering_suffix(value: float) -> str:
    """Suffix that puts the mantissa of ``value`` in [1, 1000)."""
    if value == 0:
        return ""
    exp3 = 3 * (Decimal(repr(float(value))).adjusted() // 3)
    exp3 = max(-15, min(9, exp3))
    return _BY_EXPONENT.get(exp3, "")


def format_si(value: float, suffix: str | None = None) -> str:
    """Shortest exact literal for ``value`` using ``suffix``.

    ``suffix=None`` picks the engineering suffix; ``""`` forces a bare number.
    The suffix is emitted exactly as given, so ``"K"`` stays upper case.
    """
    value = float(value)
    if not math.isfinite(value):
        raise MalformedLiteral(f"cannot format non-finite value {value!r}")
    if suffix is None:
        suffix = engineering_suffix(value)
    key = suffix.lower()
    if key and key not in SUFFIX_EXPONENTS:
        raise MalformedLiteral(f"unknown suffix {suffix!r}")
    exp = SUFFIX_EXPONENTS[key] if key else 0
    mantissa = Decimal(repr(value)).scaleb(-exp)
    return _plain(mantissa) + suffix
