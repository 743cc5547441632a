"""Quarter stamps of the form ``YYYYQq``."""
from __future__ import annotations

import re

_QSTAMP = re.compile(r"^\s*(\d{4})\s*[Qq:]\s*([1-4])\s*$")
_MDY = re.compile(r"^\s*(\d{1,2})/(\d{1,2})/(\d{2,4})\s*$")
_ISO = re.compile(r"^\s*(\d{4})-(\d{1,2})-(\d{1,2})\s*$")


def parse_quarter(text) -> tuple[int, int]:
    """Parse ``1969Q1``, FRED-style ``1/1/1969`` or ISO ``1969-01-01`` into (year, quarter)."""
    s = str(text)
    m = _QSTAMP.match(s)
    if m:
        return int(m.group(1)), int(m.group(2))
    m = _MDY.match(s)
    if m:
        month, year = int(m.group(1)), int(m.group(3))
        if year < 100:
            year += 1900 if year >= 50 else 2000
        return year, _month_to_quarter(month, s)
    m = _ISO.match(s)
    if m:
        return int(m.group(1)), _month_to_quarter(int(m.group(2)), s)
    raise ValueError(f"unparseable quarter date {text!r}")


def _month_to_quarter(month: int, raw: str) -> int:
    if not 1 <= month <= 12:
        raise ValueError(f"invalid month in date {raw!r}")
    return (month - 1) // 3 + 1


def format_quarter(yq: tuple[int, int]) -> str:
    return f"{yq[0]}Q{yq[1]}"


def normalize_quarter(text) -> str:
    return format_quarter(parse_quarter(text))


def quarter_ordinal(text) -> int:
    y, q = parse_quarter(text)
    return 4 * y + (q - 1)


def from_ordinal(k: int) -> str:
    y, q = divmod(int(k), 4)
    return f"{y}Q{q + 1}"


def shift_quarter(text, k: int) -> str:
    return from_ordinal(quarter_ordinal(text) + k)


def quarter_range(start, end) -> list[str]:
    a, b = quarter_ordinal(start), quarter_ordinal(end)
    return [from_ordinal(k) for k in range(a, b + 1)]
