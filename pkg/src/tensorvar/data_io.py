"""Reading FRED-QD style quarterly files, stationarity transforms and standardization."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .dates import normalize_quarter, quarter_ordinal
from .errors import ConfigError, ConstantSeriesError, DataError, MissingColumnError
from .var_data import SeriesPanel

# tcode -> number of observations lost
TCODES = {1: 0, 2: 1, 5: 1, 6: 2}
_METADATA_ROWS = {"factors", "transform", "tcode", "tcodes"}


@dataclass(frozen=True)
class VariableSpec:
    """A column to read and the transformation to apply to it.

    ``source`` is the column header in the data file, ``name`` the label used
    downstream.
    """

    name: str
    tcode: int
    source: str = ""
    description: str = ""

    def __post_init__(self):
        if self.tcode not in TCODES:
            raise ConfigError(f"tcode for {self.name!r} must be one of {sorted(TCODES)}, got {self.tcode!r}")
        if not self.source:
            object.__setattr__(self, "source", self.name)


def bundled_spec_path() -> Path:
    return Path(str(resources.files("tensorvar") / "data" / "fredqd_40.json"))


def _read_structured(path: Path):
    text = Path(path).read_text(encoding="utf-8")
    if Path(path).suffix.lower() == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def parse_variable_specs(raw) -> list[VariableSpec]:
    """Build specs from a list of mappings or ``{"variables": [...]}``."""
    if isinstance(raw, dict):
        raw = raw.get("variables")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("variable spec must be a non-empty list under 'variables'")
    specs = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "name" not in item or "tcode" not in item:
            raise ConfigError(f"variables[{i}]: need 'name' and 'tcode'")
        unknown = set(item) - {"name", "tcode", "source", "description"}
        if unknown:
            raise ConfigError(f"variables[{i}]: unknown keys {sorted(unknown)}")
        tcode = item["tcode"]
        if isinstance(tcode, bool) or not isinstance(tcode, int) or tcode not in TCODES:
            raise ConfigError(
                f"variables[{i}].tcode: {tcode!r} for {item['name']!r} is not one of {sorted(TCODES)}"
            )
        specs.append(
            VariableSpec(
                name=str(item["name"]),
                tcode=tcode,
                source=str(item.get("source") or item["name"]),
                description=str(item.get("description", "")),
            )
        )
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate variable names in spec")
    return specs


def load_variable_specs(path=None) -> list[VariableSpec]:
    """Read a variable list (JSON or YAML); the bundled 40-variable list by default."""
    return parse_variable_specs(_read_structured(Path(path) if path else bundled_spec_path()))


def _parse_float(cell: str, row: int, col: str, path) -> float:
    cell = cell.strip()
    if cell == "" or cell.lower() in {"na", "nan", "."}:
        return np.nan
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"{path}, line {row}, column {col!r}: cannot parse {cell!r} as a number") from None


def load_csv(path, specs: Sequence[VariableSpec], date_range=None) -> SeriesPanel:
    """Raw (untransformed) panel for ``specs`` restricted to ``date_range``.

    The first column holds dates. Rows before the first dated row whose first
    cell is a FRED-QD metadata label (``factors``, ``transform``) are skipped.
    ``date_range`` is an inclusive ``(start, end)`` pair; either may be None.
    Within the range every requested value must be present.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file {path} does not exist")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    cols = []
    for s in specs:
        if s.source not in header:
            raise MissingColumnError(s.source, path)
        cols.append(header.index(s.source))

    lo = quarter_ordinal(date_range[0]) if date_range and date_range[0] else None
    hi = quarter_ordinal(date_range[1]) if date_range and date_range[1] else None
    dates, values, lines = [], [], []
    seen_data = False
    for k, row in enumerate(rows[1:], start=2):
        if not row or not any(c.strip() for c in row):
            continue
        first = row[0].strip()
        if not seen_data and first.lower() in _METADATA_ROWS:
            continue
        try:
            stamp = normalize_quarter(first)
        except ValueError:
            raise DataError(f"{path}, line {k}: unparseable date {first!r}") from None
        seen_data = True
        o = quarter_ordinal(stamp)
        if (lo is not None and o < lo) or (hi is not None and o > hi):
            continue
        vals = [
            _parse_float(row[c] if c < len(row) else "", k, header[c], path) for c in cols
        ]
        dates.append(stamp)
        values.append(vals)
        lines.append(k)
    if not dates:
        raise DataError(f"{path}: no rows in date range {date_range}")
    for a in range(1, len(dates)):
        if quarter_ordinal(dates[a]) != quarter_ordinal(dates[a - 1]) + 1:
            raise DataError(f"{path}, line {lines[a]}: gap in dates ({dates[a - 1]} -> {dates[a]})")
    arr = np.array(values, dtype=float)
    bad = np.argwhere(np.isnan(arr))
    if bad.size:
        r, c = bad[0]
        raise DataError(
            f"{path}, line {lines[r]} ({dates[r]}), column {specs[c].source!r}: missing value in date range"
        )
    return SeriesPanel(arr, tuple(s.name for s in specs), tuple(dates))


def transform(x, tcode: int) -> np.ndarray:
    """Apply a transformation code; output is shorter by 0, 1, 1, 2 for tcodes 1, 2, 5, 6."""
    x = np.asarray(x, dtype=float)
    if tcode not in TCODES:
        raise ValueError(f"unsupported tcode {tcode!r}")
    if tcode == 1:
        return x.copy()
    if tcode == 2:
        return np.diff(x)
    bad = np.flatnonzero(~(x > 0))
    if bad.size:
        raise DataError(f"log transform (tcode {tcode}) needs positive values; x[{bad[0]}] = {x[bad[0]]}")
    lx = np.log(x)
    return np.diff(lx) if tcode == 5 else np.diff(lx, n=2)


def transform_panel(panel: SeriesPanel, specs: Sequence[VariableSpec]) -> SeriesPanel:
    """Transform every column and trim all series to the latest common start."""
    by_name = {s.name: s for s in specs}
    lost = max(TCODES[by_name[nm].tcode] for nm in panel.names)
    if len(panel) <= lost:
        raise DataError(f"panel of {len(panel)} rows is too short for the transforms")
    cols = []
    for j, nm in enumerate(panel.names):
        d = TCODES[by_name[nm].tcode]
        try:
            tx = transform(panel.values[:, j], by_name[nm].tcode)
        except DataError as exc:
            raise DataError(f"column {nm!r}: {exc}") from None
        cols.append(tx[lost - d :])
    return SeriesPanel(np.column_stack(cols), panel.names, panel.dates[lost:])


@dataclass(frozen=True)
class Standardizer:
    """Per-series location/scale; ``apply`` and ``inverse`` are exact inverses up to rounding."""

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, values, names: Optional[Sequence[str]] = None, ddof: int = 1) -> "Standardizer":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        mean = values.mean(axis=0)
        sd = values.std(axis=0, ddof=ddof) if values.shape[0] > ddof else np.zeros(values.shape[1])
        zero = np.flatnonzero(~(sd > 0))
        if zero.size:
            label = names[zero[0]] if names is not None else f"column {zero[0]}"
            raise ConstantSeriesError(f"series {label!r} is constant on the standardization window")
        return cls(mean, sd)

    def apply(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.sd

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.sd + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}


def standardize(panel: SeriesPanel, stats_window=None) -> tuple[SeriesPanel, Standardizer]:
    """Standardize the whole panel with mean/sd computed on ``stats_window`` (inclusive dates)."""
    ref = panel if stats_window is None else panel.slice(*stats_window)
    st = Standardizer.fit(ref.values, ref.names)
    return panel.with_values(st.apply(panel.values)), st


def destandardize(panel: SeriesPanel, st: Standardizer) -> SeriesPanel:
    return panel.with_values(st.inverse(panel.values))


def load_panel(path, specs: Sequence[VariableSpec], date_range=None) -> SeriesPanel:
    """Read and transform. ``date_range`` refers to the raw file, so the
    transformed panel starts up to two quarters later."""
    return transform_panel(load_csv(path, specs, date_range), specs)
