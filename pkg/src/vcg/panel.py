"""Price-panel ingestion and preprocessing.

Turns raw per-commodity price CSVs into an aligned, emission-normalized,
inflation-adjusted panel ready for modeling, and provides the forecast
post-processing clamp used when log-scale forecasts are mapped back to
price levels.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ValidationError

DEFAULT_CAP = 1e5
DEFAULT_MAX_GAP = 5


@dataclass
class RawSeries:
    """A single dated price series as read from disk."""

    name: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    values: np.ndarray  # float, finite

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.values = np.asarray(self.values, dtype=float)
        if self.dates.shape != self.values.shape or self.dates.ndim != 1:
            raise ValidationError(f"series {self.name!r}: dates and values must be 1-d and equal length")
        if len(self.dates) < 2:
            raise ValidationError(f"series {self.name!r}: need at least 2 observations")
        if not np.all(np.diff(self.dates).astype(int) > 0):
            dup = self.dates[np.where(np.diff(self.dates).astype(int) <= 0)[0][0] + 1]
            raise ValidationError(f"series {self.name!r}: dates not strictly increasing at {dup}")
        if not np.all(np.isfinite(self.values)):
            bad = int(np.where(~np.isfinite(self.values))[0][0])
            raise ValidationError(f"series {self.name!r}: non-finite value at row {bad}")

    def __len__(self):
        return len(self.dates)


@dataclass
class Panel:
    """Aligned T x K observation matrix with a shared date index."""

    dates: np.ndarray
    values: np.ndarray
    labels: list[str]
    transform_tag: str = "levels"

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.values = np.asarray(self.values, dtype=float)
        self.labels = list(self.labels)
        if self.values.ndim != 2:
            raise ValidationError("panel values must be 2-d (T x K)")
        T, K = self.values.shape
        if T < 2:
            raise ValidationError("panel needs at least 2 rows")
        if K < 1:
            raise ValidationError("panel needs at least 1 column")
        if len(self.dates) != T or len(self.labels) != K:
            raise ValidationError("panel dates/labels do not match value shape")
        if self.transform_tag not in ("levels", "log"):
            raise ValidationError(f"unknown transform_tag {self.transform_tag!r}")
        if not np.all(np.isfinite(self.values)):
            t, k = map(int, np.argwhere(~np.isfinite(self.values))[0])
            raise ValidationError(f"panel has a non-finite cell at ({self.dates[t]}, {self.labels[k]})")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def window(self, start: int, stop: int) -> "Panel":
        """Row slice [start, stop) as a new panel."""
        return Panel(self.dates[start:stop], self.values[start:stop], self.labels, self.transform_tag)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=pd.DatetimeIndex(self.dates, name="date"), columns=self.labels)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, float_format="%.17g")

    @classmethod
    def from_csv(cls, path, transform_tag: str = "levels") -> "Panel":
        df = pd.read_csv(path, index_col=0, parse_dates=True)
        return cls(df.index.values.astype("datetime64[D]"), df.values, list(df.columns), transform_tag)


@dataclass
class NormalizationConfig:
    """Emission factors, inflation index and optional FX conversion."""

    emission_factors: dict[str, float]
    hicp: dict[str, float]  # "YYYY-MM" -> index value, base 2015 = 100
    fx: dict[str, dict[str, float]] = field(default_factory=dict)  # label -> {"YYYY-MM-DD": rate}

    def __post_init__(self):
        for name, f in self.emission_factors.items():
            if not (np.isfinite(f) and f > 0):
                raise ValidationError(f"emission factor for {name!r} must be positive")
        for month, v in self.hicp.items():
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"hicp value for {month} must be positive")


def ingest_csv(path, schema: dict[str, str] | None = None) -> list[RawSeries]:
    """Read a CSV into one RawSeries per value column.

    ``schema`` maps roles to column names: ``{"date": "date", "values":
    ["eua", "gas", ...]}``. Without a schema the first column is the date and
    every remaining column is a value series. Rows whose date fails to parse
    are rejected with their (1-based, header-exclusive) row numbers.
    """
    df = pd.read_csv(path, dtype=str, skip_blank_lines=True)
    if df.shape[1] < 2:
        raise ValidationError(f"{path}: need a date column and at least one value column")
    if schema is None:
        date_col = df.columns[0]
        value_cols = list(df.columns[1:])
    else:
        date_col = schema["date"]
        value_cols = list(schema.get("values") or [c for c in df.columns if c != date_col])
    for col in [date_col, *value_cols]:
        if col not in df.columns:
            raise ValidationError(f"{path}: column {col!r} not present")

    dates = pd.to_datetime(df[date_col], errors="coerce", format="ISO8601")
    bad = np.where(dates.isna())[0]
    if len(bad):
        rows = ", ".join(str(i + 1) for i in bad[:10])
        raise ValidationError(f"{path}: unparseable dates at rows {rows}")
    if dates.duplicated().any():
        dup = dates[dates.duplicated()].iloc[0].date()
        raise ValidationError(f"{path}: duplicate date {dup}")

    order = np.argsort(dates.values)
    out = []
    for col in value_cols:
        raw = df[col].iloc[order]
        keep = raw.notna() & (raw.str.strip() != "")
        vals = pd.to_numeric(raw[keep], errors="coerce")
        if vals.isna().any():
            row = int(vals.index[vals.isna()][0]) + 1
            raise ValidationError(f"{path}: non-numeric cell in column {col!r} at row {row}")
        out.append(RawSeries(col, dates.values[order][keep.values].astype("datetime64[D]"), vals.values))
    return out


def align_and_join(series: list[RawSeries], policy: str = "inner", max_gap: int = DEFAULT_MAX_GAP) -> Panel:
    """Join series on a common date index.

    ``inner`` keeps the intersection of the date sets. ``forward-fill`` uses
    the union (from the latest first observation onward) and carries the last
    value across gaps of at most ``max_gap`` consecutive index dates.
    """
    if len(series) < 2:
        raise ValidationError("need at least 2 series to build a panel")
    if policy not in ("inner", "forward-fill"):
        raise ValidationError(f"unknown join policy {policy!r}")

    frames = [pd.Series(s.values, index=pd.DatetimeIndex(s.dates), name=s.name) for s in series]
    df = pd.concat(frames, axis=1, join="inner" if policy == "inner" else "outer")
    if policy == "inner":
        if df.empty:
            raise ValidationError("date intersection of the input series is empty")
    else:
        start = max(s.dates[0] for s in series)
        df = df.loc[pd.Timestamp(start):]
        for name in df.columns:
            col = df[name]
            missing = col.isna()
            if missing.any():
                runs = missing.astype(int).groupby((~missing).cumsum()).sum()
                worst = int(runs.max())
                if worst > max_gap:
                    raise ValidationError(
                        f"series {name!r}: gap of {worst} dates exceeds max_gap={max_gap} under forward-fill"
                    )
            df[name] = col.ffill()
    return Panel(df.index.values.astype("datetime64[D]"), df.values, list(df.columns))


def _month_key(date: np.datetime64) -> str:
    return str(np.datetime64(date, "M"))


def normalize(panel: Panel, cfg: NormalizationConfig) -> Panel:
    """Convert prices to real, per-tonne-CO2 terms.

    Each cell becomes ``(price / emission_factor) / (hicp_month / 100)``;
    when an FX series is configured for a label the currency conversion is
    applied first (price times rate).
    """
    values = panel.values.copy()
    months = [_month_key(d) for d in panel.dates]
    missing_months = sorted({m for m in months if m not in cfg.hicp})
    if missing_months:
        raise ValidationError(f"hicp does not cover months: {', '.join(missing_months[:6])}")
    deflator = np.array([cfg.hicp[m] / 100.0 for m in months])

    for k, label in enumerate(panel.labels):
        if label not in cfg.emission_factors:
            raise ValidationError(f"no emission factor configured for series {label!r}")
        if label in cfg.fx:
            rates = cfg.fx[label]
            try:
                fx = np.array([rates[str(d)] for d in panel.dates])
            except KeyError as exc:
                raise ValidationError(f"fx series for {label!r} missing date {exc.args[0]}") from None
            values[:, k] *= fx
        values[:, k] = values[:, k] / cfg.emission_factors[label] / deflator
    return Panel(panel.dates, values, panel.labels, panel.transform_tag)


def to_log(panel: Panel) -> Panel:
    """Elementwise natural log; requires a levels panel with positive cells."""
    if panel.transform_tag != "levels":
        raise ValidationError("to_log expects a levels panel")
    nonpos = np.argwhere(panel.values <= 0)
    if len(nonpos):
        t, k = map(int, nonpos[0])
        raise ValidationError(f"non-positive value at ({panel.dates[t]}, {panel.labels[k]})")
    return Panel(panel.dates, np.log(panel.values), panel.labels, "log")


def cap_exponentiated(values: np.ndarray, cap: float = DEFAULT_CAP) -> tuple[np.ndarray, int]:
    """Clamp exponentiated forecasts: non-finite or above-cap cells become ``cap``.

    Returns the clamped array and the number of replaced cells. Total
    function: never raises on numeric input.
    """
    values = np.asarray(values, dtype=float)
    mask = ~np.isfinite(values) | (values > cap)
    out = np.where(mask, cap, values)
    return out, int(mask.sum())


_KV_LINE = re.compile(r"^\s*([^=#]+?)\s*=\s*(.+?)\s*$")


def parse_normalization_config(path) -> NormalizationConfig:
    """Parse the flat key=value normalization file.

    Recognized keys: ``factor.<label>``, ``hicp.<YYYY-MM>`` and
    ``fx.<label>.<YYYY-MM-DD>``. Lines starting with ``#`` are comments.
    """
    factors: dict[str, float] = {}
    hicp: dict[str, float] = {}
    fx: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            m = _KV_LINE.match(line)
            if not m:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, val = m.group(1), m.group(2)
            try:
                num = float(val)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: value {val!r} is not numeric") from None
            parts = key.split(".")
            if parts[0] == "factor" and len(parts) == 2:
                factors[parts[1]] = num
            elif parts[0] == "hicp" and len(parts) == 2:
                hicp[parts[1]] = num
            elif parts[0] == "fx" and len(parts) == 3:
                fx.setdefault(parts[1], {})[parts[2]] = num
            else:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
    return NormalizationConfig(factors, hicp, fx)
