"""Univariate traffic series: ingestion, gap filling, ACF, normalization.

A series is a uniformly sampled grid of bits-per-second values. Timestamps
are implicit: ``t(i) = start_time + i * interval``. Raw input is either a
stream of interface octet-counter readings (converted to bps by differencing)
or pre-converted bps values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    InsufficientData,
    LeadingGap,
    MalformedInput,
    ZeroRange,
    ZeroVariance,
)

DEFAULT_INTERVAL = 300


@dataclass(frozen=True)
class CounterRecord:
    """One raw octet-counter sample: (epoch seconds, counter value)."""

    timestamp: float
    counter: int | None  # None = missing reading


@dataclass(frozen=True)
class TrafficSeries:
    """Uniformly sampled bps series with a missing-value mask.

    ``values[i]`` is the traffic volume for the interval starting at
    ``start_time + i * interval``. ``missing_mask[i]`` is True where the
    value is unknown (stored as NaN until filled).
    """

    start_time: float
    interval: int
    values: np.ndarray
    missing_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise MalformedInput("series needs a 1-D value array of length >= 1")
        if self.interval <= 0:
            raise MalformedInput(f"interval must be positive, got {self.interval}")
        mask = self.missing_mask
        if mask is None:
            mask = np.isnan(values)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != values.shape:
            raise MalformedInput("missing_mask length must match values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)

    def __len__(self) -> int:
        return self.values.size

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_time + np.arange(len(self)) * float(self.interval)

    @property
    def has_missing(self) -> bool:
        return bool(self.missing_mask.any())

    def with_values(self, values: np.ndarray, missing_mask=None) -> "TrafficSeries":
        """Same grid, new values (and optionally a new mask)."""
        if missing_mask is None:
            missing_mask = np.zeros(len(values), dtype=bool)
        return TrafficSeries(self.start_time, self.interval, values, missing_mask)


@dataclass(frozen=True)
class ScaleParams:
    """Min-max scale fitted on one value range; inverts exactly."""

    low: float
    high: float

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.low) / (self.high - self.low)

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * (self.high - self.low) + self.low


def ingest_counters(
    records: Sequence[CounterRecord],
    interval: int = DEFAULT_INTERVAL,
    divide_by_interval: bool = True,
) -> TrafficSeries:
    """Convert octet-counter readings to a bps series.

    Each value is the difference between consecutive counters times eight
    (bits), divided by the interval length to express a rate. Pass
    ``divide_by_interval=False`` to keep the raw bits-per-interval product.
    A counter decrease (wrap or device reset) marks that interval missing
    rather than guessing a wrap width; a missing reading poisons both
    adjacent intervals.

    Raises EmptyInput for fewer than two records, MalformedInput when
    timestamps are not strictly increasing.
    """
    if len(records) < 2:
        raise EmptyInput(f"need >= 2 counter records, got {len(records)}")
    ts = np.array([r.timestamp for r in records], dtype=np.float64)
    if not np.all(np.diff(ts) > 0):
        raise MalformedInput("counter record timestamps must be strictly increasing")

    counters = np.array(
        [np.nan if r.counter is None else float(r.counter) for r in records]
    )
    diffs = np.diff(counters)
    missing = np.isnan(diffs) | (diffs < 0)
    values = diffs * 8.0
    if divide_by_interval:
        values = values / float(interval)
    values[missing] = np.nan
    return TrafficSeries(records[0].timestamp, interval, values, missing)


def forward_fill(s: TrafficSeries) -> TrafficSeries:
    """Replace each missing value with the nearest preceding observed value.

    Raises LeadingGap when index 0 is missing (no donor exists).
    """
    if not s.has_missing:
        return s
    if s.missing_mask[0]:
        raise LeadingGap("series starts with a missing value")
    values = s.values.copy()
    # index of the most recent non-missing position, propagated forward
    idx = np.where(~s.missing_mask, np.arange(len(s)), 0)
    np.maximum.accumulate(idx, out=idx)
    values = values[idx]
    return TrafficSeries(s.start_time, s.interval, values, np.zeros(len(s), dtype=bool))


def acf(s: TrafficSeries, max_lag: int) -> np.ndarray:
    """Sample autocorrelation for lags 0..max_lag.

    Uses the biased estimator (covariances normalized by n and by the lag-0
    variance), so entry 0 is exactly 1 and every entry lies in [-1, 1].

    Raises InsufficientData when ``max_lag >= len(s)``, ZeroVariance for a
    constant series, MalformedInput if missing values remain.
    """
    if s.has_missing:
        raise MalformedInput("fill missing values before computing the ACF")
    n = len(s)
    if max_lag >= n:
        raise InsufficientData(f"max_lag={max_lag} requires series longer than that")
    centered = s.values - s.values.mean()
    c0 = float(np.dot(centered, centered)) / n
    if c0 == 0.0:
        raise ZeroVariance("constant series has no autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(np.dot(centered[k:], centered[:-k])) / n / c0
    return out


def minmax_normalize(s: TrafficSeries) -> tuple[TrafficSeries, ScaleParams]:
    """Map values onto [0, 1]; returns the series plus invertible params.

    Raises ZeroRange for a constant series.
    """
    if s.has_missing:
        raise MalformedInput("fill missing values before normalizing")
    low = float(s.values.min())
    high = float(s.values.max())
    if high == low:
        raise ZeroRange("constant series cannot be min-max normalized")
    params = ScaleParams(low, high)
    return s.with_values(params.apply(s.values)), params


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

_MISSING_TOKENS = {"", "nan", "NaN", "NAN"}


def _parse_cell(cell: str) -> float:
    cell = cell.strip()
    if cell in _MISSING_TOKENS:
        return math.nan
    return float(cell)


def read_counter_csv(path) -> list[CounterRecord]:
    """Read a ``timestamp,counter`` CSV; empty or NaN counter = missing."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "timestamp" not in reader.fieldnames:
            raise MalformedInput(f"{path}: expected a 'timestamp' column")
        if "counter" not in reader.fieldnames:
            raise MalformedInput(f"{path}: expected a 'counter' column")
        for row in reader:
            ts = float(row["timestamp"])
            raw = _parse_cell(row["counter"])
            records.append(CounterRecord(ts, None if math.isnan(raw) else int(raw)))
    return records


def read_bps_csv(path, interval: int = DEFAULT_INTERVAL) -> TrafficSeries:
    """Read a ``timestamp,bps`` CSV onto a uniform grid.

    The first timestamp anchors the grid; the stated interval is trusted
    (rows must be in grid order). Empty or NaN bps cells are missing.
    """
    timestamps = []
    values = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "timestamp" not in reader.fieldnames:
            raise MalformedInput(f"{path}: expected a 'timestamp' column")
        if "bps" not in reader.fieldnames:
            raise MalformedInput(f"{path}: expected a 'bps' column")
        for row in reader:
            timestamps.append(float(row["timestamp"]))
            values.append(_parse_cell(row["bps"]))
    if not values:
        raise EmptyInput(f"{path}: no data rows")
    ts = np.asarray(timestamps)
    if len(ts) > 1 and not np.all(np.diff(ts) > 0):
        raise MalformedInput(f"{path}: timestamps must be strictly increasing")
    return TrafficSeries(ts[0], interval, np.asarray(values))


def write_series_csv(path, s: TrafficSeries) -> None:
    """Write the standard ``timestamp,bps`` CSV (missing as empty cells)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "bps"])
        for t, v, miss in zip(s.timestamps, s.values, s.missing_mask):
            writer.writerow([f"{t:.0f}", "" if miss else repr(float(v))])


def write_acf_csv(path, correlations: Iterable[float]) -> None:
    """Write the ``lag,correlation`` CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag", "correlation"])
        for lag, corr in enumerate(correlations):
            writer.writerow([lag, repr(float(corr))])
