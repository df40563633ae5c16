"""Empirical-rule outlier detection and KNN-based mitigation.

Detection flags every point lying strictly outside mean +/- 3 population
standard deviations. The neighbor count K used for mitigation is tuned by
running a KNN regressor over the series for each candidate K and keeping
the one with the lowest next-step RMSE.

Mitigation replaces each flagged value either with the mean of its K
nearest non-flagged points under a NaN-aware Euclidean distance over
lagged-window feature vectors (NEIGHBOR mode, the default) or with the
mean of the K nearest preceding non-flagged values (PRECEDING mode).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, InsufficientDonors, MalformedInput
from .series import TrafficSeries

DEFAULT_K_RANGE = (2, 24)
DEFAULT_WINDOW = 13  # lag count selected on the reference dataset
_CHUNK = 512


class MitigationMode(enum.Enum):
    NEIGHBOR = "neighbor"
    PRECEDING = "preceding"


@dataclass(frozen=True)
class EmpiricalBounds:
    mean: float
    std_dev: float
    upper: float
    lower: float

    @classmethod
    def from_values(cls, values: np.ndarray) -> "EmpiricalBounds":
        mean = float(values.mean())
        std = float(values.std())  # population form: divide by N
        return cls(mean=mean, std_dev=std, upper=mean + 3 * std, lower=mean - 3 * std)


@dataclass(frozen=True)
class OutlierReport:
    bounds: EmpiricalBounds
    flagged: np.ndarray  # sorted indices
    best_k: int
    k_rmse_table: dict[int, float]
    mitigated: TrafficSeries


def detect(s: TrafficSeries) -> tuple[EmpiricalBounds, np.ndarray]:
    """Flag indices strictly outside the three-sigma empirical bounds."""
    if s.has_missing:
        raise MalformedInput("fill missing values before outlier detection")
    if len(s) < 2:
        raise InsufficientData("outlier detection needs at least 2 points")
    bounds = EmpiricalBounds.from_values(s.values)
    flagged = np.nonzero((s.values > bounds.upper) | (s.values < bounds.lower))[0]
    return bounds, flagged


def _window_matrix(values: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows of consecutive values and the successor of each row."""
    n = values.size
    m = n - window
    idx = np.arange(window)[None, :] + np.arange(m)[:, None]
    return values[idx], values[window:]


def _neighbor_rmse_curve(
    values: np.ndarray, k_max: int, window: int
) -> np.ndarray:
    """RMSE of next-step KNN prediction for every k in 1..k_max at once.

    For each query window the k nearest other windows (squared Euclidean
    distance, ties broken toward the lower index) vote with their successor
    values; the prediction for a given k is the mean of the first k votes.
    Distances are computed in chunks so the full pairwise matrix is never
    materialized.
    """
    windows, successors = _window_matrix(values, window)
    m = windows.shape[0]
    votes = np.empty((m, k_max))
    for start in range(0, m, _CHUNK):
        stop = min(start + _CHUNK, m)
        block = windows[start:stop]
        # direct differences (not the dot-product expansion) to keep
        # distance ordering reproducible against a naive implementation
        d2 = np.empty((stop - start, m))
        for r, row in enumerate(block):
            d2[r] = np.square(windows - row).sum(axis=1)
            d2[r, start + r] = np.inf  # exclude the query itself
        part = np.argpartition(d2, k_max - 1, axis=1)[:, :k_max]
        part_d = np.take_along_axis(d2, part, axis=1)
        # order the k_max candidates by (distance, index)
        order = np.lexsort((part, part_d), axis=1)
        ranked = np.take_along_axis(part, order, axis=1)
        votes[start:stop] = successors[ranked]
    running_mean = np.cumsum(votes, axis=1) / np.arange(1, k_max + 1)
    sq_err = np.square(running_mean - successors[:, None])
    return np.sqrt(sq_err.mean(axis=0))


def knn_regressor_rmse(s: TrafficSeries, k: int, window: int = DEFAULT_WINDOW) -> float:
    """Next-step prediction RMSE using the k nearest windows."""
    if k < 2:
        raise MalformedInput(f"k must be >= 2, got {k}")
    if len(s) <= window + k:
        raise InsufficientData(
            f"series of length {len(s)} too short for window={window}, k={k}"
        )
    return float(_neighbor_rmse_curve(s.values, k, window)[k - 1])


def optimize_k(
    s: TrafficSeries,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    window: int = DEFAULT_WINDOW,
) -> tuple[int, dict[int, float]]:
    """Best K (lowest RMSE, smallest K on ties) plus the full K->RMSE table."""
    k_min, k_max = k_range
    if k_min < 2 or k_max < k_min:
        raise MalformedInput(f"invalid K range [{k_min}, {k_max}]")
    if len(s) <= window + k_max:
        raise InsufficientData(
            f"series of length {len(s)} too short for window={window}, k={k_max}"
        )
    curve = _neighbor_rmse_curve(s.values, k_max, window)
    table = {k: float(curve[k - 1]) for k in range(k_min, k_max + 1)}
    best_k = min(table, key=lambda k: (table[k], k))
    return best_k, table


def _nan_euclidean_sq(features: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Squared NaN-aware Euclidean distance from one query row to all rows.

    Coordinates missing on either side are skipped and the sum is rescaled
    by total/present coordinates; rows with no overlap get +inf.
    """
    total = query.size
    diff = features - query
    present = ~np.isnan(diff)
    counts = present.sum(axis=1)
    sq = np.where(present, np.square(diff), 0.0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = sq * (total / counts)
    scaled[counts == 0] = np.inf
    return scaled


def _lagged_features(values: np.ndarray, flagged: np.ndarray, window: int) -> np.ndarray:
    """Feature row for index i: the ``window`` values preceding i.

    Flagged entries and positions before the series start are NaN.
    """
    n = values.size
    masked = values.copy()
    masked[flagged] = np.nan
    feats = np.full((n, window), np.nan)
    for lag in range(1, window + 1):
        feats[lag:, window - lag] = masked[: n - lag]
    return feats


def mitigate(
    s: TrafficSeries,
    flagged: np.ndarray,
    best_k: int,
    mode: MitigationMode = MitigationMode.NEIGHBOR,
    window: int = DEFAULT_WINDOW,
) -> TrafficSeries:
    """Replace flagged values with a K-nearest-donor average.

    Only flagged indices change. Donors are always non-flagged original
    values, so the result does not depend on replacement order.

    Raises InsufficientDonors when a flagged index has fewer than best_k
    usable donors.
    """
    flagged = np.asarray(flagged, dtype=np.intp)
    if flagged.size == 0:
        return s
    if best_k < 1:
        raise MalformedInput(f"best_k must be >= 1, got {best_k}")
    n = len(s)
    if flagged.min() < 0 or flagged.max() >= n:
        raise MalformedInput("flagged indices out of range")
    values = s.values.copy()
    donors_ok = np.ones(n, dtype=bool)
    donors_ok[flagged] = False

    if mode is MitigationMode.PRECEDING:
        for i in flagged:
            donors = np.nonzero(donors_ok[:i])[0]
            if donors.size < best_k:
                raise InsufficientDonors(
                    f"index {i}: only {donors.size} preceding donors, need {best_k}"
                )
            values[i] = s.values[donors[-best_k:]].mean()
        return s.with_values(values)

    feats = _lagged_features(s.values, flagged, window)
    donor_idx = np.nonzero(donors_ok)[0]
    donor_feats = feats[donor_idx]
    for i in flagged:
        d2 = _nan_euclidean_sq(donor_feats, feats[i])
        finite = np.isfinite(d2)
        if finite.sum() < best_k:
            raise InsufficientDonors(
                f"index {i}: only {int(finite.sum())} comparable donors, need {best_k}"
            )
        order = sorted(np.nonzero(finite)[0], key=lambda j: (d2[j], donor_idx[j]))
        chosen = donor_idx[np.array(order[:best_k])]
        values[i] = s.values[chosen].mean()
    return s.with_values(values)


def analyze(
    s: TrafficSeries,
    k_range: tuple[int, int] = DEFAULT_K_RANGE,
    window: int = DEFAULT_WINDOW,
    mode: MitigationMode = MitigationMode.NEIGHBOR,
) -> OutlierReport:
    """Full outlier pass: detect, tune K, mitigate."""
    bounds, flagged = detect(s)
    best_k, table = optimize_k(s, k_range, window)
    mitigated = mitigate(s, flagged, best_k, mode, window)
    return OutlierReport(
        bounds=bounds,
        flagged=flagged,
        best_k=best_k,
        k_rmse_table=table,
        mitigated=mitigated,
    )
