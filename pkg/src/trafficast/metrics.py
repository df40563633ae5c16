"""Forecast error metrics: RMSE, MAE, MAPE, and relative error reduction.

RMSE and MAE are reported in the series' own unit (bps throughout this
package); MAPE and accuracy (= 100 - MAPE) are percentages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, ShapeError, ZeroActual, ZeroBaseline


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mae: float
    mape: float
    accuracy: float
    n: int


def _paired(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape:
        raise ShapeError(f"paired vectors differ in shape: {a.shape} vs {p.shape}")
    if a.size == 0:
        raise EmptyInput("metrics need at least one pair")
    return a, p


def rmse(actual, predicted) -> float:
    a, p = _paired(actual, predicted)
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mae(actual, predicted) -> float:
    a, p = _paired(actual, predicted)
    return float(np.mean(np.abs(a - p)))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error; every actual must be nonzero."""
    a, p = _paired(actual, predicted)
    if np.any(a == 0):
        raise ZeroActual("MAPE undefined: actual vector contains a zero")
    return float(100.0 * np.mean(np.abs((a - p) / a)))


def error_reduction(baseline_mape: float, proposed_mape: float) -> float:
    """Percentage drop from a baseline error to a proposed error.

    Negative when the proposed model is worse; sign is preserved.
    """
    if baseline_mape == 0:
        raise ZeroBaseline("error reduction undefined for a zero baseline")
    return 100.0 * (baseline_mape - proposed_mape) / baseline_mape


def report(actual, predicted) -> MetricReport:
    """All three metrics plus accuracy (100 - MAPE) in one record."""
    a, p = _paired(actual, predicted)
    m = mape(a, p)
    return MetricReport(
        rmse=rmse(a, p),
        mae=mae(a, p),
        mape=m,
        accuracy=100.0 - m,
        n=a.size,
    )
