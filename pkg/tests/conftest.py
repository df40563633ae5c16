import numpy as np
import pytest

from trafficast.series import TrafficSeries


@pytest.fixture
def make_series():
    def _make(values, interval=300, start=0.0, mask=None):
        return TrafficSeries(start, interval, np.asarray(values, dtype=float), mask)

    return _make


def numeric_grad(f, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + eps
        fp = f()
        arr[idx] = orig - eps
        fm = f()
        arr[idx] = orig
        g[idx] = (fp - fm) / (2 * eps)
    return g


def grad_close(numeric: np.ndarray, analytic: np.ndarray,
               rtol: float = 1e-4, atol: float = 1e-7) -> bool:
    """Combined-tolerance comparison; atol absorbs finite-difference noise
    on near-zero components."""
    return bool(
        np.all(np.abs(numeric - analytic)
               <= atol + rtol * np.maximum(np.abs(numeric), np.abs(analytic)))
    )
