"""Empirical mode decomposition, average-IMF denoising, and SNR.

The sift extracts intrinsic mode functions (IMFs) by repeatedly subtracting
the mean of cubic-spline envelopes drawn through the signal's maxima and
minima. Boundary swing is limited by mirroring the two extrema nearest each
edge across the signal endpoints before fitting the splines.

An IMF is accepted once the normalized squared change between consecutive
sift iterations drops below ``sd_threshold`` and the candidate's extrema
and zero-crossing counts differ by at most one, or after
``max_sift_iterations`` passes. Decomposition stops when the residue is
monotone (fewer than two maxima or two minima) or the IMF cap is reached.

Denoising subtracts the elementwise average of all IMFs from the signal;
the average-of-IMFs is treated as the noise estimate, and the residue is
never part of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InsufficientExtrema, NotDecomposable, ShapeError, ZeroPower

_MIRROR_COUNT = 2  # extrema reflected across each edge before spline fitting
_MIN_SIGNAL_LENGTH = 8


@dataclass(frozen=True)
class SiftConfig:
    sd_threshold: float = 0.2
    max_sift_iterations: int = 100
    max_imfs: int | None = None  # None = floor(log2(n)) - 1

    def imf_cap(self, n: int) -> int:
        if self.max_imfs is not None:
            return self.max_imfs
        return max(1, int(math.floor(math.log2(n))) - 1)


@dataclass(frozen=True)
class EmdResult:
    """Ordered IMFs (rows of ``imfs``), the residue, and their average."""

    imfs: np.ndarray  # shape (I, n)
    residue: np.ndarray
    avg_imf: np.ndarray

    @property
    def n_imfs(self) -> int:
        return self.imfs.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.imfs.sum(axis=0) + self.residue


@dataclass(frozen=True)
class DenoiseResult:
    denoised: np.ndarray
    noise: np.ndarray
    passthrough: bool  # True when the input was not decomposable
    emd: EmdResult | None


def local_extrema(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interior maxima and minima positions, plateau-tolerant.

    A plateau bounded by opposite slopes counts once, at its midpoint.
    Returns (maxima_indices, minima_indices), both strictly interior.
    """
    d = np.diff(x)
    nz = np.nonzero(d)[0]
    empty = np.array([], dtype=np.intp)
    if nz.size < 2:
        return empty, empty
    signs = np.sign(d[nz])
    flips = np.nonzero(np.diff(signs))[0]
    if flips.size == 0:
        return empty, empty
    left = nz[flips] + 1
    right = nz[flips + 1]
    pos = (left + right) // 2
    is_max = signs[flips] > 0
    return pos[is_max], pos[~is_max]


def count_zero_crossings(x: np.ndarray) -> int:
    signs = np.sign(x)
    signs = signs[signs != 0]
    if signs.size < 2:
        return 0
    return int(np.count_nonzero(np.diff(signs)))


def count_extrema(x: np.ndarray) -> int:
    maxima, minima = local_extrema(x)
    return maxima.size + minima.size


def is_imf_like(x: np.ndarray) -> bool:
    """True when extrema and zero-crossing counts differ by at most one."""
    return abs(count_extrema(x) - count_zero_crossings(x)) <= 1


def _mirrored_knots(idx: np.ndarray, vals: np.ndarray, n: int):
    """Extend extrema knots by reflecting up to two from each end outward."""
    k = min(_MIRROR_COUNT, idx.size)
    left_pos = (-idx[:k])[::-1]  # reflect about sample 0
    left_val = vals[:k][::-1]
    right_pos = (2 * (n - 1) - idx[-k:])[::-1]  # reflect about the last sample
    right_val = vals[-k:][::-1]
    pos = np.concatenate([left_pos, idx, right_pos])
    val = np.concatenate([left_val, vals, right_val])
    return pos.astype(np.float64), val


def _envelope(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    pos, val = _mirrored_knots(idx, x[idx], x.size)
    spline = CubicSpline(pos, val, bc_type="natural")
    return spline(np.arange(x.size, dtype=np.float64))


def sift_once(x: np.ndarray, config: SiftConfig = SiftConfig()) -> np.ndarray:
    """One sift pass: subtract the mean of the upper and lower envelopes.

    Raises InsufficientExtrema with fewer than two maxima or two minima.
    """
    x = np.asarray(x, dtype=np.float64)
    maxima, minima = local_extrema(x)
    if maxima.size < 2 or minima.size < 2:
        raise InsufficientExtrema(
            f"need >= 2 maxima and >= 2 minima, found {maxima.size}/{minima.size}"
        )
    upper = _envelope(x, maxima)
    lower = _envelope(x, minima)
    return x - 0.5 * (upper + lower)


def _can_sift(x: np.ndarray) -> bool:
    maxima, minima = local_extrema(x)
    return maxima.size >= 2 and minima.size >= 2


def _extract_imf(residue: np.ndarray, config: SiftConfig) -> np.ndarray:
    h = residue
    for _ in range(config.max_sift_iterations):
        try:
            h_next = sift_once(h, config)
        except InsufficientExtrema:
            break  # cannot refine further; accept current candidate
        denom = float(np.dot(h, h))
        if denom == 0.0:
            h = h_next
            break
        sd = float(np.dot(h - h_next, h - h_next)) / denom
        h = h_next
        if sd < config.sd_threshold and is_imf_like(h):
            break
    return h


def decompose(signal, config: SiftConfig = SiftConfig()) -> EmdResult:
    """Full EMD: IMFs plus residue plus their elementwise average.

    Raises NotDecomposable when no IMF can be extracted (too short, or the
    signal is monotone so there is nothing oscillatory to remove).
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("decompose expects a 1-D signal")
    if x.size < _MIN_SIGNAL_LENGTH or not _can_sift(x):
        raise NotDecomposable(
            f"signal of length {x.size} has too few extrema to decompose"
        )
    cap = config.imf_cap(x.size)
    imfs = []
    residue = x.copy()
    while len(imfs) < cap and _can_sift(residue):
        imf = _extract_imf(residue, config)
        imfs.append(imf)
        residue = residue - imf
    if not imfs:
        raise NotDecomposable("no intrinsic mode function could be extracted")
    stacked = np.vstack(imfs)
    return EmdResult(imfs=stacked, residue=residue, avg_imf=stacked.mean(axis=0))


def denoise(signal, config: SiftConfig = SiftConfig()) -> DenoiseResult:
    """Subtract the average IMF from the signal.

    Non-decomposable input passes through unchanged with ``passthrough``
    set and an all-zero noise estimate, so pipelines never hard-fail on
    pathological windows.
    """
    x = np.asarray(signal, dtype=np.float64)
    try:
        result = decompose(x, config)
    except NotDecomposable:
        return DenoiseResult(x.copy(), np.zeros_like(x), passthrough=True, emd=None)
    noise = result.avg_imf
    return DenoiseResult(x - noise, noise, passthrough=False, emd=result)


def snr_db(reference, test) -> float:
    """10*log10(reference power / error power); ``inf`` for identical inputs.

    Raises ZeroPower when the reference carries no energy.
    """
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise ShapeError(f"signal shapes differ: {ref.shape} vs {tst.shape}")
    p_ref = float(np.dot(ref, ref))
    if p_ref == 0.0:
        raise ZeroPower("reference signal has zero power")
    p_err = float(np.dot(ref - tst, ref - tst))
    if p_err == 0.0:
        return math.inf
    return 10.0 * math.log10(p_ref / p_err)
