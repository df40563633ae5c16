"""ARIMA(p,d,q) fitting by conditional sum of squares and AIC ranking.

The grid search exists to pick a lag count: the AR order of the best-AIC
model becomes the number of lagged inputs fed to the sequence models.
Estimation minimizes one-step squared residuals on the differenced series
(warm-up residuals fixed at zero) with a quasi-Newton optimizer over
numerically approximated gradients; exact-likelihood estimation is out of
scope because only the relative ranking matters here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import (
    DegenerateFit,
    InsufficientData,
    MalformedInput,
    NoViableModel,
)

_COEFF_BOUND = 10.0
# large enough to rank behind any real SSE, small enough that the
# optimizer's finite-difference quotients stay finite
_BAD_OBJECTIVE = 1e100


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        if self.p < 0 or self.d < 0 or self.q < 0:
            raise MalformedInput(f"negative order component in {self}")
        if self.p + self.q < 1:
            raise MalformedInput("need at least one AR or MA term")

    @property
    def n_params(self) -> int:
        return self.p + self.q + 1  # +1 for the intercept / variance slot


@dataclass(frozen=True)
class ArimaFit:
    order: ArimaOrder
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    intercept: float
    residuals: np.ndarray
    sigma2: float
    aic: float
    converged: bool
    ar_stationary: bool


@dataclass(frozen=True)
class GridEntry:
    order: ArimaOrder
    aic: float
    converged: bool
    ar_stationary: bool


def difference(signal, d: int) -> np.ndarray:
    """d-fold first differencing; output is shorter by d."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size <= d:
        raise InsufficientData(f"cannot difference length {x.size} series {d} times")
    for _ in range(d):
        x = np.diff(x)
    return x


def undifference(diffed, initial_values) -> np.ndarray:
    """Invert ``difference`` given the d dropped leading values."""
    x = np.asarray(diffed, dtype=np.float64)
    initials = np.atleast_1d(np.asarray(initial_values, dtype=np.float64))
    for lead in initials[::-1]:
        x = np.concatenate([[lead], lead + np.cumsum(x)])
    return x


def _css_residuals(z: np.ndarray, p: int, q: int, params: np.ndarray) -> np.ndarray:
    """One-step residuals for t = max(p,q)..n-1 with zero warm-up."""
    c = params[0]
    phi = params[1 : 1 + p]
    theta = params[1 + p : 1 + p + q]
    m = max(p, q)
    x = z[m:] - c
    for i in range(1, p + 1):
        x = x - phi[i - 1] * z[m - i : z.size - i]
    if q == 0:
        return x
    return lfilter([1.0], np.concatenate([[1.0], theta]), x)


def _css_objective(z: np.ndarray, p: int, q: int):
    def objective(params: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            eps = _css_residuals(z, p, q, params)
            sse = float(np.dot(eps, eps))
        if not math.isfinite(sse) or sse > _BAD_OBJECTIVE:
            return _BAD_OBJECTIVE
        return sse

    return objective


def _yule_walker(z: np.ndarray, p: int) -> np.ndarray:
    """AR coefficients from sample autocovariances (zeros if degenerate)."""
    if p == 0:
        return np.empty(0)
    centered = z - z.mean()
    n = z.size
    cov = np.array(
        [float(np.dot(centered[k:], centered[: n - k])) / n for k in range(p + 1)]
    )
    if cov[0] <= 0:
        return np.zeros(p)
    try:
        phi = solve_toeplitz(cov[:p], cov[1 : p + 1])
    except np.linalg.LinAlgError:
        return np.zeros(p)
    if not np.all(np.isfinite(phi)):
        return np.zeros(p)
    return phi


def _ar_stationary(phi: np.ndarray) -> bool:
    """True when every root of 1 - phi_1 z - ... - phi_p z^p lies outside
    the unit circle."""
    if phi.size == 0:
        return True
    poly = np.concatenate([-phi[::-1], [1.0]])
    roots = np.roots(poly)
    if roots.size == 0:
        return True
    return bool(np.min(np.abs(roots)) > 1.0)


def aic(fit: ArimaFit, n_eff: int) -> float:
    """Gaussian CSS approximation: n_eff*ln(sigma2) + 2*(p + q + 1)."""
    if not fit.converged:
        raise MalformedInput("AIC requires a converged fit")
    if n_eff <= 0:
        raise MalformedInput(f"n_eff must be positive, got {n_eff}")
    if fit.sigma2 <= 0:
        raise DegenerateFit("zero innovation variance")
    return n_eff * math.log(fit.sigma2) + 2.0 * fit.order.n_params


def fit_arima(signal, order: ArimaOrder, max_iterations: int = 200) -> ArimaFit:
    """Estimate ARIMA coefficients by conditional sum of squares.

    A non-converged optimization is returned (never raised) with
    ``converged=False`` and an +inf AIC sentinel so grid searches can rank
    it last.
    """
    z = difference(signal, order.d)
    if z.size < 10 * order.n_params:
        raise InsufficientData(
            f"differenced length {z.size} below identifiability floor "
            f"{10 * order.n_params} for {order}"
        )
    p, q = order.p, order.q
    objective = _css_objective(z, p, q)

    init = np.concatenate([[z.mean()], _yule_walker(z, p), np.zeros(q)])
    if objective(init) >= _BAD_OBJECTIVE:
        init = np.zeros(1 + p + q)
    f0 = objective(init)

    bounds = [(None, None)] + [(-_COEFF_BOUND, _COEFF_BOUND)] * (p + q)
    result = minimize(
        objective,
        init,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iterations},
    )
    # the optimizer must never hand back something worse than its start
    params = result.x if result.fun <= f0 else init
    sse = objective(params)
    converged = bool(result.success) and sse < _BAD_OBJECTIVE

    residuals = _css_residuals(z, p, q, params)
    n_eff = residuals.size
    sigma2 = sse / n_eff if n_eff > 0 else math.inf
    phi = np.asarray(params[1 : 1 + p])
    theta = np.asarray(params[1 + p :])
    if converged and sigma2 > 0 and math.isfinite(sigma2):
        score = n_eff * math.log(sigma2) + 2.0 * order.n_params
    else:
        score = math.inf
        converged = False
    return ArimaFit(
        order=order,
        ar_coeffs=phi,
        ma_coeffs=theta,
        intercept=float(params[0]),
        residuals=residuals,
        sigma2=float(sigma2),
        aic=score,
        converged=converged,
        ar_stationary=_ar_stationary(phi),
    )


def grid_search(
    signal,
    p_range: tuple[int, int] = (2, 24),
    q_range: tuple[int, int] = (2, 24),
    d: int = 1,
) -> list[GridEntry]:
    """Fit every (p, q) cell and rank ascending by AIC.

    Non-converged fits sort last (+inf AIC); ties break toward smaller p
    then smaller q, making the ranking deterministic.
    """
    entries = []
    for p in range(p_range[0], p_range[1] + 1):
        for q in range(q_range[0], q_range[1] + 1):
            if p + q < 1:
                continue
            fit = fit_arima(signal, ArimaOrder(p, d, q))
            entries.append(
                GridEntry(fit.order, fit.aic, fit.converged, fit.ar_stationary)
            )
    entries.sort(key=lambda e: (e.aic, e.order.p, e.order.q))
    return entries


def select_lag_count(ranked: list[GridEntry]) -> int:
    """AR order of the best-ranked converged fit."""
    for entry in ranked:
        if entry.converged and math.isfinite(entry.aic):
            return entry.order.p
    raise NoViableModel("every grid cell failed to converge")
