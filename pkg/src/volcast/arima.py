"""Automatic ARIMA baseline.

Differencing order from successive KPSS level-stationarity tests, ARMA
coefficients by conditional sum of squares (Nelder-Mead), and a grid over
p, q in 0..3 ranked by AIC. Forecasts are one step ahead with parameters
frozen after fitting.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import optimize, signal

from .errors import DataError, NumericalError

logger = logging.getLogger(__name__)

KPSS_CRITICAL_5PCT = 0.463
COEF_BOUND = 0.99
MAX_ORDER = 3
MAX_D = 2


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        if not (0 <= self.p <= MAX_ORDER and 0 <= self.q <= MAX_ORDER and 0 <= self.d <= MAX_D):
            raise ValueError(f"order {self.as_tuple()} outside p,q in 0..{MAX_ORDER}, d in 0..{MAX_D}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.p, self.d, self.q)

    @property
    def include_mean(self) -> bool:
        return self.d == 0


@dataclass
class ArimaModel:
    order: ArimaOrder
    ar: np.ndarray
    ma: np.ndarray
    mean: float
    sigma2: float
    aic: float
    n_obs: int
    css: float = math.nan
    converged: bool = True
    # (p, q) -> AIC of every converged grid candidate; filled by auto_arima
    candidates: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return self.order.p + self.order.q + 1 + int(self.order.include_mean)


@dataclass(frozen=True)
class KpssResult:
    statistic: float
    lags: int
    reject_at_5pct: bool


# ---------------------------------------------------------------------------
# KPSS and differencing

def kpss_auto_lags(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** 0.25))


def kpss_statistic(series, lags="auto") -> KpssResult:
    """Level-stationarity KPSS statistic with a Bartlett-kernel long-run variance."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("KPSS needs at least 10 observations")
    lags = kpss_auto_lags(n) if lags == "auto" else int(lags)
    if not 0 <= lags < n:
        raise ValueError(f"lags must lie in [0, {n})")
    if np.ptp(x) == 0:
        return KpssResult(0.0, lags, False)
    e = x - x.mean()
    s2 = e @ e / n
    for j in range(1, lags + 1):
        s2 += 2.0 * (1.0 - j / (lags + 1.0)) * (e[j:] @ e[:-j]) / n
    if not s2 > 0:
        return KpssResult(0.0, lags, False)
    partial = np.cumsum(e)
    stat = float(partial @ partial / (n * n * s2))
    return KpssResult(stat, lags, stat > KPSS_CRITICAL_5PCT)


def difference(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.diff(x, n=d) if d else x.copy()


def integrate(w, d: int, initial) -> np.ndarray:
    """Invert :func:`difference` given the first ``d`` values of the original."""
    out = np.asarray(w, dtype=float)
    initial = np.asarray(initial, dtype=float)
    if initial.size != d:
        raise ValueError(f"need {d} initial values")
    for k in range(d, 0, -1):
        # first value of the (k-1)-times differenced series
        start = difference(initial, k - 1)[0]
        out = np.concatenate([[start], start + np.cumsum(out)])
    return out


def select_differencing(series, max_d: int = MAX_D) -> int:
    """Smallest d whose d-times differenced series KPSS does not reject."""
    x = np.asarray(series, dtype=float)
    if x.size < 10 + max_d:
        raise ValueError(f"series too short to test up to d={max_d}")
    for d in range(max_d):
        if not kpss_statistic(difference(x, d)).reject_at_5pct:
            return d
    return max_d


# ---------------------------------------------------------------------------
# CSS estimation

def css_residuals(w, ar, ma, mean: float = 0.0, n_cond: int = 0) -> np.ndarray:
    """Innovations of an ARMA filter, zero for the first ``max(p, q, n_cond)``
    points."""
    y = np.asarray(w, dtype=float) - mean
    ar = np.asarray(ar, dtype=float)
    ma = np.asarray(ma, dtype=float)
    m = max(ar.size, ma.size, n_cond)
    eps = np.zeros_like(y)
    if y.size <= m:
        return eps
    e = y[m:].copy()
    for i, phi in enumerate(ar, start=1):
        e -= phi * y[m - i:y.size - i]
    eps[m:] = signal.lfilter([1.0], np.concatenate([[1.0], ma]), e) if ma.size else e
    return eps


def conditional_sum_of_squares(w, ar, ma, mean: float = 0.0, n_cond: int = 0) -> float:
    eps = css_residuals(w, ar, ma, mean, n_cond)
    return float(eps @ eps)


def ma_invertible(ma) -> bool:
    """Whether the innovation recursion ``eps_t = e_t - sum theta_j eps_{t-j}``
    is stable, i.e. every root of ``z^q + theta_1 z^(q-1) + ... + theta_q``
    lies strictly inside the unit circle."""
    ma = np.asarray(ma, dtype=float)
    if ma.size == 0 or not np.any(ma):
        return True
    return bool(np.max(np.abs(np.roots(np.r_[1.0, ma]))) < 1.0)


def _unpack(theta, order):
    k = int(order.include_mean)
    mean = theta[0] if k else 0.0
    return mean, theta[k:k + order.p], theta[k + order.p:]


def _initial_simplex(start, order, scale):
    k = start.size
    simplex = np.tile(start, (k + 1, 1))
    for i in range(k):
        if order.include_mean and i == 0:
            step = 0.1 * scale
        else:
            step = 0.1 if start[i] + 0.1 < COEF_BOUND else -0.1
        simplex[i + 1, i] += step
    return simplex


def _model_from(theta, order, w, css, converged, n_cond=0):
    mean, ar, ma = _unpack(theta, order)
    n_eff = w.size - max(order.p, order.q, n_cond)
    sigma2 = css / n_eff
    if not sigma2 > 1e-12:
        logger.warning("degenerate innovation variance for order %s; flooring at 1e-12", order.as_tuple())
        sigma2 = 1e-12
    loglik = -0.5 * n_eff * (math.log(2.0 * math.pi * sigma2) + 1.0)
    k = order.p + order.q + 1 + int(order.include_mean)
    return ArimaModel(order, np.array(ar, dtype=float), np.array(ma, dtype=float), float(mean), sigma2,
                      2.0 * k - 2.0 * loglik, n_eff, css, converged)


def fit_arma_css(series, order: ArimaOrder, starts=(), maxiter: int | None = None,
                 n_cond: int = 0) -> ArimaModel:
    """Fit ARIMA(p, d, q) to a raw series by conditional sum of squares.

    ``series`` is differenced ``d`` times first. The mean is estimated only
    for ``d == 0``. Coefficients start at zero (the mean at the sample mean);
    each vector in ``starts`` is an extra candidate start with the same
    layout ``[mean?, ar..., ma...]`` and the lowest CSS wins.

    Innovations are zero-seeded and the sum of squares starts at
    ``max(p, q, n_cond)``; a shared ``n_cond`` puts several orders on one
    effective sample so their CSS and AIC are comparable.
    """
    w = difference(series, order.d)
    m = max(order.p, order.q, n_cond)
    if w.size <= max(order.p + order.q + 1, m):
        raise DataError(f"{w.size} differenced points cannot fit order {order.as_tuple()}")
    nparam = order.p + order.q + int(order.include_mean)
    if order.p == order.q == 0:
        mean = float(w[m:].mean()) if order.include_mean else 0.0
        return _model_from(np.array([mean][:nparam]), order, w,
                           conditional_sum_of_squares(w, [], [], mean, m), True, m)

    n_eff = w.size - m
    scale = float(w.std()) or 1.0

    def objective(theta):
        mean, ar, ma = _unpack(theta, order)
        # the coefficient box alone does not keep MA(2+) invertible, and a
        # non-invertible filter explodes once forecasts run past the sample
        if not ma_invertible(ma):
            return math.inf
        with np.errstate(over="ignore", invalid="ignore"):
            value = conditional_sum_of_squares(w, ar, ma, mean, m) / n_eff
        return value if math.isfinite(value) else math.inf

    bounds = ([(None, None)] if order.include_mean else []) + [(-COEF_BOUND, COEF_BOUND)] * (order.p + order.q)
    origin = np.zeros(nparam)
    if order.include_mean:
        origin[0] = w.mean()
    cap = maxiter or 1000 * nparam
    best = None
    for start in [origin, *[np.asarray(s, dtype=float) for s in starts]]:
        if start.shape != (nparam,):
            raise ValueError(f"start vector must have {nparam} entries")
        res = optimize.minimize(
            objective, start, method="Nelder-Mead", bounds=bounds,
            options=dict(initial_simplex=_initial_simplex(start, order, scale), maxiter=cap,
                         maxfev=2 * cap, xatol=1e-9, fatol=1e-14 * max(1.0, scale ** 2)))
        if best is None or res.fun < best.fun:
            best = res
    css = best.fun * n_eff
    if not math.isfinite(css):
        raise NumericalError(f"non-finite CSS for order {order.as_tuple()}")
    return _model_from(best.x, order, w, css, bool(best.success), m)


def _pad(theta, order, new_order):
    """Embed a solution of ``order`` into the parameter layout of ``new_order``."""
    mean, ar, ma = _unpack(theta, order)
    lead = [mean] if new_order.include_mean else []
    ar = list(ar) + [0.0] * (new_order.p - order.p)
    ma = list(ma) + [0.0] * (new_order.q - order.q)
    return np.array(lead + ar + ma)


def _theta(model: ArimaModel) -> np.ndarray:
    lead = [model.mean] if model.order.include_mean else []
    return np.concatenate([lead, model.ar, model.ma])


def auto_arima(series, max_p: int = MAX_ORDER, max_q: int = MAX_ORDER, max_d: int = MAX_D,
               name: str = "series") -> ArimaModel:
    """KPSS-selected d, then every (p, q) on the grid; returns the minimum-AIC
    converged fit (ties: smaller p + q, then smaller p).

    All candidates condition on the first ``max(max_p, max_q)`` differenced
    points, so every AIC is computed on the same observations and nested
    candidates started from the smaller solution never have a larger CSS.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 30:
        raise DataError(f"{name}: auto_arima needs at least 30 observations, got {x.size}")
    d = select_differencing(x, max_d)
    fits: dict[tuple[int, int], ArimaModel] = {}
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            order = ArimaOrder(p, d, q)
            starts = [_pad(_theta(fits[k]), fits[k].order, order) for k in ((p - 1, q), (p, q - 1)) if k in fits]
            try:
                fits[(p, q)] = fit_arma_css(x, order, starts, n_cond=max(max_p, max_q))
            except (DataError, NumericalError) as exc:
                logger.info("%s: order %s failed: %s", name, order.as_tuple(), exc)
    good = {k: m for k, m in fits.items() if m.converged and math.isfinite(m.aic)}
    if not good:
        raise NumericalError(f"{name}: all ARIMA grid fits failed")
    key = min(good, key=lambda k: (good[k].aic, k[0] + k[1], k[0]))
    best = good[key]
    best.candidates = {k: m.aic for k, m in sorted(good.items())}
    return best


# ---------------------------------------------------------------------------
# forecasting

def _integrate_next(w_hat: float, x_tail, d: int) -> float:
    """Raw-scale value whose d-th difference ending at it equals ``w_hat``;
    ``x_tail`` holds the last ``d`` raw values, oldest first."""
    return w_hat + sum((-1) ** (k + 1) * comb(d, k) * x_tail[-k] for k in range(1, d + 1))


def forecast_one_step(model: ArimaModel, history) -> float:
    """Forecast the value following the raw ``history`` with fixed parameters."""
    x = np.asarray(history, dtype=float)
    p, d, q = model.order.p, model.order.d, model.order.q
    if x.size < d + p or x.size == 0:
        raise DataError(f"history of {x.size} points too short for order {model.order.as_tuple()}")
    w = difference(x, d)
    eps = css_residuals(w, model.ar, model.ma, model.mean)
    mu = model.mean
    w_hat = mu
    for i in range(1, p + 1):
        w_hat += model.ar[i - 1] * (w[-i] - mu)
    for j in range(1, q + 1):
        if j <= w.size:
            w_hat += model.ma[j - 1] * eps[-j]
    return float(_integrate_next(w_hat, x[x.size - d:] if d else x[:0], d))


def rolling_forecasts(model: ArimaModel, series, start: int) -> np.ndarray:
    """One-step forecasts of ``series[start:]``, each from ``series[:i]`` only.

    Equivalent to calling :func:`forecast_one_step` for every ``i``, but
    filters the series once: the innovation filter is causal, so the
    prediction of ``w[t]`` is ``w[t] - eps[t]``.
    """
    x = np.asarray(series, dtype=float)
    p, d, q = model.order.p, model.order.d, model.order.q
    m = max(p, q)
    if start - d < m or start < d + p or start == 0:
        return np.array([forecast_one_step(model, x[:i]) for i in range(start, x.size)])
    w = difference(x, d)
    eps = css_residuals(w, model.ar, model.ma, model.mean)
    t = np.arange(start, x.size) - d
    w_hat = w[t] - eps[t]
    idx = np.arange(start, x.size)
    out = w_hat.copy()
    for k in range(1, d + 1):
        out += (-1) ** (k + 1) * comb(d, k) * x[idx - k]
    return out
