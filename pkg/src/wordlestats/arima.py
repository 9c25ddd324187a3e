"""ARIMA fitting and forecasting for the reported-results series.

Model on the d-times differenced series w:

    w_t = c + sum_j ar[j] * w_{t-j} + sum_j ma[j] * e_{t-j} + e_t

Coefficients are estimated by conditional sum of squares (pre-sample
residuals set to zero) with multistart Nelder-Mead. AR and MA polynomials
are parametrised through partial autocorrelations so every candidate is
stationary and invertible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize, signal, stats

__all__ = [
    "AdfResult", "ArimaModel", "ForecastInterval", "OrderSelection",
    "acf", "adf_test", "difference", "fit_arima", "forecast", "integrate",
    "ljung_box", "pacf", "prediction_interval", "interval_from_len",
    "select_orders", "sensitivity_sweep", "default_adf_lag",
]


class ArimaConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    p_value: float
    lags_used: int
    nobs: int


@dataclass(frozen=True)
class ForecastInterval:
    point: float
    len: float
    lower: float
    upper: float


@dataclass(frozen=True)
class ArimaModel:
    p: int
    d: int
    q: int
    constant: float
    ar_coeffs: tuple[float, ...]
    ma_coeffs: tuple[float, ...]
    residual_variance: float
    series: np.ndarray = field(repr=False)
    differenced: np.ndarray = field(repr=False)
    # aligned with `differenced`; zero before the conditioning point
    residuals: np.ndarray = field(repr=False)
    start: int = 0
    include_constant: bool = True

    @property
    def nobs(self) -> int:
        return len(self.differenced) - self.start

    @property
    def n_params(self) -> int:
        return self.p + self.q + int(self.include_constant)

    @property
    def css(self) -> float:
        return float(np.sum(self.residuals[self.start:] ** 2))

    @property
    def aic(self) -> float:
        s2 = max(self.residual_variance, np.finfo(float).tiny)
        return self.nobs * math.log(s2) + 2 * (self.n_params + 1)

    @property
    def bic(self) -> float:
        s2 = max(self.residual_variance, np.finfo(float).tiny)
        return self.nobs * math.log(s2) + math.log(self.nobs) * (self.n_params + 1)

    def fitted_levels(self) -> tuple[np.ndarray, np.ndarray]:
        """One-step in-sample predictions on the original scale.

        Returns (indices into `series`, predictions).
        """
        idx = np.arange(self.d + self.start, len(self.series))
        return idx, self.series[idx] - self.residuals[self.start:]


def difference(series: Sequence[float], d: int) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if d < 0:
        raise ValueError("d must be >= 0")
    if len(x) <= d:
        raise ValueError(f"series of length {len(x)} too short to difference {d} times")
    return np.diff(x, n=d) if d else x.copy()


def integrate(diffed: Sequence[float], initial: Sequence[float]) -> np.ndarray:
    """Invert `difference`: initial[k] is the first value of the k-th difference."""
    x = np.asarray(diffed, dtype=float)
    for k in reversed(range(len(initial))):
        x = np.concatenate([[initial[k]], initial[k] + np.cumsum(x)])
    return x


def acf(series: Sequence[float], max_lag: int) -> np.ndarray:
    """Autocorrelations at lags 0..max_lag.

    Lag-q numerator averages over the n-q available products, the
    denominator is the 1/n sample variance, so values can exceed 1 in
    magnitude on short series.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= max_lag:
        raise ValueError("series must be longer than max_lag")
    dev = x - x.mean()
    var = dev @ dev / n
    if var == 0:
        raise ValueError("zero-variance series")
    return np.array([(dev[q:] @ dev[:n - q]) / (n - q) / var for q in range(max_lag + 1)])


def _durbin_levinson(r: np.ndarray) -> np.ndarray:
    max_lag = len(r) - 1
    out = np.ones(max_lag + 1)
    phi = np.zeros(0)
    for k in range(1, max_lag + 1):
        denom = 1.0 - phi @ r[1:k]
        if denom <= 1e-14:
            raise ValueError(f"Toeplitz system singular at lag {k}")
        kk = (r[k] - phi @ r[k - 1:0:-1]) / denom
        phi = np.concatenate([phi - kk * phi[::-1], [kk]])
        out[k] = kk
    return out


def pacf(series: Sequence[float], max_lag: int) -> np.ndarray:
    """Partial autocorrelations at lags 0..max_lag via Durbin-Levinson on `acf`."""
    return _durbin_levinson(acf(series, max_lag))


def default_adf_lag(n: int) -> int:
    return int(12 * (n / 100) ** 0.25)


# MacKinnon (1994) response surface, constant-only regression, one series.
# Source: MacKinnon, "Approximate asymptotic distribution functions for
# unit-root and cointegration tests", JBES 12 (1994), Table 3.
_TAU_MAX_C = 2.74
_TAU_MIN_C = -18.83
_TAU_STAR_C = -1.61
_TAU_C_SMALLP = (2.1659, 1.4412, 3.8269e-2)
_TAU_C_LARGEP = (1.7339, 9.3202e-1, -1.2745e-1, -1.0368e-2)


def mackinnon_p(tau: float) -> float:
    if tau > _TAU_MAX_C:
        return 1.0
    if tau < _TAU_MIN_C:
        return 0.0
    coef = _TAU_C_SMALLP if tau <= _TAU_STAR_C else _TAU_C_LARGEP
    return float(stats.norm.cdf(np.polyval(coef[::-1], tau)))


def adf_test(series: Sequence[float], max_lag: int | None = None) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and `max_lag` lagged differences."""
    y = np.asarray(series, dtype=float)
    n = len(y)
    k = default_adf_lag(n) if max_lag is None else max_lag
    if n < k + 10:
        raise ValueError(f"series of length {n} too short for {k} lags")
    dy = np.diff(y)
    rows = len(dy) - k
    X = np.empty((rows, k + 2))
    X[:, 0] = y[k:n - 1]
    X[:, 1] = 1.0
    for j in range(1, k + 1):
        X[:, j + 1] = dy[k - j:len(dy) - j]
    target = dy[k:]
    xtx = X.T @ X
    if np.linalg.matrix_rank(xtx) < X.shape[1]:
        raise np.linalg.LinAlgError("singular ADF regression matrix")
    beta = np.linalg.solve(xtx, X.T @ target)
    resid = target - X @ beta
    s2 = resid @ resid / (rows - X.shape[1])
    se = math.sqrt(s2 * np.linalg.inv(xtx)[0, 0])
    tau = beta[0] / se
    return AdfResult(statistic=float(tau), p_value=mackinnon_p(tau), lags_used=k, nobs=rows)


def _pacs_to_poly(u: np.ndarray) -> np.ndarray:
    """Map unconstrained values to coefficients phi with 1 - sum phi_j z^j stable."""
    phi = np.zeros(0)
    for r in np.tanh(u):
        phi = np.concatenate([phi - r * phi[::-1], [r]])
    return phi


def _is_stable(phi: Sequence[float]) -> bool:
    """True if all roots of 1 - sum phi_j z^j lie outside the unit circle."""
    phi = np.asarray(phi, dtype=float)
    if not len(phi) or not np.any(phi):
        return True
    roots = np.roots(np.concatenate([-phi[::-1], [1.0]]))
    return bool(np.all(np.abs(roots) > 1.0))


def _css_residuals(w: np.ndarray, c: float, ar: np.ndarray, ma: np.ndarray,
                   start: int) -> np.ndarray:
    p = len(ar)
    u = w[start:] - c
    for j in range(1, p + 1):
        u = u - ar[j - 1] * w[start - j:len(w) - j]
    if len(ma):
        u = signal.lfilter([1.0], np.concatenate([[1.0], ma]), u)
    return u


def fit_arima(series: Sequence[float], p: int, d: int, q: int, *,
              include_constant: bool | None = None, start: int | None = None,
              n_starts: int = 6, seed: int = 0) -> ArimaModel:
    """Fit ARIMA(p, d, q) by conditional sum of squares.

    The constant is included by default only when d == 0, so differenced
    models carry no drift. `start` sets the first conditioned index of the
    differenced series (default p); order selection passes a common value
    so AIC compares equal samples.
    """
    if min(p, d, q) < 0:
        raise ValueError("orders must be non-negative")
    y = np.asarray(series, dtype=float)
    if len(y) < p + q + d + 10:
        raise ValueError(f"series of length {len(y)} too short for ARIMA({p},{d},{q})")
    if include_constant is None:
        include_constant = d == 0
    start = p if start is None else start
    if start < p:
        raise ValueError("start must be >= p")
    w = difference(y, d)

    # work on a standardised copy so starts and simplex steps are O(1)
    m = float(w.mean()) if include_constant else 0.0
    s = float(np.std(w - m)) or float(np.abs(w).max()) or 1.0
    z = (w - m) / s

    def unpack(theta):
        c = theta[0] if include_constant else 0.0
        off = int(include_constant)
        ar = _pacs_to_poly(theta[off:off + p])
        ma = -_pacs_to_poly(theta[off + p:off + p + q])
        return c, ar, ma

    def loss(theta):
        c, ar, ma = unpack(theta)
        e = _css_residuals(z, c, ar, ma, start)
        return float(e @ e)

    dim = int(include_constant) + p + q
    if dim == 0:
        best = np.zeros(0)
    else:
        rng = np.random.default_rng(seed)
        starts = [np.zeros(dim)] + [rng.normal(0.0, 0.5, dim) for _ in range(n_starts - 1)]
        results = []
        for x0 in starts:
            res = optimize.minimize(loss, x0, method="Nelder-Mead",
                                    options={"xatol": 1e-8, "fatol": 1e-12,
                                             "maxiter": 4000 * dim, "maxfev": 8000 * dim})
            results.append(res)
        ok = [r for r in results if r.success and np.isfinite(r.fun)]
        if not ok:
            raise ArimaConvergenceError(f"no start converged for ARIMA({p},{d},{q})")
        best = min(ok, key=lambda r: r.fun).x  # min() keeps the first of equal losses

    c_z, ar, ma = unpack(best)
    c = s * c_z + m * (1.0 - ar.sum())
    e = _css_residuals(w, c, ar, ma, start)
    resid = np.zeros(len(w))
    resid[start:] = e
    return ArimaModel(p=p, d=d, q=q, constant=float(c) if include_constant else 0.0,
                      ar_coeffs=tuple(float(v) for v in ar),
                      ma_coeffs=tuple(float(v) for v in ma),
                      residual_variance=float(e @ e / len(e)),
                      series=y, differenced=w, residuals=resid, start=start,
                      include_constant=include_constant)


@dataclass(frozen=True)
class OrderSelection:
    p: int
    q: int
    criterion: str
    scores: dict
    acf: np.ndarray
    pacf: np.ndarray
    band: float

    @property
    def orders(self) -> tuple[int, int]:
        return self.p, self.q


def select_orders(series: Sequence[float], d: int, max_order: int = 3, *,
                  criterion: str = "bic", diag_lags: int = 20, seed: int = 0) -> OrderSelection:
    """Information-criterion grid search over p, q in [0, max_order].

    Every candidate is conditioned on the same first `max_order` points so
    the scores compare equal samples. `criterion` is "bic" or "aic".
    """
    if criterion not in ("aic", "bic"):
        raise ValueError("criterion must be 'aic' or 'bic'")
    w = difference(series, d)
    lags = min(diag_lags, len(w) - 1)
    table = {}
    for p in range(max_order + 1):
        for q in range(max_order + 1):
            try:
                model = fit_arima(series, p, d, q, start=max_order, seed=seed)
            except (ArimaConvergenceError, ValueError):
                continue
            table[(p, q)] = getattr(model, criterion)
    if not table:
        raise ArimaConvergenceError("no candidate model converged")
    # ties resolved toward the smaller model
    p, q = min(table, key=lambda k: (table[k], k[0] + k[1], k))
    return OrderSelection(p=p, q=q, criterion=criterion, scores=table,
                          acf=acf(w, lags), pacf=pacf(w, lags),
                          band=1.96 / math.sqrt(len(w)))


def ljung_box(residuals: Sequence[float], lags: int, n_params: int = 0) -> float:
    """Ljung-Box p-value with lags - n_params degrees of freedom."""
    e = np.asarray(residuals, dtype=float)
    n = len(e)
    if n <= lags:
        raise ValueError("need more residuals than lags")
    df = lags - n_params
    if df < 1:
        raise ValueError("lags must exceed the number of fitted parameters")
    dev = e - e.mean()
    denom = dev @ dev
    if denom == 0:
        raise ValueError("degenerate residuals: zero variance")
    r = np.array([dev[k:] @ dev[:n - k] / denom for k in range(1, lags + 1)])
    q_stat = n * (n + 2) * np.sum(r ** 2 / (n - np.arange(1, lags + 1)))
    return float(stats.chi2.sf(q_stat, df))


def forecast(model: ArimaModel, horizon: int) -> np.ndarray:
    """Iterated forecasts 1..horizon steps ahead on the original scale."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    w = list(model.differenced)
    e = list(model.residuals)
    for _ in range(horizon):
        nxt = model.constant
        nxt += sum(g * w[-j] for j, g in enumerate(model.ar_coeffs, start=1))
        nxt += sum(t * e[-j] for j, t in enumerate(model.ma_coeffs, start=1))
        w.append(nxt)
        e.append(0.0)
    out = np.asarray(w[len(model.differenced):])
    for k in reversed(range(model.d)):
        last = difference(model.series, k)[-1]
        out = last + np.cumsum(out)
    return out


def interval_from_len(point: float, rel_len: float) -> ForecastInterval:
    return ForecastInterval(point=point, len=rel_len,
                            lower=point * (1 - rel_len), upper=point * (1 + rel_len))


def prediction_interval(point: float, recent_true: Sequence[float],
                        recent_pred: Sequence[float]) -> ForecastInterval:
    """Interval point*(1 +- len), len = mean of |true - pred| / true."""
    r = np.asarray(recent_true, dtype=float)
    p = np.asarray(recent_pred, dtype=float)
    if len(r) != len(p) or not len(r):
        raise ValueError("recent_true and recent_pred must be aligned and non-empty")
    if np.any(r <= 0):
        raise ValueError("true values must be positive")
    return interval_from_len(point, float(np.mean(np.abs(r - p) / r)))


def with_leading_coefficient(model: ArimaModel, value: float) -> ArimaModel:
    if model.q:
        ma = (value, *model.ma_coeffs[1:])
        if not _is_stable(-np.asarray(ma)):
            raise ValueError(f"MA coefficient {value} violates invertibility")
        return replace(model, ma_coeffs=ma)
    if model.p:
        ar = (value, *model.ar_coeffs[1:])
        if not _is_stable(ar):
            raise ValueError(f"AR coefficient {value} violates stationarity")
        return replace(model, ar_coeffs=ar)
    raise ValueError("model has no AR or MA coefficient to vary")


def sensitivity_sweep(model: ArimaModel, coefficient_values: Sequence[float],
                      horizon: int) -> list[tuple[float, float]]:
    """Forecast at `horizon` with the leading MA (else AR) coefficient replaced."""
    if not model.p and not model.q:
        raise ValueError("model has no AR or MA coefficient to vary")
    return [(float(v), float(forecast(with_leading_coefficient(model, v), horizon)[-1]))
            for v in coefficient_values]
