"""Seasonal ARIMA: differencing, conditional-likelihood fitting, forecasting, order search.

The model for the differenced series ``w`` is the multiplicative form

    phi(B) Phi(B^m) (w_t - mu) = theta(B) Theta(B^m) e_t

with ``phi(B) = 1 - phi_1 B - ...`` and ``theta(B) = 1 + theta_1 B + ...``.
The reported intercept is ``c = mu * phi(1) * Phi(1)``, so that
``w_t = c + sum(AR terms) + sum(MA terms) + e_t``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from loadcast._kvfile import indexed, read_kv, write_kv
from loadcast._validation import check_positive_int, check_series
from loadcast.exceptions import (
    FitDiverged,
    InsufficientData,
    InvalidOrder,
    InvalidSpacing,
    NoFeasibleModel,
)

__all__ = [
    "DEFAULT_ORDER",
    "GRID_SEARCH_ORDER",
    "SarimaOrder",
    "SarimaModel",
    "season_length",
    "difference",
    "undifference",
    "fit",
    "forecast",
    "aic",
    "grid_search",
    "auto_tune",
    "save_model",
    "load_model",
    "SarimaForecaster",
]

# (p, d, q, P, D, Q); the shipped default and the order a 0..3 AIC grid picked
DEFAULT_ORDER = (1, 0, 1, 3, 0, 3)
GRID_SEARCH_ORDER = (1, 0, 1, 2, 0, 1)

ROOT_TOL = 1e-6
MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class SarimaOrder:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    m: int = 1

    def __post_init__(self):
        for name in ("p", "d", "q", "P", "D", "Q"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 0:
                raise InvalidOrder(f"{name} must be a non-negative integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if isinstance(self.m, bool) or int(self.m) != self.m or self.m < 1:
            raise InvalidOrder(f"m must be a positive integer, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        if (self.P or self.Q or self.D) and self.m < 2:
            raise InvalidOrder("seasonal terms need m >= 2")
        if self.d + self.D > 2:
            raise InvalidOrder(f"d + D = {self.d + self.D} over-differences (max 2)")

    @classmethod
    def from_tuple(cls, order, m=1):
        """Build from ``(p, d, q, P, D, Q)`` or ``(p, d, q, P, D, Q, m)``."""
        order = tuple(order)
        if len(order) == 7:
            return cls(*order)
        if len(order) == 6:
            return cls(*order, m=m)
        if len(order) == 3:
            return cls(*order, m=m)
        raise InvalidOrder(f"order must have 3, 6 or 7 entries, got {order!r}")

    def as_tuple(self):
        return (self.p, self.d, self.q, self.P, self.D, self.Q, self.m)

    @property
    def n_coef(self):
        return self.p + self.q + self.P + self.Q

    @property
    def n_diff(self):
        """Observations consumed by differencing."""
        return self.d + self.D * self.m

    @property
    def ar_span(self):
        return self.p + self.P * self.m

    @property
    def ma_span(self):
        return self.q + self.Q * self.m

    def __str__(self):
        return f"SARIMA({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})[{self.m}]"


@dataclass(frozen=True, eq=False)
class SarimaModel:
    """Fitted coefficients plus the trailing state needed to forecast.

    ``tail`` holds the last ``d + D*m + p + P*m`` raw observations and
    ``resid`` the last ``q + Q*m`` in-sample residuals.
    """

    order: SarimaOrder
    intercept: float
    ar: np.ndarray
    ma: np.ndarray
    seasonal_ar: np.ndarray
    seasonal_ma: np.ndarray
    noise_variance: float
    loglike: float
    tail: np.ndarray
    resid: np.ndarray
    nobs: int = 0
    extras: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        o = self.order
        for name, size in (
            ("ar", o.p),
            ("ma", o.q),
            ("seasonal_ar", o.P),
            ("seasonal_ma", o.Q),
        ):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.size != size:
                raise InvalidOrder(f"{name} has {arr.size} coefficients, order needs {size}")
            object.__setattr__(self, name, arr)
        tail = np.asarray(self.tail, dtype=np.float64).reshape(-1)
        resid = np.asarray(self.resid, dtype=np.float64).reshape(-1)
        if tail.size < o.n_diff + o.ar_span:
            raise InsufficientData(
                f"tail needs {o.n_diff + o.ar_span} observations, got {tail.size}"
            )
        if resid.size < o.ma_span:
            raise InsufficientData(f"resid needs {o.ma_span} values, got {resid.size}")
        object.__setattr__(self, "tail", tail)
        object.__setattr__(self, "resid", resid)
        if not self.noise_variance > 0:
            raise ValueError(f"noise_variance must be positive, got {self.noise_variance}")

    @classmethod
    def from_coefficients(
        cls,
        order,
        *,
        intercept=0.0,
        ar=(),
        ma=(),
        seasonal_ar=(),
        seasonal_ma=(),
        tail=(),
        resid=None,
        noise_variance=1.0,
    ):
        """Hand-built model; missing residual history is taken as zero."""
        order = order if isinstance(order, SarimaOrder) else SarimaOrder.from_tuple(order)
        if resid is None:
            resid = np.zeros(order.ma_span)
        return cls(
            order=order,
            intercept=float(intercept),
            ar=ar,
            ma=ma,
            seasonal_ar=seasonal_ar,
            seasonal_ma=seasonal_ma,
            noise_variance=float(noise_variance),
            loglike=float("nan"),
            tail=tail,
            resid=resid,
        )

    @property
    def ar_polynomial(self):
        """Full AR lag polynomial ``phi(B) Phi(B^m)``, constant term first."""
        return np.convolve(
            _lag_poly(self.ar, 1, -1.0), _lag_poly(self.seasonal_ar, self.order.m, -1.0)
        )

    @property
    def ma_polynomial(self):
        return np.convolve(
            _lag_poly(self.ma, 1, 1.0), _lag_poly(self.seasonal_ma, self.order.m, 1.0)
        )

    @property
    def mean(self):
        """Process mean of the differenced series."""
        return self.intercept / self.ar_polynomial.sum()

    def satisfies_root_conditions(self, tol=ROOT_TOL):
        return (
            _roots_outside(self.ar, -1.0, tol)
            and _roots_outside(self.seasonal_ar, -1.0, tol)
            and _roots_outside(self.ma, 1.0, tol)
            and _roots_outside(self.seasonal_ma, 1.0, tol)
        )


def _lag_poly(coefs, step, sign):
    coefs = np.asarray(coefs, dtype=np.float64)
    out = np.zeros(step * coefs.size + 1)
    out[0] = 1.0
    out[step::step] = sign * coefs
    return out


def _roots_outside(coefs, sign, tol=ROOT_TOL):
    """True if every root of ``1 + sign*(c_1 z + ... + c_k z^k)`` has modulus > 1 + tol.

    Schur-Cohn step-down on the polynomial rescaled to radius ``1 + tol``:
    the roots lie outside that circle iff every reflection coefficient
    has magnitude below one.
    """
    k = len(coefs)
    if k == 0:
        return True
    r = 1.0 + tol
    # AR convention x_t = sum phi_j x_{t-j}, i.e. polynomial 1 - sum phi_j z^j
    phi = [-sign * float(c) * r ** (j + 1) for j, c in enumerate(coefs)]
    if not all(math.isfinite(v) for v in phi):
        return False
    while k:
        kappa = phi[k - 1]
        if abs(kappa) >= 1.0:
            return False
        denom = 1.0 - kappa * kappa
        phi = [(phi[j] + kappa * phi[k - 2 - j]) / denom for j in range(k - 1)]
        k -= 1
    return True


def season_length(spacing_minutes):
    """Points per day at the given spacing."""
    if not spacing_minutes > 0:
        raise InvalidSpacing(f"spacing must be positive, got {spacing_minutes}")
    m = MINUTES_PER_DAY / spacing_minutes
    rounded = round(m)
    if rounded < 1 or abs(m - rounded) > 1e-9 * max(1.0, m):
        raise InvalidSpacing(f"spacing {spacing_minutes} min does not divide a day")
    return int(rounded)


def _diff_poly(d, D, m):
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    seasonal = np.zeros(m + 1)
    seasonal[0], seasonal[m] = 1.0, -1.0
    for _ in range(D):
        poly = np.convolve(poly, seasonal)
    return poly


def difference(values, d=0, D=0, m=1):
    """Apply ``(1 - B)^d (1 - B^m)^D``; the output is ``d + D*m`` points shorter."""
    y = check_series(values)
    if y.size <= d + D * m:
        raise InsufficientData(f"length {y.size} <= d + D*m = {d + D * m}")
    for _ in range(D):
        y = y[m:] - y[:-m]
    for _ in range(d):
        y = np.diff(y)
    return y


def undifference(diffed, initial, d=0, D=0, m=1):
    """Invert :func:`difference` given the first ``d + D*m`` original values."""
    diffed = np.asarray(diffed, dtype=np.float64)
    initial = np.asarray(initial, dtype=np.float64)
    n0 = d + D * m
    if initial.size != n0:
        raise InsufficientData(f"need exactly {n0} initial values, got {initial.size}")
    return _integrate(diffed, initial, _diff_poly(d, D, m))


def _integrate(w, history, dpoly):
    """Extend ``history`` so that ``dpoly(B) y_t = w_t`` for each new point."""
    k = dpoly.size - 1
    out = np.empty(history.size + w.size)
    out[: history.size] = history
    if k == 0:
        out[history.size :] = w
        return out
    back = dpoly[1:]
    for j in range(w.size):
        t = history.size + j
        out[t] = w[j] - back @ out[t - 1 : t - k - 1 if t - k - 1 >= 0 else None : -1]
    return out


def _unpack(x, order):
    p, q, P = order.p, order.q, order.P
    return x[:p], x[p : p + q], x[p + q : p + q + P], x[p + q + P :]


def _css_residuals(z, ar, ma, sar, sma, m):
    a = np.convolve(_lag_poly(ar, 1, -1.0), _lag_poly(sar, m, -1.0))
    b = np.convolve(_lag_poly(ma, 1, 1.0), _lag_poly(sma, m, 1.0))
    # zero filter state = pre-sample deviations and shocks both zero
    return lfilter(a, b, z)


def _neg_loglike(x, z, order):
    ar, ma, sar, sma = _unpack(x, order)
    if not (
        _roots_outside(ar, -1.0)
        and _roots_outside(sar, -1.0)
        and _roots_outside(ma, 1.0)
        and _roots_outside(sma, 1.0)
    ):
        return np.inf
    e = _css_residuals(z, ar, ma, sar, sma, order.m)
    s2 = float(e @ e) / z.size
    if not (s2 > 0 and math.isfinite(s2)):
        return np.inf
    return 0.5 * z.size * (math.log(2.0 * math.pi * s2) + 1.0)


def _acf(z, lag):
    if lag >= z.size:
        return 0.0
    return float(z[lag:] @ z[:-lag] / (z @ z)) if z @ z > 0 else 0.0


def _starting_points(z, order):
    k = order.n_coef
    starts = [np.zeros(k), np.full(k, 0.1)]
    informed = np.zeros(k)
    if order.p:
        informed[0] = np.clip(_acf(z, 1), -0.9, 0.9)
    if order.P:
        informed[order.p + order.q] = np.clip(_acf(z, order.m), -0.9, 0.9)
    starts.append(informed)
    return starts


def _initial_simplex(x0, step=0.1):
    k = x0.size
    simplex = np.tile(x0, (k + 1, 1))
    for i in range(k):
        simplex[i + 1, i] += step if x0[i] + step < 0.95 else -step
    return simplex


def fit(series, order, maxfev=None):
    """Fit a SARIMA model by conditional maximum likelihood.

    Residuals come from the SARMA recursion on the differenced,
    mean-adjusted series with pre-sample values at the mean and
    pre-sample shocks at zero. The noise variance is profiled out as the
    mean squared residual. Coefficients are found by Nelder-Mead restarted
    from three deterministic points; candidates breaking stationarity or
    invertibility score +inf.

    Parameters
    ----------
    series : TimeSeries or array-like
    order : SarimaOrder or tuple
        A 7-tuple ``(p, d, q, P, D, Q, m)``.
    maxfev : int, optional
        Objective evaluations per restart; defaults to ``500 * (k + 1)``.

    Returns
    -------
    SarimaModel
    """
    order = order if isinstance(order, SarimaOrder) else SarimaOrder.from_tuple(order)
    y = check_series(series)
    if y.size <= order.n_diff:
        raise InsufficientData(f"length {y.size} <= d + D*m = {order.n_diff}")
    w = difference(y, order.d, order.D, order.m)
    k = order.n_coef
    if w.size < 10 * (k + 1):
        raise InsufficientData(
            f"{w.size} differenced points; {order} needs at least {10 * (k + 1)}"
        )
    mu = float(w.mean())
    z = w - mu

    if k == 0:
        best_x = np.zeros(0)
        best_f = _neg_loglike(best_x, z, order)
    else:
        maxfev = maxfev or 500 * (k + 1)
        best_x, best_f = None, np.inf
        for x0 in _starting_points(z, order):
            if not np.isfinite(_neg_loglike(x0, z, order)):
                continue
            res = minimize(
                _neg_loglike,
                x0,
                args=(z, order),
                method="Nelder-Mead",
                options={
                    "initial_simplex": _initial_simplex(x0),
                    "maxfev": maxfev,
                    "xatol": 1e-7,
                    "fatol": 1e-9,
                    "adaptive": k > 2,
                },
            )
            if res.fun < best_f:
                best_x, best_f = np.asarray(res.x), float(res.fun)
    if best_x is None or not np.isfinite(best_f):
        raise FitDiverged(f"no feasible parameters found for {order}")

    ar, ma, sar, sma = _unpack(best_x, order)
    e = _css_residuals(z, ar, ma, sar, sma, order.m)
    s2 = float(e @ e) / z.size
    ar_sum = _lag_poly(ar, 1, -1.0).sum() * _lag_poly(sar, order.m, -1.0).sum()
    n_tail = order.n_diff + order.ar_span
    model = SarimaModel(
        order=order,
        intercept=mu * ar_sum,
        ar=ar,
        ma=ma,
        seasonal_ar=sar,
        seasonal_ma=sma,
        noise_variance=s2,
        loglike=-best_f,
        tail=y[y.size - n_tail :] if n_tail else np.zeros(0),
        resid=e[e.size - order.ma_span :] if order.ma_span else np.zeros(0),
        nobs=int(z.size),
    )
    if not model.satisfies_root_conditions():
        raise FitDiverged(f"fitted {order} violates the root conditions")
    return model


def forecast(model, steps, clip=True):
    """Recursive point forecasts with future shocks set to zero.

    Differencing is undone against the stored tail; the result is clipped
    to [0, 100] only after all recursion, when ``clip`` is set.
    """
    steps = check_positive_int(steps, "steps")
    o = model.order
    a = model.ar_polynomial
    b = model.ma_polynomial
    mu = model.mean
    dpoly = _diff_poly(o.d, o.D, o.m)

    tail = model.tail
    z = np.empty(o.ar_span + steps)
    if o.ar_span:
        w_hist = difference(tail, o.d, o.D, o.m) if o.n_diff else tail
        z[: o.ar_span] = w_hist[w_hist.size - o.ar_span :] - mu
    e = np.zeros(o.ma_span + steps)
    e[: o.ma_span] = model.resid[model.resid.size - o.ma_span :]

    for j in range(steps):
        t_z = o.ar_span + j
        t_e = o.ma_span + j
        value = 0.0
        if o.ar_span:
            value -= a[1:] @ z[t_z - 1 :: -1][: o.ar_span]
        if o.ma_span:
            value += b[1:] @ e[t_e - 1 :: -1][: o.ma_span]
        z[t_z] = value

    w_future = z[o.ar_span :] + mu
    if o.n_diff:
        history = tail[tail.size - o.n_diff :]
        out = _integrate(w_future, history, dpoly)[o.n_diff :]
    else:
        out = w_future
    return np.clip(out, 0.0, 100.0) if clip else out


def aic(model):
    """``2k - 2 loglike`` with k counting the intercept and noise variance."""
    k = model.order.n_coef + 2
    return 2.0 * k - 2.0 * model.loglike


def _try_fit(y, order, maxfev):
    try:
        return fit(y, order, maxfev=maxfev)
    except (FitDiverged, InsufficientData):
        return None


def grid_search(series, max_order=3, m=1, d=0, D=0, jobs=1, maxfev=None):
    """Fit every order with p, q, P, Q in ``[0, max_order]``.

    Returns a dict mapping each :class:`SarimaOrder`, in lexicographic
    (p, q, P, Q) order, to its fitted model or None when the fit failed.
    Seasonal terms are only searched when ``m >= 2``.
    """
    if isinstance(max_order, bool) or int(max_order) != max_order or max_order < 0:
        raise ValueError(f"max_order must be a non-negative integer, got {max_order!r}")
    y = check_series(series)
    seasonal = range(max_order + 1) if m >= 2 else range(1)
    orders = [
        SarimaOrder(p, d, q, P, D, Q, m)
        for p, q, P, Q in itertools.product(
            range(max_order + 1), range(max_order + 1), seasonal, seasonal
        )
    ]
    if jobs == 1:
        models = [_try_fit(y, o, maxfev) for o in orders]
    else:
        from joblib import Parallel, delayed

        models = Parallel(n_jobs=jobs)(delayed(_try_fit)(y, o, maxfev) for o in orders)
    return dict(zip(orders, models))


def auto_tune(series, max_order=3, m=1, d=0, D=0, jobs=1, maxfev=None):
    """Minimum-AIC order over the grid; ties go to the lexicographically first."""
    results = grid_search(series, max_order, m, d, D, jobs, maxfev)
    best = None
    for order, model in results.items():
        if model is None:
            continue
        if best is None or aic(model) < aic(best[1]):
            best = (order, model)
    if best is None:
        raise NoFeasibleModel(f"all {len(results)} candidate orders failed to fit")
    return best


def save_model(model, path):
    o = model.order
    items = [(name, getattr(o, name)) for name in ("p", "d", "q", "P", "D", "Q", "m")]
    items += [
        ("c", float(model.intercept)),
        ("sigma2", float(model.noise_variance)),
        ("loglike", float(model.loglike)),
        ("nobs", model.nobs),
    ]
    for key, arr in (
        ("ar", model.ar),
        ("ma", model.ma),
        ("sar", model.seasonal_ar),
        ("sma", model.seasonal_ma),
        ("tail", model.tail),
        ("resid", model.resid),
    ):
        items += [(f"{key}.{i}", float(v)) for i, v in enumerate(arr)]
    write_kv(path, items)


def load_model(path):
    kv = read_kv(path)
    order = SarimaOrder(*(int(kv[name]) for name in ("p", "d", "q", "P", "D", "Q", "m")))
    return SarimaModel(
        order=order,
        intercept=float(kv["c"]),
        ar=indexed(kv, "ar"),
        ma=indexed(kv, "ma"),
        seasonal_ar=indexed(kv, "sar"),
        seasonal_ma=indexed(kv, "sma"),
        noise_variance=float(kv["sigma2"]),
        loglike=float(kv.get("loglike", "nan")),
        tail=indexed(kv, "tail"),
        resid=indexed(kv, "resid"),
        nobs=int(kv.get("nobs", 0)),
    )


class SarimaForecaster(BaseEstimator):
    """Seasonal ARIMA forecaster with an sklearn-style interface.

    Parameters
    ----------
    order : tuple, default=(1, 0, 1, 3, 0, 3)
        ``(p, d, q, P, D, Q)``. Ignored when ``auto`` is set.
    seasonal_period : int, optional
        Season length ``m``. When None, it is derived from the spacing of
        a :class:`~loadcast.series.TimeSeries` passed to ``fit`` as points
        per day.
    auto : bool, default=False
        Pick ``p, q, P, Q`` by AIC grid search with ``d`` and ``D`` taken
        from ``order``.
    max_order : int, default=3
        Upper bound of the grid search.
    clip : bool, default=True
        Clip forecasts to [0, 100].
    maxfev : int, optional
        Objective evaluations per optimizer restart.
    n_jobs : int, default=1
        Parallel workers for the grid search.

    Attributes
    ----------
    model_ : SarimaModel
    order_ : SarimaOrder
    """

    def __init__(
        self,
        order=DEFAULT_ORDER,
        seasonal_period=None,
        auto=False,
        max_order=3,
        clip=True,
        maxfev=None,
        n_jobs=1,
    ):
        self.order = order
        self.seasonal_period = seasonal_period
        self.auto = auto
        self.max_order = max_order
        self.clip = clip
        self.maxfev = maxfev
        self.n_jobs = n_jobs

    def _resolve_m(self, y):
        if self.seasonal_period is not None:
            return int(self.seasonal_period)
        spacing = getattr(y, "spacing_minutes", None)
        if spacing is None:
            raise ValueError("seasonal_period is required for plain arrays")
        return season_length(spacing)

    def fit(self, y, X=None):
        m = self._resolve_m(y)
        values = check_series(y)
        base = SarimaOrder.from_tuple(self.order, m=m)
        if self.auto:
            self.order_, self.model_ = auto_tune(
                values, self.max_order, m, base.d, base.D, self.n_jobs, self.maxfev
            )
        else:
            self.order_ = base
            self.model_ = fit(values, base, maxfev=self.maxfev)
        return self

    def predict(self, steps=1):
        check_is_fitted(self, "model_")
        return forecast(self.model_, steps, clip=self.clip)

    @property
    def aic_(self):
        check_is_fitted(self, "model_")
        return aic(self.model_)
