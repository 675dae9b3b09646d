"""Trace diagnostics: collection statistics, KPSS level test, additive decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from loadcast._validation import check_positive_int, check_series
from loadcast.exceptions import DegenerateSeries, EmptyCollection, InsufficientData

__all__ = [
    "KPSS_CRITICAL_VALUES",
    "KpssResult",
    "Decomposition",
    "CollectionStats",
    "collection_stats",
    "default_kpss_lag",
    "kpss_level",
    "decompose",
]

# level-stationarity table, keyed by significance level
KPSS_CRITICAL_VALUES = {0.10: 0.347, 0.05: 0.463, 0.025: 0.574, 0.01: 0.739}


@dataclass(frozen=True)
class KpssResult:
    statistic: float
    lag_truncation: int
    critical_values: dict
    stationary_at_5pct: bool

    def stationary_at(self, level):
        return self.statistic < self.critical_values[level]


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Additive split ``observed = trend + seasonal + residual``.

    ``trend`` and ``residual`` are NaN for the first and last
    ``period // 2`` positions, where the centred average is undefined.
    """

    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    @property
    def defined(self):
        return ~np.isnan(self.trend)

    def rows(self):
        """Yield ``(t, observed, trend, seasonal, residual)`` with None for absent values."""
        for t in range(self.observed.size):
            trend = self.trend[t]
            resid = self.residual[t]
            yield (
                t,
                float(self.observed[t]),
                None if math.isnan(trend) else float(trend),
                float(self.seasonal[t]),
                None if math.isnan(resid) else float(resid),
            )


@dataclass(frozen=True)
class CollectionStats:
    per_trace_mean: dict
    per_trace_std: dict
    mean_of_means: float
    std_of_means: float
    std_of_stds: float


def collection_stats(traces):
    """Per-trace and across-trace summaries, using population standard deviations."""
    traces = list(traces)
    if not traces:
        raise EmptyCollection("collection_stats needs at least one trace")
    means = {tr.id: float(np.mean(tr.values)) for tr in traces}
    stds = {tr.id: float(np.std(tr.values)) for tr in traces}
    m = np.fromiter(means.values(), dtype=np.float64)
    s = np.fromiter(stds.values(), dtype=np.float64)
    return CollectionStats(
        per_trace_mean=means,
        per_trace_std=stds,
        mean_of_means=float(m.mean()),
        std_of_means=float(m.std()),
        std_of_stds=float(s.std()),
    )


def default_kpss_lag(n):
    """Bartlett truncation ``floor(12 * (n / 100) ** 0.25)``."""
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def kpss_level(series, lag_truncation=None):
    """KPSS test of the level-stationarity null.

    Parameters
    ----------
    series : TimeSeries or array-like
        At least 10 observations.
    lag_truncation : int, optional
        Bartlett-kernel truncation for the long-run variance. Defaults to
        :func:`default_kpss_lag`.

    Returns
    -------
    KpssResult
        Large statistics reject stationarity.

    Raises
    ------
    DegenerateSeries
        If the series is constant, so the long-run variance is zero.
    """
    y = check_series(series, min_length=10)
    n = y.size
    if np.ptp(y) == 0.0:
        raise DegenerateSeries("constant series has zero long-run variance")
    lag = default_kpss_lag(n) if lag_truncation is None else int(lag_truncation)
    if not 0 <= lag < n:
        raise ValueError(f"lag_truncation must lie in [0, {n}), got {lag}")

    resid = y - y.mean()
    partial = np.cumsum(resid)
    lrv = resid @ resid
    for s in range(1, lag + 1):
        lrv += 2.0 * (1.0 - s / (lag + 1.0)) * (resid[s:] @ resid[:-s])
    lrv /= n
    if lrv <= 0.0:
        raise DegenerateSeries("long-run variance estimate is not positive")
    stat = float((partial @ partial) / (n * n) / lrv)
    return KpssResult(
        statistic=stat,
        lag_truncation=lag,
        critical_values=dict(KPSS_CRITICAL_VALUES),
        stationary_at_5pct=stat < KPSS_CRITICAL_VALUES[0.05],
    )


def decompose(series, period):
    """Classical additive decomposition by centred moving average.

    Even periods use the 2 x period filter (half weights at both ends).
    Seasonal effects are per-phase means of the detrended series,
    shifted to sum to zero over one period.
    """
    period = check_positive_int(period, "period")
    y = check_series(series)
    n = y.size
    if n < 2 * period:
        raise InsufficientData(f"need at least 2 * period = {2 * period} points, got {n}")

    if period % 2:
        weights = np.full(period, 1.0 / period)
    else:
        weights = np.r_[0.5, np.ones(period - 1), 0.5] / period
    half = period // 2
    trend = np.full(n, np.nan)
    trend[half : n - half] = np.convolve(y, weights, mode="valid")

    detrended = y - trend
    phase = np.arange(n) % period
    effects = np.array([np.nanmean(detrended[phase == k]) for k in range(period)])
    effects -= effects.mean()
    seasonal = effects[phase]
    residual = y - trend - seasonal
    return Decomposition(
        observed=y.copy(), trend=trend, seasonal=seasonal, residual=residual, period=period
    )
