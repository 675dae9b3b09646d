"""Point-forecast accuracy metrics: MAE, RMSE and MAPE (as a ratio)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from loadcast.exceptions import ShapeError, UndefinedMetric, ZeroActual

__all__ = ["MetricSet", "mae", "rmse", "mape", "metric_set"]


@dataclass(frozen=True)
class MetricSet:
    """Scores for one forecast. ``mape`` is NaN when every actual was zero."""

    mae: float
    mape: float
    rmse: float
    n: int
    mape_excluded: int = 0

    @property
    def mape_defined(self):
        return not math.isnan(self.mape)


def _pair(pred, actual):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    if pred.shape != actual.shape:
        raise ShapeError(f"prediction length {pred.size} != actual length {actual.size}")
    if pred.size == 0:
        raise ShapeError("cannot score an empty forecast")
    return pred, actual


def mae(pred, actual):
    pred, actual = _pair(pred, actual)
    return float(np.mean(np.abs(pred - actual)))


def rmse(pred, actual):
    pred, actual = _pair(pred, actual)
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def mape(pred, actual, zero_policy="exclude"):
    """Mean of ``|pred - actual| / actual`` over non-zero actuals.

    Returns ``(value, excluded)`` where ``excluded`` counts skipped zero
    actuals. With ``zero_policy="error"`` any zero actual raises
    :class:`ZeroActual` instead.
    """
    pred, actual = _pair(pred, actual)
    zero = actual == 0.0
    excluded = int(zero.sum())
    if zero_policy == "error":
        if excluded:
            raise ZeroActual(f"{excluded} actual values are zero")
    elif zero_policy != "exclude":
        raise ValueError(f"zero_policy must be 'exclude' or 'error', got {zero_policy!r}")
    if excluded == actual.size:
        raise UndefinedMetric("every actual value is zero")
    keep = ~zero
    return float(np.mean(np.abs(pred[keep] - actual[keep]) / np.abs(actual[keep]))), excluded


def metric_set(pred, actual, zero_policy="exclude"):
    pred, actual = _pair(pred, actual)
    try:
        mape_value, excluded = mape(pred, actual, zero_policy)
    except UndefinedMetric:
        mape_value, excluded = float("nan"), actual.size
    return MetricSet(
        mae=mae(pred, actual),
        mape=mape_value,
        rmse=rmse(pred, actual),
        n=int(actual.size),
        mape_excluded=excluded,
    )
