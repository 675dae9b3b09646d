"""Input validation helpers shared by the estimators."""

from numbers import Integral, Real

import numpy as np
from sklearn.utils.validation import check_array

from loadcast.exceptions import InsufficientData, ShapeError


def check_series(y, name="y", min_length=1):
    """Coerce ``y`` to a finite 1-D float64 array.

    Accepts lists, 1-D arrays, single-column 2-D arrays and
    :class:`~loadcast.series.TimeSeries` instances.
    """
    values = getattr(y, "values", y)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise InsufficientData(
            f"{name} needs at least {min_length} values, got {arr.size}"
        )
    arr = check_array(arr, ensure_2d=False, dtype=np.float64, input_name=name)
    return arr


def check_windows(X, y=None, n_features=None):
    """Validate a batch of sliding windows shaped (n, w, d).

    A 2-D ``X`` is read as univariate windows and gains a trailing axis.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, :, None]
    if X.ndim != 3:
        raise ShapeError(f"windows must be 2-D or 3-D, got shape {X.shape}")
    if n_features is not None and X.shape[2] != n_features:
        raise ShapeError(f"expected {n_features} input channels, got {X.shape[2]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("windows contain NaN or infinity")
    if y is None:
        return X
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != X.shape[0]:
        raise ShapeError(f"targets shape {y.shape} does not match windows {X.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain NaN or infinity")
    return X, y


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_fraction(value, name, low=0.0, high=1.0, closed_low=False):
    if not isinstance(value, Real):
        raise TypeError(f"{name} must be a real number")
    ok = (value >= low if closed_low else value > low) and value < high
    if not ok:
        bracket = "[" if closed_low else "("
        raise ValueError(f"{name} must lie in {bracket}{low}, {high}), got {value}")
    return float(value)
