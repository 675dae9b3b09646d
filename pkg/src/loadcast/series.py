"""Trace data model: ingestion, resampling, splitting and sliding windows."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin

from loadcast._validation import check_fraction, check_positive_int, check_series
from loadcast.exceptions import (
    ChannelMismatch,
    EmptyTrace,
    InsufficientData,
    InvalidKind,
    InvalidSplit,
    OutOfRange,
    ShapeError,
    UngriddedData,
)

__all__ = [
    "TimeSeries",
    "WindowSet",
    "SplitSpec",
    "Split",
    "load_csv",
    "write_csv",
    "resample_mean",
    "split",
    "sliding_windows",
    "multichannel_windows",
    "generate_synthetic",
    "synthetic_suite",
    "DEFAULT_SUITE",
    "SYNTHETIC_KINDS",
    "MeanResampler",
    "SlidingWindows",
]

# t values at or above this are read as epoch seconds, below it as a row index
EPOCH_THRESHOLD = 1e8

SYNTHETIC_KINDS = ("seasonal", "onoff", "bursty", "noisy", "constant")

DEFAULT_SUITE = (
    ("seasonal", 20),
    ("onoff", 10),
    ("noisy", 10),
    ("bursty", 5),
    ("constant", 5),
)


def _frozen(values):
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A uniformly spaced CPU-usage trace with values in [0, 100]."""

    id: str
    spacing_minutes: float
    values: np.ndarray
    origin_timestamp: float | None = None

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise ShapeError(f"values must be one-dimensional, got {values.shape}")
        if values.size == 0:
            raise EmptyTrace(f"trace {self.id!r} has no values")
        if not np.all(np.isfinite(values)):
            raise OutOfRange(f"trace {self.id!r} contains non-finite values")
        bad = np.flatnonzero((values < 0.0) | (values > 100.0))
        if bad.size:
            raise OutOfRange(
                f"trace {self.id!r}: value {values[bad[0]]} at index {bad[0]} "
                "outside [0, 100]"
            )
        if not (self.spacing_minutes > 0 and math.isfinite(self.spacing_minutes)):
            raise UngriddedData(f"spacing_minutes must be positive, got {self.spacing_minutes}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing_minutes", float(self.spacing_minutes))

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def with_values(self, values, id=None, spacing_minutes=None, origin_timestamp=None):
        return TimeSeries(
            id=self.id if id is None else id,
            spacing_minutes=self.spacing_minutes if spacing_minutes is None else spacing_minutes,
            values=values,
            origin_timestamp=(
                self.origin_timestamp if origin_timestamp is None else origin_timestamp
            ),
        )


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Stride-1 supervised pairs cut from one series.

    ``inputs`` has shape (n, w) for univariate sets and (n, w, channels)
    for multichannel ones; ``targets`` always has shape (n, h).
    """

    input_width: int
    horizon: int
    inputs: np.ndarray
    targets: np.ndarray
    source_id: str = ""

    def __len__(self):
        return self.targets.shape[0]

    @property
    def pairs(self):
        return list(zip(self.inputs, self.targets))

    @property
    def n_channels(self):
        return 1 if self.inputs.ndim == 2 else self.inputs.shape[2]

    def as_arrays(self):
        """Return ``(X, Y)`` with X shaped (n, w, channels)."""
        X = self.inputs if self.inputs.ndim == 3 else self.inputs[:, :, None]
        return X, self.targets


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    short_term_points: int = 3

    def __post_init__(self):
        check_fraction(self.test_fraction, "test_fraction")
        check_positive_int(self.short_term_points, "short_term_points")

    def long_test_length(self, n):
        # guard against 0.29 * 100 == 28.999999999999996
        return int(math.floor(self.test_fraction * n + 1e-9))


class Split(NamedTuple):
    train: TimeSeries
    long_test: TimeSeries
    short_test: TimeSeries


def load_csv(path, id=None, index_spacing_minutes=1.0):
    """Read a ``t,value`` trace CSV into a validated :class:`TimeSeries`.

    ``t`` is either a row index or epoch seconds. Index columns are scaled
    by ``index_spacing_minutes`` per unit step; epoch columns are converted
    from seconds. Only uniformity of the gaps is enforced.
    """
    path = Path(path)
    ts, values = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and not _is_number(row[0]):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{lineno}: expected 't,value', got {row!r}")
            ts.append(float(row[0]))
            values.append(float(row[1]))
    if not values:
        raise EmptyTrace(f"{path} contains no observations")

    t = np.asarray(ts)
    epoch = t[0] >= EPOCH_THRESHOLD
    if t.size == 1:
        spacing = index_spacing_minutes
    else:
        gaps = np.diff(t)
        step = gaps[0]
        if step <= 0:
            raise UngriddedData(f"{path}: t must increase, first gap is {step}")
        bad = np.flatnonzero(np.abs(gaps - step) > 1e-9 * max(1.0, step))
        if bad.size:
            k = int(bad[0])
            raise UngriddedData(
                f"{path}: gap {gaps[k]} after row {k + 1} differs from first gap {step}"
            )
        spacing = step / 60.0 if epoch else step * index_spacing_minutes
    return TimeSeries(
        id=id if id is not None else path.stem,
        spacing_minutes=spacing,
        values=values,
        origin_timestamp=float(t[0]) if epoch else None,
    )


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def write_csv(series, path):
    """Write ``series`` in the ``t,value`` trace format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["t,value"]
    if series.origin_timestamp is not None:
        step = series.spacing_minutes * 60.0
        for k, v in enumerate(series.values):
            lines.append(f"{_fmt_t(series.origin_timestamp + k * step)},{float(v)!r}")
    else:
        for k, v in enumerate(series.values):
            lines.append(f"{k},{float(v)!r}")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


def _fmt_t(t):
    return str(int(t)) if float(t).is_integer() else repr(float(t))


def resample_mean(series, bin):
    """Average consecutive blocks of ``bin`` points; the trailing partial block is dropped."""
    bin = check_positive_int(bin, "bin")
    n = len(series)
    if bin > n:
        raise EmptyTrace(f"bin {bin} exceeds series length {n}")
    k = n // bin
    means = series.values[: k * bin].reshape(k, bin).mean(axis=1)
    return series.with_values(means, spacing_minutes=series.spacing_minutes * bin)


def split(series, spec=None):
    """Hold out the final ``test_fraction`` of the series.

    The short-term test set is the first ``short_term_points`` of the
    long-term test set, i.e. the hour right after the training boundary.
    """
    spec = spec or SplitSpec()
    n = len(series)
    n_test = spec.long_test_length(n)
    if n_test < 1:
        raise InvalidSplit(
            f"test_fraction {spec.test_fraction} of {n} points leaves an empty test set"
        )
    if n_test >= n:
        raise InvalidSplit("test set would consume the whole series")
    if spec.short_term_points > n - 1 or spec.short_term_points > n_test:
        raise InvalidSplit(
            f"short_term_points {spec.short_term_points} exceeds the {n_test}-point test set"
        )
    cut = n - n_test
    values = series.values
    train = series.with_values(values[:cut])
    origin = series.origin_timestamp
    test_origin = None if origin is None else origin + cut * series.spacing_minutes * 60.0
    long_test = series.with_values(values[cut:], origin_timestamp=test_origin)
    short_test = series.with_values(
        values[cut : cut + spec.short_term_points], origin_timestamp=test_origin
    )
    return Split(train, long_test, short_test)


def sliding_windows(series, w, h):
    """Stride-1 windows: input ``values[k:k+w]``, target ``values[k+w:k+w+h]``."""
    w = check_positive_int(w, "w")
    h = check_positive_int(h, "h")
    values = check_series(series)
    n = values.size
    if n < w + h:
        raise InsufficientData(f"need at least w + h = {w + h} points, got {n}")
    view = sliding_window_view(values, w + h)
    return WindowSet(
        input_width=w,
        horizon=h,
        inputs=np.array(view[:, :w]),
        targets=np.array(view[:, w:]),
        source_id=getattr(series, "id", ""),
    )


def multichannel_windows(channels, w, h, target_channel=0):
    """Windows whose steps carry every channel; targets come from one channel."""
    arrays = [check_series(c) for c in channels]
    if not arrays:
        raise ChannelMismatch("no channels supplied")
    lengths = {a.size for a in arrays}
    if len(lengths) != 1:
        raise ChannelMismatch(f"channel lengths differ: {sorted(lengths)}")
    if not 0 <= target_channel < len(arrays):
        raise ChannelMismatch(
            f"target_channel {target_channel} outside [0, {len(arrays)})"
        )
    stacked = np.stack(arrays, axis=1)
    n = stacked.shape[0]
    if n < w + h:
        raise InsufficientData(f"need at least w + h = {w + h} points, got {n}")
    view = sliding_window_view(stacked, w + h, axis=0)  # (n_win, C, w+h)
    inputs = np.ascontiguousarray(view[:, :, :w].transpose(0, 2, 1))
    targets = np.array(view[:, target_channel, w:])
    return WindowSet(w, h, inputs, targets, source_id=f"channel-{target_channel}")


def generate_synthetic(kind, length, period=None, seed=0, spacing_minutes=1.0, id=None):
    """Seeded synthetic CPU trace of one of the :data:`SYNTHETIC_KINDS`.

    ``period`` is the season (``seasonal``) or the switching/burst time
    scale (``onoff``, ``bursty``), in points. Output is clipped to [0, 100].
    """
    if kind not in SYNTHETIC_KINDS:
        raise InvalidKind(f"unknown kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    length = check_positive_int(length, "length")
    if period is None:
        if kind == "seasonal":
            raise InsufficientData("seasonal traces need a period")
        period = max(2, length // 10)
    period = check_positive_int(period, "period")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)

    if kind == "seasonal":
        if length < 2 * period:
            raise InsufficientData(f"seasonal length {length} < 2 * period {period}")
        level = rng.uniform(25.0, 55.0)
        amplitude = rng.uniform(10.0, 25.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        noise = rng.uniform(2.0, 6.0)
        values = level + amplitude * np.sin(2.0 * np.pi * t / period + phase)
        values += rng.normal(0.0, noise, length)
    elif kind == "onoff":
        low = rng.uniform(0.0, 5.0)
        high = rng.uniform(40.0, 90.0)
        values = np.empty(length)
        state = bool(rng.integers(2))
        pos = 0
        while pos < length:
            run = int(rng.integers(max(1, period // 4), period + 1))
            values[pos : pos + run] = high if state else low
            state = not state
            pos += run
        values += rng.normal(0.0, 1.0, length)
    elif kind == "bursty":
        baseline = rng.uniform(2.0, 10.0)
        values = baseline + rng.normal(0.0, 1.0, length)
        n_bursts = rng.poisson(3.0 * length / period)
        starts = rng.integers(0, length, n_bursts)
        lo, hi = max(1, period // 72), max(2, period // 24)
        for start in starts:
            span = int(rng.integers(lo, hi + 1))
            values[start : start + span] += rng.uniform(30.0, 80.0)
    elif kind == "noisy":
        mean = rng.uniform(20.0, 60.0)
        values = mean + rng.normal(0.0, rng.uniform(10.0, 20.0), length)
    else:
        values = np.full(length, float(np.round(rng.uniform(5.0, 80.0), 3)))

    return TimeSeries(
        id=id if id is not None else f"{kind}-{seed}",
        spacing_minutes=spacing_minutes,
        values=np.clip(values, 0.0, 100.0),
    )


def synthetic_suite(seed=42, length=21600, period=1440, spacing_minutes=1.0, counts=DEFAULT_SUITE):
    """The default benchmark mix; trace seeds are derived from ``seed`` and position."""
    traces = []
    idx = 0
    for kind, count in counts:
        for j in range(count):
            sub_seed = int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])
            traces.append(
                generate_synthetic(
                    kind,
                    length,
                    period,
                    sub_seed,
                    spacing_minutes=spacing_minutes,
                    id=f"{kind}-{j:02d}",
                )
            )
            idx += 1
    return traces


class MeanResampler(TransformerMixin, BaseEstimator):
    """Block-mean downsampling as a transformer over 1-D arrays.

    Parameters
    ----------
    bin : int, default=20
        Number of consecutive points averaged into one output point.
    """

    def __init__(self, bin=20):
        self.bin = bin

    def fit(self, X, y=None):
        check_positive_int(self.bin, "bin")
        return self

    def transform(self, X):
        if isinstance(X, TimeSeries):
            return resample_mean(X, self.bin)
        values = check_series(X, "X")
        k = values.size // self.bin
        if k == 0:
            raise EmptyTrace(f"bin {self.bin} exceeds series length {values.size}")
        return values[: k * self.bin].reshape(k, self.bin).mean(axis=1)


class SlidingWindows(TransformerMixin, BaseEstimator):
    """Turn a 1-D series into (n, w, 1) input windows.

    ``targets`` gives the matching (n, h) array, so
    ``SlidingWindows().fit_transform(y)`` pairs with ``.targets(y)``.
    """

    def __init__(self, window=6, horizon=3):
        self.window = window
        self.horizon = horizon

    def fit(self, X, y=None):
        check_positive_int(self.window, "window")
        check_positive_int(self.horizon, "horizon")
        return self

    def transform(self, X):
        return sliding_windows(X, self.window, self.horizon).as_arrays()[0]

    def targets(self, X):
        return sliding_windows(X, self.window, self.horizon).targets
