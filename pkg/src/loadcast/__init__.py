"""Forecasting toolkit for CPU-utilisation traces: SARIMA, stacked LSTM and naive baselines."""

from loadcast.diagnostics import collection_stats, decompose, kpss_level
from loadcast.evaluation import BenchSettings, EvalReport, NaiveForecaster, compare
from loadcast.lstm import LstmConfig, LstmForecaster
from loadcast.metrics import mae, mape, metric_set, rmse
from loadcast.sarima import SarimaForecaster, SarimaOrder, auto_tune, fit, forecast
from loadcast.series import (
    MeanResampler,
    SlidingWindows,
    SplitSpec,
    TimeSeries,
    generate_synthetic,
    load_csv,
    resample_mean,
    sliding_windows,
    split,
    synthetic_suite,
)

__version__ = "0.1.0"

__all__ = [
    "BenchSettings",
    "EvalReport",
    "LstmConfig",
    "LstmForecaster",
    "MeanResampler",
    "NaiveForecaster",
    "SarimaForecaster",
    "SarimaOrder",
    "SlidingWindows",
    "SplitSpec",
    "TimeSeries",
    "auto_tune",
    "collection_stats",
    "compare",
    "decompose",
    "fit",
    "forecast",
    "generate_synthetic",
    "kpss_level",
    "load_csv",
    "mae",
    "mape",
    "metric_set",
    "resample_mean",
    "rmse",
    "sliding_windows",
    "split",
    "synthetic_suite",
]
