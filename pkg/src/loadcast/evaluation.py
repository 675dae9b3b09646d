"""Naive baselines and the multi-model, multi-horizon comparison harness."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from loadcast import lstm, sarima
from loadcast._validation import check_positive_int, check_series
from loadcast.exceptions import EmptyCollection, LoadcastError
from loadcast.metrics import MetricSet, metric_set
from loadcast.series import SplitSpec, sliding_windows, split

__all__ = [
    "MODEL_NAMES",
    "HORIZONS",
    "naive_last",
    "naive_mean",
    "NaiveForecaster",
    "BenchSettings",
    "Overlay",
    "EvalReport",
    "evaluate_trace",
    "compare",
]

MODEL_NAMES = ("sarima", "lstm", "naive_last", "naive_mean")
HORIZONS = ("short", "long")
METRICS = ("mae", "mape", "rmse")

FOOTER = (
    "SARIMA and the naive baselines are scored on one forecast of the whole "
    "test segment from the training boundary. LSTM long-horizon scores pool "
    "every sliding window whose target lies in the test segment."
)


def naive_last(train, steps):
    """Repeat the final training value."""
    values = check_series(train)
    return np.full(check_positive_int(steps, "steps"), values[-1])


def naive_mean(train, steps):
    """Repeat the training mean."""
    values = check_series(train)
    return np.full(check_positive_int(steps, "steps"), values.mean())


class NaiveForecaster(BaseEstimator):
    """Constant forecaster: ``strategy`` is ``"last"`` or ``"mean"``."""

    def __init__(self, strategy="mean"):
        self.strategy = strategy

    def fit(self, y, X=None):
        if self.strategy not in ("last", "mean"):
            raise ValueError(f"strategy must be 'last' or 'mean', got {self.strategy!r}")
        values = check_series(y)
        self.level_ = float(values[-1] if self.strategy == "last" else values.mean())
        return self

    def predict(self, steps=1):
        check_is_fitted(self, "level_")
        return np.full(check_positive_int(steps, "steps"), self.level_)


@dataclass(frozen=True)
class BenchSettings:
    """Everything ``compare`` needs to run the four models on one trace.

    ``sarima_order`` is a ``(p, d, q, P, D, Q)`` tuple, or None to pick
    ``p, q, P, Q`` per trace by AIC up to ``max_order``.
    """

    split: SplitSpec = field(default_factory=SplitSpec)
    sarima_order: tuple | None = sarima.DEFAULT_ORDER
    max_order: int = 3
    seasonal_period: int | None = None
    lstm: lstm.LstmConfig = field(default_factory=lstm.LstmConfig)
    zero_policy: str = "exclude"


@dataclass(frozen=True, eq=False)
class Overlay:
    """First-step forecasts against actuals, indexed by position in the source trace."""

    t: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray

    def to_csv(self):
        buf = io.StringIO()
        buf.write("t,actual,predicted\n")
        for t, a, p in zip(self.t, self.actual, self.predicted):
            buf.write(f"{int(t)},{float(a)!r},{float(p)!r}\n")
        return buf.getvalue()


@dataclass
class _Cell:
    trace: str
    model: str
    horizon: str
    metrics: MetricSet | None = None
    error: str = ""
    overlay: Overlay | None = None


def _season(trace, settings):
    if settings.seasonal_period is not None:
        return settings.seasonal_period
    return sarima.season_length(trace.spacing_minutes)


def _sarima_forecasts(parts, trace, settings, horizons):
    m = _season(trace, settings)
    if settings.sarima_order is None:
        _, model = sarima.auto_tune(parts.train, settings.max_order, m)
    else:
        model = sarima.fit(parts.train, sarima.SarimaOrder.from_tuple(settings.sarima_order, m=m))
    n_long = len(parts.long_test)
    path = sarima.forecast(model, n_long)
    return {"short": path[: len(parts.short_test)], "long": path}


def _lstm_forecasts(parts, settings, horizons):
    config = settings.lstm
    w, h = config.window, config.horizon
    params, _ = lstm.train(sliding_windows(parts.train, w, h), config)
    out = {}
    if "short" in horizons:
        history = list(parts.train.values[-w:])
        preds = []
        # roll forward on own forecasts when the short test outlasts one horizon
        while len(preds) < len(parts.short_test):
            x = np.asarray(history[-w:])[None, :, None] / lstm.SCALE
            step = lstm.forward(params, config, x)[0] * lstm.SCALE
            preds.extend(step)
            history.extend(step)
        out["short"] = np.asarray(preds[: len(parts.short_test)])
    if "long" in horizons:
        lead = np.concatenate((parts.train.values[-w:], parts.long_test.values))
        ws = sliding_windows(lead, w, h)
        X, Y = ws.as_arrays()
        pred = lstm.forward(params, config, X / lstm.SCALE) * lstm.SCALE
        out["long"] = (pred, Y)
    return out


def evaluate_trace(trace, models=MODEL_NAMES, horizons=HORIZONS, settings=None):
    """Score each requested model and horizon on one trace.

    Model failures are captured per cell and never propagate.
    """
    settings = settings or BenchSettings()
    parts = split(trace, settings.split)
    cut = len(parts.train)
    actual = {"short": parts.short_test.values, "long": parts.long_test.values}
    cells = []
    for name in models:
        try:
            if name == "naive_last":
                preds = {hz: naive_last(parts.train, actual[hz].size) for hz in horizons}
            elif name == "naive_mean":
                preds = {hz: naive_mean(parts.train, actual[hz].size) for hz in horizons}
            elif name == "sarima":
                preds = _sarima_forecasts(parts, trace, settings, horizons)
            elif name == "lstm":
                preds = _lstm_forecasts(parts, settings, horizons)
            else:
                raise ValueError(f"unknown model {name!r}")
        except (LoadcastError, ValueError, ArithmeticError) as exc:
            for hz in horizons:
                cells.append(_Cell(trace.id, name, hz, error=f"{type(exc).__name__}: {exc}"))
            continue
        for hz in horizons:
            pred = preds[hz]
            if isinstance(pred, tuple):
                pred, target = pred
                t = cut + np.arange(pred.shape[0])
                overlay = Overlay(t, target[:, 0], pred[:, 0])
            else:
                target = actual[hz]
                overlay = Overlay(cut + np.arange(target.size), target, pred)
            cells.append(
                _Cell(
                    trace.id,
                    name,
                    hz,
                    metrics=metric_set(pred, target, settings.zero_policy),
                    overlay=overlay,
                )
            )
    return cells


class EvalReport:
    """Per-cell metrics with aggregate and win-rate views.

    ``rows`` maps ``(trace, model, horizon)`` to a :class:`MetricSet`;
    failed cells appear in ``failures`` instead.
    """

    def __init__(self, cells):
        cells = sorted(cells, key=lambda c: (c.trace, c.model, c.horizon))
        self.rows = {(c.trace, c.model, c.horizon): c.metrics for c in cells if c.metrics}
        self.failures = {(c.trace, c.model, c.horizon): c.error for c in cells if c.error}
        self.overlays = {
            (c.trace, c.model, c.horizon): c.overlay for c in cells if c.overlay is not None
        }
        self.traces = sorted({c.trace for c in cells})
        self.models = [m for m in MODEL_NAMES if any(c.model == m for c in cells)]
        self.models += sorted({c.model for c in cells} - set(self.models))
        self.horizons = [h for h in HORIZONS if any(c.horizon == h for c in cells)]

    def column(self, model, horizon, metric, traces=None):
        traces = self.traces if traces is None else traces
        values = []
        for tr in traces:
            ms = self.rows.get((tr, model, horizon))
            if ms is not None:
                values.append(getattr(ms, metric))
        return np.asarray(values, dtype=np.float64)

    def aggregate(self, model, horizon, traces=None):
        """Average, maximum and minimum of each metric over traces.

        Failed cells and undefined MAPE values are left out.
        """
        out = {}
        for stat, fn in (("average", np.mean), ("maximum", np.max), ("minimum", np.min)):
            out[stat] = {}
            for metric in METRICS:
                col = self.column(model, horizon, metric, traces)
                col = col[~np.isnan(col)]
                out[stat][metric] = float(fn(col)) if col.size else math.nan
        return out

    def win_rate(self, model, baseline, horizon, metric="mae", traces=None):
        """Fraction of traces where ``model`` strictly beats ``baseline``.

        Ties, failures and undefined values all count as non-wins.
        """
        traces = self.traces if traces is None else list(traces)
        if not traces:
            return math.nan
        wins = 0
        for tr in traces:
            a = self.rows.get((tr, model, horizon))
            b = self.rows.get((tr, baseline, horizon))
            if a is None or b is None:
                continue
            if getattr(a, metric) < getattr(b, metric):
                wins += 1
        return wins / len(traces)

    def win_rates(self, baseline="naive_mean"):
        return {
            (model, baseline, horizon, metric): self.win_rate(model, baseline, horizon, metric)
            for model in self.models
            for horizon in self.horizons
            for metric in METRICS
            if baseline in self.models
        }

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trace", "model", "horizon", "mae", "mape", "rmse", "n", "mape_excluded"])
        keys = sorted(set(self.rows) | set(self.failures))
        for key in keys:
            ms = self.rows.get(key)
            if ms is None:
                writer.writerow([*key, "", "", "", "", ""])
            else:
                writer.writerow(
                    [*key, repr(ms.mae), repr(ms.mape), repr(ms.rmse), ms.n, ms.mape_excluded]
                )
        return buf.getvalue()

    def to_markdown(self, baseline="naive_mean"):
        out = ["# Forecast accuracy", ""]
        cols = [(hz, metric) for metric in ("mae", "mape") for hz in self.horizons]
        tag = {"short": "S.T.", "long": "L.T."}
        out.append("| Model | " + " | ".join(f"{tag[h]} {m.upper()}" for h, m in cols) + " |")
        out.append("|---|" + "---:|" * len(cols))
        for model in self.models:
            vals = [self.aggregate(model, hz)["average"][metric] for hz, metric in cols]
            out.append(f"| {model} | " + " | ".join(_fmt(v) for v in vals) + " |")
        out.append("")

        for model in self.models:
            if model == baseline or baseline not in self.models:
                continue
            for hz in self.horizons:
                out.append(f"## {model}, {hz} horizon")
                out.append("")
                out.append("| data set | MAE | MAPE | Naive MAE | Naive MAPE |")
                out.append("|---|---:|---:|---:|---:|")
                for tr in self.traces:
                    a = self.rows.get((tr, model, hz))
                    b = self.rows.get((tr, baseline, hz))
                    cells = [
                        _fmt(a.mae) if a else "failed",
                        _fmt(a.mape) if a else "failed",
                        _fmt(b.mae) if b else "failed",
                        _fmt(b.mape) if b else "failed",
                    ]
                    out.append(f"| {tr} | " + " | ".join(cells) + " |")
                agg_a = self.aggregate(model, hz)
                agg_b = self.aggregate(baseline, hz)
                for stat in ("average", "maximum", "minimum"):
                    out.append(
                        f"| {stat.capitalize()} | {_fmt(agg_a[stat]['mae'])} | "
                        f"{_fmt(agg_a[stat]['mape'])} | {_fmt(agg_b[stat]['mae'])} | "
                        f"{_fmt(agg_b[stat]['mape'])} |"
                    )
                out.append("")

        if baseline in self.models:
            out.append(f"## Win rate against {baseline}")
            out.append("")
            out.append("| Model | Horizon | MAE | MAPE | RMSE |")
            out.append("|---|---|---:|---:|---:|")
            for model in self.models:
                for hz in self.horizons:
                    rates = [self.win_rate(model, baseline, hz, m) for m in METRICS]
                    out.append(f"| {model} | {hz} | " + " | ".join(f"{r:.2f}" for r in rates) + " |")
            out.append("")
        if self.failures:
            out.append("## Failed cells")
            out.append("")
            for (tr, model, hz), msg in sorted(self.failures.items()):
                out.append(f"- {tr} / {model} / {hz}: {msg}")
            out.append("")
        out.append(FOOTER)
        return "\n".join(out) + "\n"

    def write(self, out_dir):
        """Write ``report.csv``, ``report.md`` and one overlay CSV per (trace, model)."""
        out_dir = Path(out_dir)
        _atomic_write(out_dir / "report.csv", self.to_csv())
        _atomic_write(out_dir / "report.md", self.to_markdown())
        for (tr, model, hz), overlay in sorted(self.overlays.items()):
            if hz == "long":
                _atomic_write(out_dir / "overlays" / f"{tr}.{model}.csv", overlay.to_csv())


def _fmt(x):
    return "n/a" if x is None or math.isnan(x) else f"{x:.2f}"


def _atomic_write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def compare(traces, models=MODEL_NAMES, horizons=HORIZONS, settings=None, jobs=1):
    """Run every model on every trace at every horizon and assemble an :class:`EvalReport`."""
    traces = list(traces)
    if not traces:
        raise EmptyCollection("compare needs at least one trace")
    settings = settings or BenchSettings()
    models, horizons = tuple(models), tuple(horizons)
    if jobs == 1:
        per_trace = [evaluate_trace(tr, models, horizons, settings) for tr in traces]
    else:
        from joblib import Parallel, delayed

        per_trace = Parallel(n_jobs=jobs)(
            delayed(evaluate_trace)(tr, models, horizons, settings) for tr in traces
        )
    return EvalReport([cell for cells in per_trace for cell in cells])
