"""``loadcast`` command-line entry point.

Usage::

    loadcast <analyze|bench|tune|synth|fit|forecast> --config PATH [--jobs N] [--seed S] [--out DIR]

The config is a flat ``key = value`` file. Precedence is command-line flag,
then config file, then built-in default; ``LOADCAST_SEED`` supplies the seed
when neither the flag nor the config sets one.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from loadcast import lstm, sarima
from loadcast._kvfile import parse_kv, read_kv
from loadcast.diagnostics import collection_stats, decompose, kpss_level
from loadcast.evaluation import MODEL_NAMES, BenchSettings, compare
from loadcast.exceptions import ConfigError, LoadcastError
from loadcast.series import (
    DEFAULT_SUITE,
    SYNTHETIC_KINDS,
    SplitSpec,
    generate_synthetic,
    load_csv,
    resample_mean,
    sliding_windows,
    split,
    synthetic_suite,
    write_csv,
)

log = logging.getLogger("loadcast")

COMMANDS = ("analyze", "bench", "tune", "synth", "fit", "forecast")
DEFAULT_SEED = 42


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class SynthSpec:
    """Which synthetic traces to build when no input files are given.

    With ``kind`` set, ``count`` traces of that kind are made; otherwise the
    default 50-trace mix.
    """

    length: int = 21600
    period: int = 1440
    spacing_minutes: float = 1.0
    kind: str | None = None
    count: int = 1


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple = ()
    synth: SynthSpec = field(default_factory=SynthSpec)
    resample: int = 20
    window: int = 6
    horizon: int = 3
    short_term_points: int = 3
    test_fraction: float = 0.2
    models: tuple = MODEL_NAMES
    sarima_order: tuple = sarima.DEFAULT_ORDER
    sarima_auto: bool = False
    max_order: int = 3
    seasonal_period: int | None = None
    lstm: lstm.LstmConfig = field(default_factory=lstm.LstmConfig)
    sweep_layers: tuple = (1, 2, 3)
    sweep_dropouts: tuple = (0.0, 0.5)
    sweep_hidden_sizes: tuple = (2, 5, 10, 20)
    fit_model: str = "sarima"
    model_path: str | None = None
    steps: int | None = None
    seed: int = DEFAULT_SEED
    out: str = "out"

    @property
    def split_spec(self):
        return SplitSpec(self.test_fraction, self.short_term_points)

    @property
    def lstm_config(self):
        return replace(self.lstm, window=self.window, horizon=self.horizon, seed=self.seed)

    def bench_settings(self):
        return BenchSettings(
            split=self.split_spec,
            sarima_order=None if self.sarima_auto else self.sarima_order,
            max_order=self.max_order,
            seasonal_period=self.seasonal_period,
            lstm=self.lstm_config,
        )


_TOP_KEYS = {
    "inputs": lambda v: tuple(p.strip() for p in v.split(",") if p.strip()),
    "resample": int,
    "window": int,
    "horizon": int,
    "short_term_points": int,
    "test_fraction": float,
    "models": lambda v: tuple(m.strip() for m in v.split(",") if m.strip()),
    "seed": int,
    "out": str,
}
_PREFIXED = {
    "sarima.order": ("sarima_order", _ints),
    "sarima.auto": ("sarima_auto", _bool),
    "sarima.max_order": ("max_order", int),
    "sarima.period": ("seasonal_period", int),
    "sweep.layers": ("sweep_layers", _ints),
    "sweep.dropouts": ("sweep_dropouts", _floats),
    "sweep.hidden_sizes": ("sweep_hidden_sizes", _ints),
    "fit.model": ("fit_model", str),
    "forecast.model": ("model_path", str),
    "forecast.steps": ("steps", int),
}
_LSTM_KEYS = {"num_layers", "hidden_size", "dropout", "batch_size", "max_epochs", "learning_rate"}
_SYNTH_KEYS = {"length": int, "period": int, "spacing_minutes": float, "kind": str, "count": int}


def build_config(kv, seed=None, out=None, base_dir=None):
    """Turn parsed ``key = value`` pairs into a :class:`RunConfig`.

    Relative input paths resolve against ``base_dir``. Unknown keys are an error.
    """
    top, lstm_kw, synth_kw = {}, {}, {}
    for key, raw in kv.items():
        try:
            if key in _TOP_KEYS:
                top[key] = _TOP_KEYS[key](raw)
            elif key in _PREFIXED:
                name, conv = _PREFIXED[key]
                top[name] = conv(raw)
            elif key.startswith("lstm.") and key[5:] in _LSTM_KEYS:
                name = key[5:]
                lstm_kw[name] = float(raw) if name in ("dropout", "learning_rate") else int(raw)
            elif key.startswith("synth.") and key[6:] in _SYNTH_KEYS:
                synth_kw[key[6:]] = _SYNTH_KEYS[key[6:]](raw)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc

    if "seed" not in top:
        env = os.environ.get("LOADCAST_SEED")
        if env is not None:
            try:
                top["seed"] = int(env)
            except ValueError as exc:
                raise ConfigError(f"LOADCAST_SEED must be an integer, got {env!r}") from exc
    if seed is not None:
        top["seed"] = seed
    if out is not None:
        top["out"] = out
    if base_dir is not None and "inputs" in top:
        top["inputs"] = tuple(str(Path(base_dir) / p) for p in top["inputs"])
    if base_dir is not None and "model_path" in top:
        top["model_path"] = str(Path(base_dir) / top["model_path"])

    try:
        cfg = RunConfig(lstm=lstm.LstmConfig(**lstm_kw), synth=SynthSpec(**synth_kw), **top)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(cfg.models) - set(MODEL_NAMES)
    if unknown:
        raise ConfigError(f"unknown models: {sorted(unknown)}")
    if len(cfg.sarima_order) != 6:
        raise ConfigError("sarima.order needs six integers p,d,q,P,D,Q")
    if cfg.synth.kind is not None and cfg.synth.kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"synth.kind must be one of {SYNTHETIC_KINDS}")
    if cfg.fit_model not in ("sarima", "lstm"):
        raise ConfigError("fit.model must be 'sarima' or 'lstm'")
    return cfg


def load_config(path=None, seed=None, out=None):
    if path is None:
        return build_config({}, seed, out)
    path = Path(path)
    try:
        kv = read_kv(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(kv, seed, out, base_dir=path.parent)


# --- trace sources -------------------------------------------------------


def raw_traces(cfg):
    """Un-resampled traces: the configured CSV files, or the synthetic suite.

    Returns ``(traces, errors)`` where ``errors`` maps a path to its message.
    """
    if not cfg.inputs:
        s = cfg.synth
        if s.kind is None:
            return synthetic_suite(cfg.seed, s.length, s.period, s.spacing_minutes, DEFAULT_SUITE), {}
        seeds = np.random.SeedSequence(cfg.seed).spawn(s.count)
        traces = [
            generate_synthetic(
                s.kind, s.length, s.period, int(ss.generate_state(1)[0]), s.spacing_minutes,
                id=f"{s.kind}-{k:02d}",
            )
            for k, ss in enumerate(seeds)
        ]
        return traces, {}
    traces, errors = [], {}
    for path in cfg.inputs:
        try:
            traces.append(load_csv(path))
        except (OSError, LoadcastError, ValueError) as exc:
            errors[path] = f"{type(exc).__name__}: {exc}"
            log.warning("skipping %s: %s", path, exc)
    return traces, errors


def prepared_traces(cfg):
    traces, errors = raw_traces(cfg)
    out = []
    for tr in traces:
        if cfg.resample <= 1:
            out.append(tr)
            continue
        try:
            out.append(resample_mean(tr, cfg.resample))
        except LoadcastError as exc:
            errors[tr.id] = f"{type(exc).__name__}: {exc}"
    return out, errors


def _period(cfg, trace):
    if cfg.seasonal_period is not None:
        return cfg.seasonal_period
    return sarima.season_length(trace.spacing_minutes)


def _num(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write_errors(out, errors):
    if errors:
        _write_text(out / "errors.csv", _csv_text(["item", "error"], sorted(errors.items())))


# --- commands --------------------------------------------------------------


def cmd_analyze(cfg, jobs=1):
    """Collection statistics, KPSS and decomposition per trace."""
    out = Path(cfg.out)
    traces, errors = prepared_traces(cfg)
    if not traces:
        _write_errors(out, errors)
        raise LoadcastError("no trace could be loaded")
    stats = collection_stats(traces)
    summary = []
    for tr in traces:
        try:
            k = kpss_level(tr)
            kpss_cells = [_num(k.statistic), k.lag_truncation, str(k.stationary_at_5pct).lower(), ""]
        except LoadcastError as exc:
            kpss_cells = ["", "", "", type(exc).__name__]
        try:
            dec = decompose(tr, _period(cfg, tr))
            rows = [[t, _num(o), _num(tr_), _num(s), _num(r)] for t, o, tr_, s, r in dec.rows()]
            _write_text(
                out / "decomposition" / f"{tr.id}.csv",
                _csv_text(["t", "observed", "trend", "seasonal", "residual"], rows),
            )
        except LoadcastError as exc:
            errors[tr.id] = f"decomposition {type(exc).__name__}: {exc}"
        summary.append(
            [tr.id, len(tr), _num(stats.per_trace_mean[tr.id]), _num(stats.per_trace_std[tr.id]), *kpss_cells]
        )
    summary += [
        ["mean_of_means", "", _num(stats.mean_of_means), "", "", "", "", ""],
        ["std_of_means", "", _num(stats.std_of_means), "", "", "", "", ""],
        ["std_of_stds", "", "", _num(stats.std_of_stds), "", "", "", ""],
    ]
    header = ["trace", "n", "mean", "std", "kpss_statistic", "kpss_lag", "kpss_stationary_5pct", "kpss_error"]
    _write_text(out / "summary.csv", _csv_text(header, summary))
    _write_errors(out, errors)
    return 0


def cmd_bench(cfg, jobs=1):
    """Run every configured model at both horizons and write the report."""
    out = Path(cfg.out)
    traces, errors = prepared_traces(cfg)
    _write_errors(out, errors)
    if not traces:
        raise LoadcastError("no trace could be loaded")
    report = compare(traces, cfg.models, settings=cfg.bench_settings(), jobs=jobs)
    report.write(out)
    return 0


def _tune_one(cfg, trace):
    parts = split(trace, cfg.split_spec)
    m = _period(cfg, trace)
    _, d, _, _, D, _ = cfg.sarima_order
    order, model = sarima.auto_tune(parts.train, cfg.max_order, m, d=d, D=D)
    return order, sarima.aic(model)


def cmd_tune(cfg, jobs=1):
    """AIC order search per trace, then the LSTM hyperparameter sweep."""
    out = Path(cfg.out)
    traces, errors = prepared_traces(cfg)
    if not traces:
        _write_errors(out, errors)
        raise LoadcastError("no trace could be loaded")
    if jobs == 1:
        results = [_safe(_tune_one, cfg, tr) for tr in traces]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=jobs)(delayed(_safe)(_tune_one, cfg, tr) for tr in traces)
    rows = []
    for tr, res in zip(traces, results):
        if isinstance(res, str):
            errors[tr.id] = f"sarima {res}"
            rows.append([tr.id, "", "", "", "", "", "", "", ""])
        else:
            order, score = res
            rows.append([tr.id, *order.as_tuple(), _num(score)])
    _write_text(out / "orders.csv", _csv_text(["trace", "p", "d", "q", "P", "D", "Q", "m", "aic"], rows))

    sweep = lstm.hyperparameter_sweep(
        traces,
        cfg.sweep_layers,
        cfg.sweep_dropouts,
        cfg.sweep_hidden_sizes,
        base_config=cfg.lstm_config,
        split_spec=cfg.split_spec,
    )
    _write_text(out / "sweep.md", lstm.sweep_markdown(sweep))
    _write_errors(out, errors)
    return 0


def _safe(fn, *args):
    try:
        return fn(*args)
    except LoadcastError as exc:
        return f"{type(exc).__name__}: {exc}"


def cmd_synth(cfg, jobs=1):
    """Write the synthetic traces as CSV, one file per trace."""
    out = Path(cfg.out)
    traces, _ = raw_traces(replace(cfg, inputs=()))
    for tr in traces:
        write_csv(tr, out / f"{tr.id}.csv")
    return 0


def cmd_fit(cfg, jobs=1):
    """Fit the chosen model on each whole (resampled) trace and save it."""
    out = Path(cfg.out)
    traces, errors = prepared_traces(cfg)
    if not traces:
        _write_errors(out, errors)
        raise LoadcastError("no trace could be loaded")
    fitted = 0
    for tr in traces:
        try:
            if cfg.fit_model == "sarima":
                m = _period(cfg, tr)
                if cfg.sarima_auto:
                    _, d, _, _, D, _ = cfg.sarima_order
                    _, model = sarima.auto_tune(tr, cfg.max_order, m, d=d, D=D)
                else:
                    model = sarima.fit(tr, sarima.SarimaOrder.from_tuple(cfg.sarima_order, m=m))
                sarima.save_model(model, out / f"{tr.id}.sarima.txt")
            else:
                config = cfg.lstm_config
                params, _ = lstm.train(sliding_windows(tr, config.window, config.horizon), config)
                lstm.save_params(params, config, out / f"{tr.id}.lstm.txt")
            fitted += 1
        except LoadcastError as exc:
            errors[tr.id] = f"{type(exc).__name__}: {exc}"
    _write_errors(out, errors)
    if not fitted:
        raise LoadcastError("no model could be fitted")
    return 0


def _model_kind(path):
    text = Path(path).read_text(encoding="utf-8")
    return "lstm" if "config.hidden_size" in parse_kv(text, str(path)) else "sarima"


def lstm_rollout(params, config, history, steps):
    """Forecast ``steps`` values by feeding predictions back as inputs."""
    buf = list(np.asarray(history, dtype=np.float64)[-config.window :])
    if len(buf) < config.window:
        raise ConfigError(f"history needs at least {config.window} points")
    out = []
    while len(out) < steps:
        x = np.asarray(buf[-config.window :])[None, :, None] / lstm.SCALE
        pred = np.clip(lstm.forward(params, config, x)[0] * lstm.SCALE, 0.0, 100.0)
        out.extend(pred)
        buf.extend(pred)
    return np.asarray(out[:steps])


def cmd_forecast(cfg, jobs=1):
    """Load a saved model and write ``forecast.csv`` with columns ``step,value``.

    SARIMA files carry their own history. LSTM forecasts start from the
    last window of the first input trace.
    """
    if cfg.model_path is None:
        raise ConfigError("forecast needs forecast.model = <path>")
    out = Path(cfg.out)
    steps = cfg.steps or cfg.horizon
    if _model_kind(cfg.model_path) == "sarima":
        values = sarima.forecast(sarima.load_model(cfg.model_path), steps)
    else:
        params, config = lstm.load_params(cfg.model_path)
        traces, errors = prepared_traces(cfg)
        if not cfg.inputs or not traces:
            raise ConfigError("an LSTM forecast needs an input trace for its history")
        values = lstm_rollout(params, config, traces[0].values, steps)
    rows = [[k + 1, _num(v)] for k, v in enumerate(values)]
    _write_text(out / "forecast.csv", _csv_text(["step", "value"], rows))
    return 0


_DISPATCH = {
    "analyze": cmd_analyze,
    "bench": cmd_bench,
    "tune": cmd_tune,
    "synth": cmd_synth,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
}


def _parser():
    p = argparse.ArgumentParser(prog="loadcast", description="CPU-load forecasting toolkit")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel workers")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", help="output directory")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("loadcast: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        return _DISPATCH[args.command](cfg, jobs=args.jobs)
    except LoadcastError as exc:
        print(f"loadcast: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
