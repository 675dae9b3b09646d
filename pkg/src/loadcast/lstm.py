"""Stacked LSTM forecaster in plain numpy, trained by backpropagation through time.

Each layer keeps separate input-side and hidden-side weights and biases
for the four gates, stored gate-major in the order (i, f, o, c):

    i  = sigmoid(W_ii x + b_ii + W_hi h + b_hi)
    f  = sigmoid(W_if x + b_if + W_hf h + b_hf)
    o  = sigmoid(W_io x + b_io + W_ho h + b_ho)
    c~ = tanh(W_ic x + b_ic + W_hc h + b_hc)
    c' = f * c + i * c~
    h' = o * tanh(c')

A linear head maps the last hidden state of the top layer to the horizon.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from loadcast._kvfile import read_kv, write_kv
from loadcast._validation import check_positive_int, check_series, check_windows
from loadcast.exceptions import ShapeError, TrainingDiverged
from loadcast.metrics import mae, mape
from loadcast.series import (
    SplitSpec,
    WindowSet,
    multichannel_windows,
    sliding_windows,
    split,
)

__all__ = [
    "GATES",
    "SCALE",
    "LstmConfig",
    "LstmParams",
    "TrainReport",
    "SeriesForecast",
    "SweepRow",
    "init_params",
    "cell_forward",
    "forward",
    "loss_and_grads",
    "train",
    "gradient_check",
    "predict_series",
    "train_multivariate",
    "hyperparameter_sweep",
    "sweep_markdown",
    "save_params",
    "load_params",
    "LstmForecaster",
]

GATES = ("i", "f", "o", "c")
# CPU percentages are divided by this before entering the network
SCALE = 100.0


@dataclass(frozen=True)
class LstmConfig:
    input_dim: int = 1
    hidden_size: int = 20
    num_layers: int = 2
    dropout: float = 0.0
    horizon: int = 3
    window: int = 6
    batch_size: int = 100
    max_epochs: int = 30
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "hidden_size", "num_layers", "horizon", "window",
                     "batch_size", "max_epochs"):
            check_positive_int(getattr(self, name), name)
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.num_layers == 1 and self.dropout != 0.0:
            raise ValueError("dropout acts between stacked layers; use 0 with one layer")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass(eq=False)
class LayerParams:
    """Gate-major weights: ``Wx`` (4, H, in), ``Wh`` (4, H, H), ``bx``/``bh`` (4, H)."""

    Wx: np.ndarray
    Wh: np.ndarray
    bx: np.ndarray
    bh: np.ndarray


@dataclass(eq=False)
class LstmParams:
    layers: list
    head_W: np.ndarray
    head_b: np.ndarray

    def arrays(self):
        """Every parameter array in a fixed order (views, not copies)."""
        out = []
        for layer in self.layers:
            out += [layer.Wx, layer.Wh, layer.bx, layer.bh]
        return out + [self.head_W, self.head_b]

    def copy(self):
        return LstmParams(
            layers=[LayerParams(l.Wx.copy(), l.Wh.copy(), l.bx.copy(), l.bh.copy())
                    for l in self.layers],
            head_W=self.head_W.copy(),
            head_b=self.head_b.copy(),
        )

    def zeros_like(self):
        z = self.copy()
        for arr in z.arrays():
            arr[...] = 0.0
        return z

    def check(self, config):
        H = config.hidden_size
        if len(self.layers) != config.num_layers:
            raise ShapeError(f"{len(self.layers)} layers, config wants {config.num_layers}")
        for k, layer in enumerate(self.layers):
            n_in = config.input_dim if k == 0 else H
            expected = ((4, H, n_in), (4, H, H), (4, H), (4, H))
            got = (layer.Wx.shape, layer.Wh.shape, layer.bx.shape, layer.bh.shape)
            if got != expected:
                raise ShapeError(f"layer {k} shapes {got} != {expected}")
        if self.head_W.shape != (config.horizon, H) or self.head_b.shape != (config.horizon,):
            raise ShapeError("head shape does not match horizon and hidden size")


@dataclass(frozen=True)
class TrainReport:
    epoch_losses: tuple
    epochs: int
    wall_seconds: float


def init_params(config, rng=None):
    """Uniform initialisation in ``[-1/sqrt(H), 1/sqrt(H)]``."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    H = config.hidden_size
    bound = 1.0 / math.sqrt(H)
    draw = lambda *shape: rng.uniform(-bound, bound, shape)  # noqa: E731
    layers = []
    for k in range(config.num_layers):
        n_in = config.input_dim if k == 0 else H
        layers.append(LayerParams(draw(4, H, n_in), draw(4, H, H), draw(4, H), draw(4, H)))
    return LstmParams(layers, draw(config.horizon, H), draw(config.horizon))


def _sigmoid(x):
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cell_forward(x, h_prev, c_prev, layer):
    """One LSTM step. Works on single vectors or on (B, .) batches."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    H = layer.Wh.shape[1]
    if x.shape[-1] != layer.Wx.shape[2]:
        raise ShapeError(f"input width {x.shape[-1]} != layer input size {layer.Wx.shape[2]}")
    if h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ShapeError(f"hidden/cell state width must be {H}")
    h, c, _ = _step(x, h_prev, c_prev, layer)
    return h, c


def _step(x, h_prev, c_prev, layer):
    H = layer.Wh.shape[1]
    pre = (
        x @ layer.Wx.reshape(4 * H, -1).T
        + h_prev @ layer.Wh.reshape(4 * H, H).T
        + (layer.bx + layer.bh).reshape(4 * H)
    )
    gates = _sigmoid(pre[..., : 3 * H])
    i, f, o = gates[..., :H], gates[..., H : 2 * H], gates[..., 2 * H :]
    g = np.tanh(pre[..., 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, o, g, tc)


def _forward(params, X, masks=None):
    """Unroll every layer over the window; returns predictions and the caches."""
    B, w, _ = X.shape
    seq = X
    caches = []
    for k, layer in enumerate(params.layers):
        H = layer.Wh.shape[1]
        if k > 0 and masks is not None:
            seq = seq * masks[k - 1]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        out = np.empty((B, w, H))
        steps = []
        for t in range(w):
            h, c, cache = _step(seq[:, t, :], h, c, layer)
            out[:, t, :] = h
            steps.append(cache)
        caches.append(steps)
        seq = out
    top = seq[:, -1, :]
    pred = top @ params.head_W.T + params.head_b
    return pred, (caches, top)


def forward(params, config, batch, training=False, rng=None):
    """Predictions of shape (B, horizon) for windows shaped (B, w, input_dim).

    With ``training=True`` and non-zero dropout, inverted-dropout masks are
    drawn from ``rng`` for the activations passed between layers.
    """
    X = check_windows(batch, n_features=config.input_dim)
    if X.shape[1] != config.window:
        raise ShapeError(f"window length {X.shape[1]} != config.window {config.window}")
    params.check(config)
    masks = _dropout_masks(config, X.shape[0], rng) if training else None
    return _forward(params, X, masks)[0]


def _dropout_masks(config, batch_size, rng):
    if config.dropout == 0.0 or config.num_layers == 1:
        return None
    keep = 1.0 - config.dropout
    shape = (batch_size, config.window, config.hidden_size)
    return [(rng.random(shape) < keep) / keep for _ in range(config.num_layers - 1)]


def loss_and_grads(params, X, Y, masks=None):
    """Mean squared error over every (example, step) and its parameter gradients."""
    pred, (caches, top) = _forward(params, X, masks)
    B, w, _ = X.shape
    diff = pred - Y
    loss = float(np.mean(diff * diff))
    grads = params.zeros_like()

    dpred = 2.0 * diff / diff.size
    grads.head_W[...] = dpred.T @ top
    grads.head_b[...] = dpred.sum(axis=0)

    H_top = top.shape[1]
    dseq = np.zeros((B, w, H_top))
    dseq[:, -1, :] = dpred @ params.head_W

    for k in range(len(params.layers) - 1, -1, -1):
        layer, glayer, steps = params.layers[k], grads.layers[k], caches[k]
        H = layer.Wh.shape[1]
        Wx = layer.Wx.reshape(4 * H, -1)
        Wh = layer.Wh.reshape(4 * H, H)
        dWx = np.zeros_like(Wx)
        dWh = np.zeros_like(Wh)
        db = np.zeros(4 * H)
        dx_seq = np.empty((B, w, Wx.shape[1]))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(w - 1, -1, -1):
            x, h_prev, c_prev, i, f, o, g, tc = steps[t]
            dh = dseq[:, t, :] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dpre = np.concatenate(
                (
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dh * tc * o * (1.0 - o),
                    dc * i * (1.0 - g * g),
                ),
                axis=1,
            )
            dWx += dpre.T @ x
            dWh += dpre.T @ h_prev
            db += dpre.sum(axis=0)
            dx_seq[:, t, :] = dpre @ Wx
            dh_next = dpre @ Wh
            dc_next = dc * f
        glayer.Wx[...] = dWx.reshape(glayer.Wx.shape)
        glayer.Wh[...] = dWh.reshape(glayer.Wh.shape)
        glayer.bx[...] = db.reshape(4, H)
        glayer.bh[...] = db.reshape(4, H)
        if k > 0:
            dseq = dx_seq * masks[k - 1] if masks is not None else dx_seq
    return loss, grads


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for p, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr_t * m / (np.sqrt(v) + self.eps)


def _fit_arrays(X, Y, config):
    """Train on already-scaled arrays; batches are taken in order, unshuffled."""
    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)
    opt = _Adam(params, config.learning_rate)
    n = X.shape[0]
    losses = []
    start = time.perf_counter()
    for epoch in range(config.max_epochs):
        total = 0.0
        for lo in range(0, n, config.batch_size):
            xb, yb = X[lo : lo + config.batch_size], Y[lo : lo + config.batch_size]
            masks = _dropout_masks(config, xb.shape[0], rng)
            loss, grads = loss_and_grads(params, xb, yb, masks)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch + 1}")
            opt.step(params, grads)
            total += loss * xb.shape[0]
        losses.append(total / n)
    report = TrainReport(tuple(losses), config.max_epochs, time.perf_counter() - start)
    return params, report


def train(windows, config):
    """Fit an LSTM to a :class:`WindowSet` by Adam on the scaled MSE.

    Inputs and targets are divided by 100 before training; the returned
    ``TrainReport`` losses are in those scaled units.
    """
    if len(windows) == 0:
        raise ValueError("cannot train on an empty window set")
    if windows.input_width != config.window or windows.horizon != config.horizon:
        raise ShapeError(
            f"windows are (w={windows.input_width}, h={windows.horizon}); "
            f"config wants (w={config.window}, h={config.horizon})"
        )
    X, Y = windows.as_arrays()
    X, Y = check_windows(X, Y, n_features=config.input_dim)
    return _fit_arrays(X / SCALE, Y / SCALE, config)


def train_multivariate(channels, config, target_channel=0):
    """Train on windows whose every step carries all channels.

    ``channels`` is a sequence of equal-length series (or a multichannel
    :class:`WindowSet` already built for ``target_channel``); targets come
    from ``target_channel`` only and ``config.input_dim`` must equal the
    channel count.
    """
    if isinstance(channels, WindowSet):
        windows = channels
    else:
        windows = multichannel_windows(channels, config.window, config.horizon, target_channel)
    if windows.n_channels != config.input_dim:
        raise ShapeError(
            f"{windows.n_channels} channels but config.input_dim = {config.input_dim}"
        )
    return train(windows, config)


def gradient_check(params, config, batch, targets, step=1e-5):
    """Largest relative gap between backprop and central-difference gradients.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``. Dropout is
    not applied.
    """
    X, Y = check_windows(batch, targets, n_features=config.input_dim)
    params.check(config)
    work = params.copy()
    _, grads = loss_and_grads(work, X, Y)
    worst = 0.0
    for p, g in zip(work.arrays(), grads.arrays()):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss_and_grads(work, X, Y)[0]
            flat[j] = orig - step
            down = loss_and_grads(work, X, Y)[0]
            flat[j] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(gflat[j]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst


class SeriesForecast(NamedTuple):
    forecasts: np.ndarray  # (n_windows, horizon)
    first_step: np.ndarray  # (n_windows,)
    targets: np.ndarray  # (n_windows, horizon)


def predict_series(params, config, series):
    """Slide over ``series`` and forecast the ``horizon`` points after each window."""
    windows = sliding_windows(series, config.window, config.horizon)
    X, Y = windows.as_arrays()
    pred = forward(params, config, X / SCALE) * SCALE
    return SeriesForecast(pred, pred[:, 0].copy(), Y)


class SweepRow(NamedTuple):
    num_layers: int
    dropout: float
    hidden_size: int
    mae: float
    mape: float
    failed: str = ""


def _heldout_windows(train_part, test_part, w, h):
    """Windows whose targets lie in the test segment, led in by the train tail."""
    lead = np.concatenate((train_part.values[-w:], test_part.values))
    return sliding_windows(lead, w, h)


def hyperparameter_sweep(
    traces,
    layers=(1, 2, 3),
    dropouts=(0.0, 0.5),
    hidden_sizes=(2, 5, 10, 20),
    base_config=None,
    split_spec=None,
):
    """Train one model per trace and grid cell; average held-out MAE and MAPE.

    Cells whose configuration is invalid or whose training diverges are
    reported with ``failed`` set and NaN scores; the sweep carries on.
    """
    traces = list(traces)
    base = base_config or LstmConfig()
    spec = split_spec or SplitSpec()
    prepared = []
    for tr in traces:
        parts = split(tr, spec)
        prepared.append(
            (
                sliding_windows(parts.train, base.window, base.horizon),
                _heldout_windows(parts.train, parts.long_test, base.window, base.horizon),
            )
        )
    rows = []
    for n_layers in layers:
        for drop in dropouts:
            for hidden in hidden_sizes:
                try:
                    config = replace(
                        base, num_layers=n_layers, dropout=drop, hidden_size=hidden
                    )
                except ValueError as exc:
                    rows.append(SweepRow(n_layers, drop, hidden, math.nan, math.nan, str(exc)))
                    continue
                maes, mapes = [], []
                try:
                    for train_w, test_w in prepared:
                        params, _ = train(train_w, config)
                        X, Y = test_w.as_arrays()
                        pred = forward(params, config, X / SCALE) * SCALE
                        maes.append(mae(pred, Y))
                        try:
                            mapes.append(mape(pred, Y)[0])
                        except ValueError:
                            pass
                except TrainingDiverged as exc:
                    rows.append(SweepRow(n_layers, drop, hidden, math.nan, math.nan, str(exc)))
                    continue
                rows.append(
                    SweepRow(
                        n_layers,
                        drop,
                        hidden,
                        float(np.mean(maes)),
                        float(np.mean(mapes)) if mapes else math.nan,
                    )
                )
    return rows


def sweep_markdown(rows):
    lines = [
        "| Layers | Drop out | Hidden Size | MAE | MAPE |",
        "|---:|---:|---:|---:|---:|",
    ]
    for r in rows:
        if r.failed:
            lines.append(f"| {r.num_layers} | {r.dropout:g} | {r.hidden_size} | failed | failed |")
        else:
            lines.append(
                f"| {r.num_layers} | {r.dropout:g} | {r.hidden_size} | {r.mae:.4f} | {r.mape:.4f} |"
            )
    return "\n".join(lines) + "\n"


def save_params(params, config, path):
    items = [(f"config.{f.name}", getattr(config, f.name)) for f in fields(config)]
    for k, layer in enumerate(params.layers):
        for name, arr in (("W_x", layer.Wx), ("W_h", layer.Wh)):
            for gi, gate in enumerate(GATES):
                for (r, c), v in np.ndenumerate(arr[gi]):
                    items.append((f"layer.{k}.{gate}.{name}.{r}.{c}", float(v)))
        for name, arr in (("b_x", layer.bx), ("b_h", layer.bh)):
            for gi, gate in enumerate(GATES):
                for r, v in enumerate(arr[gi]):
                    items.append((f"layer.{k}.{gate}.{name}.{r}", float(v)))
    for (r, c), v in np.ndenumerate(params.head_W):
        items.append((f"head.W.{r}.{c}", float(v)))
    for r, v in enumerate(params.head_b):
        items.append((f"head.b.{r}", float(v)))
    write_kv(path, items)


def load_params(path):
    kv = read_kv(path)
    kwargs = {}
    for f in fields(LstmConfig):
        raw = kv[f"config.{f.name}"]
        kwargs[f.name] = float(raw) if f.name in ("dropout", "learning_rate") else int(raw)
    config = LstmConfig(**kwargs)
    params = init_params(config)
    for k, layer in enumerate(params.layers):
        for name, arr in (("W_x", layer.Wx), ("W_h", layer.Wh)):
            for gi, gate in enumerate(GATES):
                for r, c in np.ndindex(arr[gi].shape):
                    arr[gi, r, c] = float(kv[f"layer.{k}.{gate}.{name}.{r}.{c}"])
        for name, arr in (("b_x", layer.bx), ("b_h", layer.bh)):
            for gi, gate in enumerate(GATES):
                for r in range(arr.shape[1]):
                    arr[gi, r] = float(kv[f"layer.{k}.{gate}.{name}.{r}"])
    for r, c in np.ndindex(params.head_W.shape):
        params.head_W[r, c] = float(kv[f"head.W.{r}.{c}"])
    for r in range(params.head_b.size):
        params.head_b[r] = float(kv[f"head.b.{r}"])
    return params, config


class LstmForecaster(RegressorMixin, BaseEstimator):
    """Sliding-window LSTM regressor with an sklearn-style interface.

    ``fit`` takes either a 1-D series (windows are cut internally) or
    pre-built windows ``X`` of shape (n, window, channels) with targets
    ``y`` of shape (n, horizon). Values are CPU percentages; scaling by
    1/100 happens inside.

    Attributes
    ----------
    params_ : LstmParams
    config_ : LstmConfig
    report_ : TrainReport
    """

    def __init__(
        self,
        window=6,
        horizon=3,
        hidden_size=20,
        num_layers=2,
        dropout=0.0,
        batch_size=100,
        max_epochs=30,
        learning_rate=0.01,
        seed=0,
    ):
        self.window = window
        self.horizon = horizon
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.dropout = dropout
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.learning_rate = learning_rate
        self.seed = seed

    def _config(self, input_dim):
        return LstmConfig(
            input_dim=input_dim,
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            dropout=self.dropout,
            horizon=self.horizon,
            window=self.window,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        if y is None:
            ws = sliding_windows(check_series(X), self.window, self.horizon)
            X, y = ws.as_arrays()
        X, y = check_windows(X, y)
        self.config_ = self._config(X.shape[2])
        if X.shape[1] != self.window or y.shape[1] != self.horizon:
            raise ShapeError(f"windows {X.shape} / targets {y.shape} do not match the estimator")
        self.params_, self.report_ = _fit_arrays(X / SCALE, y / SCALE, self.config_)
        self.n_features_in_ = X.shape[2]
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_windows(X, n_features=self.n_features_in_)
        return forward(self.params_, self.config_, X / SCALE) * SCALE

    def forecast(self, history):
        """The ``horizon`` values following the last ``window`` points of a 1-D history."""
        check_is_fitted(self, "params_")
        values = check_series(history, min_length=self.window)
        return self.predict(values[-self.window :][None, :, None])[0]
