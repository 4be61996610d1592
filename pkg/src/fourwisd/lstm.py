"""Tire-force regression with a from-scratch LSTM.

Five IMU channels in, eight tire forces out (Fx then Fy, wheel order FL, FR,
RL, RR). Everything is plain numpy: batched forward pass, full
backpropagation through time, Adam with global-norm clipping and a step
learning-rate schedule.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import FORCE_CHANNELS, IMU_CHANNELS, TireForceSet

log = logging.getLogger(__name__)

N_IN = len(IMU_CHANNELS)
N_OUT = len(FORCE_CHANNELS)
CHECKPOINT_VERSION = 1
WARMUP = 200


class NonFiniteError(FloatingPointError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------- model


@dataclass
class LstmLayer:
    W: np.ndarray  # (4H, in) input weights, gate blocks i, f, g, o
    U: np.ndarray  # (4H, H) recurrent weights
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


@dataclass
class LstmModel:
    layers: list[LstmLayer]
    Wy: np.ndarray  # (8, H)
    by: np.ndarray  # (8,)
    x_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_IN))
    x_std: np.ndarray = field(default_factory=lambda: np.ones(N_IN))
    y_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_OUT))
    y_std: np.ndarray = field(default_factory=lambda: np.ones(N_OUT))

    def __post_init__(self):
        n_in = N_IN
        for k, layer in enumerate(self.layers):
            H = layer.hidden
            if layer.W.shape != (4 * H, n_in) or layer.U.shape != (4 * H, H) or layer.b.shape != (4 * H,):
                raise ValueError(f"layer {k} has inconsistent shapes")
            n_in = H
        if self.Wy.shape != (self.by.size, n_in):
            raise ValueError("head shape does not match the last hidden size")
        if np.any(self.x_std <= 0) or np.any(self.y_std <= 0):
            raise ValueError("normalization std must be positive")

    @classmethod
    def init(cls, hidden: int = 128, n_layers: int = 1, rng: np.random.Generator | None = None,
             n_in: int = N_IN, n_out: int = N_OUT, forget_bias: float = 1.0) -> "LstmModel":
        rng = rng or np.random.default_rng(0)
        layers = []
        fan_in = n_in
        for _ in range(n_layers):
            lim = math.sqrt(6.0 / (fan_in + hidden))
            W = rng.uniform(-lim, lim, (4 * hidden, fan_in))
            U = rng.uniform(-lim, lim, (4 * hidden, hidden))
            b = np.zeros(4 * hidden)
            b[hidden:2 * hidden] = forget_bias
            layers.append(LstmLayer(W, U, b))
            fan_in = hidden
        lim = math.sqrt(6.0 / (hidden + n_out))
        return cls(layers, rng.uniform(-lim, lim, (n_out, hidden)), np.zeros(n_out),
                   np.zeros(n_in), np.ones(n_in), np.zeros(n_out), np.ones(n_out))

    @classmethod
    def zeros(cls, hidden: int, n_layers: int = 1) -> "LstmModel":
        m = cls.init(hidden, n_layers)
        for name, arr in m.params().items():
            arr[...] = 0.0
        return m

    @property
    def hidden(self) -> int:
        return self.layers[-1].hidden

    def params(self) -> dict[str, np.ndarray]:
        """Live references to every trainable array, keyed by a stable name."""
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"W{k}"] = layer.W
            out[f"U{k}"] = layer.U
            out[f"b{k}"] = layer.b
        out["Wy"] = self.Wy
        out["by"] = self.by
        return out

    def copy(self) -> "LstmModel":
        return LstmModel([LstmLayer(l.W.copy(), l.U.copy(), l.b.copy()) for l in self.layers],
                         self.Wy.copy(), self.by.copy(), self.x_mean.copy(), self.x_std.copy(),
                         self.y_mean.copy(), self.y_std.copy())

    def normalize_inputs(self, x):
        return (np.asarray(x, dtype=float) - self.x_mean) / self.x_std

    def denormalize_outputs(self, y):
        return np.asarray(y) * self.y_std + self.y_mean

    # checkpoint ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "hidden": self.hidden,
            "n_layers": len(self.layers),
            "inputs": list(IMU_CHANNELS),
            "outputs": list(FORCE_CHANNELS),
            "layers": [{"W": l.W.tolist(), "U": l.U.tolist(), "b": l.b.tolist()} for l in self.layers],
            "Wy": self.Wy.tolist(),
            "by": self.by.tolist(),
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_std": self.y_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LstmModel":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        arr = lambda v: np.asarray(v, dtype=float)
        layers = [LstmLayer(arr(l["W"]), arr(l["U"]), arr(l["b"])) for l in d["layers"]]
        return cls(layers, arr(d["Wy"]), arr(d["by"]), arr(d["x_mean"]), arr(d["x_std"]),
                   arr(d["y_mean"]), arr(d["y_std"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "LstmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- forward / backward


def forward(model: LstmModel, sequence):
    """Run the network over ``sequence`` of shape (T, 5) or (B, T, 5), already normalized.

    Returns predictions shaped like the input's leading axes with 8 channels,
    and the cache needed by :func:`backward`.
    """
    x = np.asarray(sequence, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    B, T, _ = x.shape
    if T < 1:
        raise ValueError("empty sequence")
    caches = []
    inp = x
    for layer in model.layers:
        H = layer.hidden
        xw = inp @ layer.W.T + layer.b  # (B, T, 4H)
        if not np.all(np.isfinite(xw)):
            bad = int(np.argmax(~np.all(np.isfinite(xw), axis=(0, 2))))
            raise NonFiniteError(f"non-finite activation at step {bad}")
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T + 1, H))
        cs = np.empty((B, T + 1, H))
        gates = np.empty((B, T, 4 * H))
        hs[:, 0] = h
        cs[:, 0] = c
        for t in range(T):
            z = xw[:, t] + h @ layer.U.T
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            gates[:, t, :H] = i
            gates[:, t, H:2 * H] = f
            gates[:, t, 2 * H:3 * H] = g
            gates[:, t, 3 * H:] = o
            hs[:, t + 1] = h
            cs[:, t + 1] = c
        if not np.all(np.isfinite(hs)):
            bad = int(np.argmax(~np.all(np.isfinite(hs), axis=(0, 2)))) - 1
            raise NonFiniteError(f"non-finite activation at step {bad}")
        caches.append((inp, hs, cs, gates))
        inp = hs[:, 1:]
    y = inp @ model.Wy.T + model.by
    cache = {"layers": caches, "top": inp}
    return (y[0] if squeeze else y), cache


def loss_value(pred, target, reduction: str = "mean") -> float:
    err = np.asarray(pred) - np.asarray(target)
    return float(np.mean(err * err) if reduction == "mean" else np.sum(err * err))


def backward(model: LstmModel, cache, target, pred=None, reduction: str = "mean") -> dict[str, np.ndarray]:
    """Gradients of the squared-error loss with respect to every parameter."""
    top = cache["top"]
    target = np.asarray(target, dtype=float)
    if target.ndim == 2:
        target = target[None]
    if pred is None:
        pred = top @ model.Wy.T + model.by
    elif np.ndim(pred) == 2:
        pred = np.asarray(pred)[None]
    dy = 2.0 * (pred - target)
    if reduction == "mean":
        dy = dy / target.size
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    grads = {"Wy": np.einsum("bto,bth->oh", dy, top), "by": dy.sum(axis=(0, 1))}
    d_out = dy @ model.Wy  # (B, T, H)
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        inp, hs, cs, gates = cache["layers"][k]
        B, T, H = d_out.shape
        dW = np.zeros_like(layer.W)
        dU = np.zeros_like(layer.U)
        db = np.zeros_like(layer.b)
        d_inp = np.zeros_like(inp)
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dz = np.empty((B, 4 * H))
        for t in range(T - 1, -1, -1):
            i = gates[:, t, :H]
            f = gates[:, t, H:2 * H]
            g = gates[:, t, 2 * H:3 * H]
            o = gates[:, t, 3 * H:]
            c = cs[:, t + 1]
            c_prev = cs[:, t]
            tc = np.tanh(c)
            dh = d_out[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
            dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
            dW += dz.T @ inp[:, t]
            dU += dz.T @ hs[:, t]
            db += dz.sum(axis=0)
            d_inp[:, t] = dz @ layer.W
            dh_next = dz @ layer.U
            dc_next = dc * f
        grads[f"W{k}"] = dW
        grads[f"U{k}"] = dU
        grads[f"b{k}"] = db
        d_out = d_inp
    return grads


def loss_and_grads(model: LstmModel, x, target, reduction: str = "mean"):
    pred, cache = forward(model, x)
    return loss_value(pred, target, reduction), backward(model, cache, target, pred, reduction)


# ---------------------------------------------------------------- optimization


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 508
    validation_frequency: int = 10
    gradient_threshold: float = 0.886
    initial_learning_rate: float = 0.0039
    lr_drop_period: int = 162
    lr_drop_factor: float = 0.386
    mini_batch_size: int = 116
    sequence_length: int = 6553

    def __post_init__(self):
        if self.max_epochs < 1 or self.validation_frequency < 1 or self.lr_drop_period < 1:
            raise ValueError("epochs, validation frequency and drop period must be >= 1")
        if self.mini_batch_size < 1 or self.sequence_length < 1:
            raise ValueError("batch size and sequence length must be >= 1")
        if self.gradient_threshold <= 0 or self.initial_learning_rate <= 0:
            raise ValueError("gradient threshold and learning rate must be positive")
        if not 0 < self.lr_drop_factor <= 1:
            raise ValueError("drop factor must lie in (0, 1]")

    @classmethod
    def paper(cls) -> "TrainConfig":
        return cls()

    @classmethod
    def desk(cls) -> "TrainConfig":
        return cls(max_epochs=30, validation_frequency=10, gradient_threshold=0.886,
                   initial_learning_rate=0.01, lr_drop_period=10, lr_drop_factor=0.386,
                   mini_batch_size=8, sequence_length=256)

    def to_dict(self) -> dict:
        return asdict(self)


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Rate in effect during ``epoch`` (0-based): dropped once per completed period."""
    return cfg.initial_learning_rate * cfg.lr_drop_factor ** (epoch // cfg.lr_drop_period)


def clip_by_global_norm(grads: dict[str, np.ndarray], threshold: float):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > threshold:
        scale = threshold / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# ---------------------------------------------------------------- data


@dataclass
class Dataset:
    """Raw IMU inputs and force targets with disjoint train/test/validation index sets."""

    inputs: np.ndarray  # (N, 5)
    targets: np.ndarray  # (N, 8)
    train_idx: np.ndarray
    test_idx: np.ndarray
    val_idx: np.ndarray
    x_mean: np.ndarray = None
    x_std: np.ndarray = None
    y_mean: np.ndarray = None
    y_std: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets differ in length")
        for name in ("train_idx", "test_idx", "val_idx"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        if self.train_idx.size == 0:
            raise ValueError("empty training split")
        if self.x_mean is None:
            tr_x = self.inputs[self.train_idx]
            tr_y = self.targets[self.train_idx]
            self.x_mean, self.x_std = tr_x.mean(axis=0), _safe_std(tr_x)
            self.y_mean, self.y_std = tr_y.mean(axis=0), _safe_std(tr_y)

    @property
    def sizes(self) -> dict[str, int]:
        return {"train": int(self.train_idx.size), "test": int(self.test_idx.size),
                "validation": int(self.val_idx.size)}

    def norm_inputs(self) -> np.ndarray:
        return (self.inputs - self.x_mean) / self.x_std

    def norm_targets(self) -> np.ndarray:
        return (self.targets - self.y_mean) / self.y_std

    def runs(self, split: str) -> list[np.ndarray]:
        """Contiguous index runs of one split."""
        idx = {"train": self.train_idx, "test": self.test_idx, "validation": self.val_idx}[split]
        if idx.size == 0:
            return []
        breaks = np.flatnonzero(np.diff(idx) != 1) + 1
        return np.split(idx, breaks)

    def attach_normalization(self, model: LstmModel) -> LstmModel:
        model.x_mean, model.x_std = self.x_mean.copy(), self.x_std.copy()
        model.y_mean, model.y_std = self.y_mean.copy(), self.y_std.copy()
        return model

    # packed storage ---------------------------------------------------
    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        np.savez(d / "dataset.npz", inputs=self.inputs, targets=self.targets, train_idx=self.train_idx,
                 test_idx=self.test_idx, val_idx=self.val_idx)
        manifest = dict(self.meta)
        manifest.update({"splits": self.sizes, "samples": int(self.inputs.shape[0]),
                         "inputs": list(IMU_CHANNELS), "outputs": list(FORCE_CHANNELS),
                         "split_runs": {s: [[int(r[0]), int(r[-1]) + 1] for r in self.runs(s)]
                                        for s in ("train", "test", "validation")}})
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return d

    @classmethod
    def load(cls, directory) -> "Dataset":
        d = Path(directory)
        z = np.load(d / "dataset.npz")
        meta = json.loads((d / "manifest.json").read_text())
        return cls(z["inputs"], z["targets"], z["train_idx"], z["test_idx"], z["val_idx"], meta=meta)


def _safe_std(a):
    s = a.std(axis=0)
    return np.where(s > 1e-12, s, 1.0)


def block_split(n: int, block: int, pattern=(9, 2, 1)) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assign consecutive blocks to train/test/validation in the repeating ``pattern``."""
    if block < 1 or n < 1:
        raise ValueError("block and n must be positive")
    period = sum(pattern)
    labels = np.empty(n, dtype=np.int8)
    for start in range(0, n, block):
        slot = (start // block) % period
        labels[start:start + block] = 0 if slot < pattern[0] else (1 if slot < pattern[0] + pattern[1] else 2)
    idx = np.arange(n)
    return idx[labels == 0], idx[labels == 1], idx[labels == 2]


def _windows(runs: list[np.ndarray], length: int, rng: np.random.Generator | None) -> list[np.ndarray]:
    out = []
    for run in runs:
        if run.size < length:
            if run.size >= 2:
                out.append(run)
            continue
        offset = int(rng.integers(0, length)) % max(1, run.size - length + 1) if rng is not None else 0
        for s in range(offset, run.size - length + 1, length):
            out.append(run[s:s + length])
    return out


def split_rmse(model: LstmModel, data: Dataset, split: str, length: int) -> float:
    """RMSE on normalized targets over non-overlapping windows of one split."""
    xs, ys = data.norm_inputs(), data.norm_targets()
    sq, count = 0.0, 0
    for w in _windows(data.runs(split), length, None):
        pred, _ = forward(model, xs[w])
        sq += float(np.sum((pred - ys[w]) ** 2))
        count += pred.size
    return math.sqrt(sq / count) if count else math.nan


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    clipped_norm: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    val_iter: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)
    epochs: int = 0

    @property
    def final_val_rmse(self) -> float:
        return self.val_rmse[-1] if self.val_rmse else math.nan


def train(model: LstmModel, data: Dataset, cfg: TrainConfig, rng: np.random.Generator):
    """Mini-batch Adam on normalized data. Returns (trained copy, history)."""
    model = data.attach_normalization(model.copy())
    xs, ys = data.norm_inputs(), data.norm_targets()
    params = model.params()
    opt = Adam(params)
    hist = TrainHistory()
    it = 0
    val_len = min(cfg.sequence_length, max((r.size for r in data.runs("validation")), default=1))
    for epoch in range(cfg.max_epochs):
        lr = learning_rate(cfg, epoch)
        wins = _windows(data.runs("train"), cfg.sequence_length, rng)
        if not wins:
            raise ValueError("no training windows; sequence length exceeds every training run")
        order = rng.permutation(len(wins))
        for start in range(0, len(order), cfg.mini_batch_size):
            batch = [wins[j] for j in order[start:start + cfg.mini_batch_size]]
            T = min(w.size for w in batch)
            xb = np.stack([xs[w[:T]] for w in batch])
            yb = np.stack([ys[w[:T]] for w in batch])
            loss, grads = loss_and_grads(model, xb, yb)
            if not math.isfinite(loss):
                raise NonFiniteError(f"loss became {loss} at epoch {epoch}, iteration {it}")
            grads, norm = clip_by_global_norm(grads, cfg.gradient_threshold)
            clipped = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            assert clipped <= cfg.gradient_threshold * (1 + 1e-9)
            opt.step(params, grads, lr)
            it += 1
            hist.loss.append(loss)
            hist.grad_norm.append(norm)
            hist.clipped_norm.append(clipped)
            hist.lr.append(lr)
            if it % cfg.validation_frequency == 0 and data.val_idx.size:
                hist.val_iter.append(it)
                hist.val_rmse.append(split_rmse(model, data, "validation", val_len))
        hist.epochs = epoch + 1
    if data.val_idx.size and (not hist.val_iter or hist.val_iter[-1] != it):
        hist.val_iter.append(it)
        hist.val_rmse.append(split_rmse(model, data, "validation", val_len))
    return model, hist


# ---------------------------------------------------------------- inference


def predict_last(model: LstmModel, imu_window) -> tuple[np.ndarray, bool]:
    """Denormalized force prediction at the last step of a raw IMU window.

    The flag is set when any normalized input exceeds 10 standard deviations.
    """
    xn = model.normalize_inputs(imu_window)
    flag = bool(np.any(np.abs(xn) > 10.0))
    H = [l.hidden for l in model.layers]
    inp = xn
    for layer, h_size in zip(model.layers, H):
        xw = inp @ layer.W.T + layer.b
        h = np.zeros(h_size)
        c = np.zeros(h_size)
        hs = np.empty((xw.shape[0], h_size))
        UT = layer.U.T
        for t in range(xw.shape[0]):
            z = xw[t] + h @ UT
            i = sigmoid(z[:h_size])
            f = sigmoid(z[h_size:2 * h_size])
            g = np.tanh(z[2 * h_size:3 * h_size])
            o = sigmoid(z[3 * h_size:])
            c = f * c + i * g
            h = o * np.tanh(c)
            hs[t] = h
        inp = hs
    y = model.Wy @ inp[-1] + model.by
    return model.denormalize_outputs(y), flag


def estimate_forces(model: LstmModel, imu_window, warmup: int = WARMUP) -> tuple[TireForceSet, bool]:
    window = np.asarray(imu_window, dtype=float)
    if window.ndim != 2 or window.shape[1] != N_IN:
        raise ValueError(f"IMU window must be (T, {N_IN})")
    if window.shape[0] < warmup:
        raise ValueError(f"window of {window.shape[0]} samples is shorter than the {warmup}-sample warmup")
    y, flag = predict_last(model, window)
    if flag:
        log.debug("IMU input far outside the training distribution")
    return TireForceSet(y[:4], y[4:], np.zeros(4)), flag


class LstmEstimator:
    """Sliding-window wrapper fed with 1 kHz IMU samples."""

    def __init__(self, model: LstmModel, window: int = 256, warmup: int = WARMUP):
        if window < warmup:
            raise ValueError("window shorter than warmup")
        self.model = model
        self.window = window
        self.warmup = warmup
        self._buf = np.zeros((window, N_IN))
        self._n = 0
        self.flags = 0

    def push(self, sample) -> None:
        self._buf = np.roll(self._buf, -1, axis=0)
        self._buf[-1] = np.asarray(sample, dtype=float)
        self._n += 1

    @property
    def ready(self) -> bool:
        return self._n >= self.warmup

    def estimate(self) -> TireForceSet | None:
        if not self.ready:
            return None
        n = min(self._n, self.window)
        forces, flag = estimate_forces(self.model, self._buf[-n:], self.warmup)
        if flag and not self.flags:
            log.warning("IMU input far outside the training distribution (reported once per estimator)")
        self.flags += flag
        return forces


# ---------------------------------------------------------------- data generation


@dataclass(frozen=True)
class DataScenario:
    """Excitation drive used to record training data at 1 kHz.

    The low-friction patch is placed by fraction of the road length covered
    by ``samples`` at ``vx``.
    """

    samples: int = 120_000
    vx: float = 22.22
    mu: float = 0.85
    patch: tuple = (0.35, 0.55)
    patch_mu: float = 0.2
    steer_amp: float = 0.015
    rear_ratio: float = 0.3
    torque_amp: float = 150.0
    yaw_torque_amp: float = 800.0
    lane_offset: float = 1.5
    lane_hold_s: tuple = (2.0, 5.0)
    noise: str | None = None
    seed: int = 0

    @classmethod
    def paper(cls, seed: int = 0) -> "DataScenario":
        return cls(seed=seed)

    @classmethod
    def desk(cls, seed: int = 0) -> "DataScenario":
        return cls(samples=12_000, seed=seed)

    @property
    def road_length(self) -> float:
        return self.vx * self.samples * 1e-3

    def road(self):
        from .plant import RoadProfile

        a, b = self.patch
        L = self.road_length
        return RoadProfile(((a * L, b * L, self.patch_mu),), self.mu, transition=2.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patch"] = list(self.patch)
        d["lane_hold_s"] = list(self.lane_hold_s)
        return d


def _excitation(rng: np.random.Generator, n_terms: int, f_lo: float, f_hi: float):
    freqs = rng.uniform(f_lo, f_hi, n_terms)
    phases = rng.uniform(0.0, 2 * math.pi, n_terms)
    weights = rng.uniform(0.5, 1.0, n_terms)
    weights /= weights.sum()
    return lambda t: float(np.sum(weights * np.sin(2 * math.pi * freqs * t + phases)))


def generate_dataset(scn: DataScenario, rng: np.random.Generator | None = None) -> Dataset:
    """Drive the plant with lane changes and sinusoidal excitation; record IMU and true forces.

    A lane-keeping driver (heading PD toward a lane target that switches at
    random intervals) keeps the run on the road; excitation is scaled by the
    local friction so the low-friction patch does not spin the vehicle.
    Plant divergence propagates.
    """
    from .dyc import cruise_torque
    from .domain import MAX_STEER, ControlCommand, default_params
    from .plant import NoiseSpec, Plant, PlantState, sample_imu

    rng = rng if rng is not None else np.random.default_rng(scn.seed)
    p = default_params()
    road = scn.road()
    plant = Plant(PlantState.cruising(scn.vx, p), road, p)
    noise = NoiseSpec.case(scn.noise)
    steer_front = _excitation(rng, 3, 0.2, 1.5)
    steer_rear = _excitation(rng, 2, 0.1, 1.0)
    torque_ex = [_excitation(rng, 2, 0.1, 2.0) for _ in range(4)]
    yaw_ex = _excitation(rng, 3, 0.2, 3.0)
    # left/right antisymmetric pattern, the shape a yaw-moment controller commands
    yaw_pattern = np.array([1.0, -1.0, 1.0, -1.0])
    n = scn.samples
    inputs = np.empty((n, N_IN))
    targets = np.empty((n, N_OUT))
    lane_target, next_switch = 0.0, float(rng.uniform(*scn.lane_hold_s))
    cmd = ControlCommand.zero()
    for k in range(n):
        if k % 10 == 0:
            t = k * 1e-3
            s = plant.state
            if t >= next_switch:
                lane_target = float(rng.choice([-scn.lane_offset, 0.0, scn.lane_offset]))
                next_switch = t + float(rng.uniform(*scn.lane_hold_s))
            grip = float(road.mu_at(s.X)) / scn.mu
            psi_lim = 0.08 * grip
            psi_des = float(np.clip(0.15 * (lane_target - s.Y), -psi_lim, psi_lim))
            base = 0.8 * (psi_des - s.yaw) - 0.08 * s.yaw_rate
            front = base + scn.steer_amp * grip * steer_front(t)
            rear = scn.rear_ratio * scn.steer_amp * grip * steer_rear(t)
            delta = np.clip([front, front, rear, rear], -MAX_STEER, MAX_STEER)
            torque = (cruise_torque(s.vx, scn.vx, p)
                      + scn.torque_amp * grip * np.array([f(t) for f in torque_ex])
                      + scn.yaw_torque_amp * grip * yaw_ex(t) * yaw_pattern)
            cmd = ControlCommand(delta, torque)
        plant.step(cmd, 1e-3)
        inputs[k] = sample_imu(plant.state, noise, rng).as_array()
        f = plant.forces
        targets[k, :4] = f.fx
        targets[k, 4:] = f.fy
    train_idx, test_idx, val_idx = block_split(n, max(1, n // 12))
    meta = {"scenario": scn.to_dict(), "seed": scn.seed, "road": road.to_dict()}
    return Dataset(inputs, targets, train_idx, test_idx, val_idx, meta=meta)
