"""Small double-precision neural-network engine.

Layers operate on batches: 1-D conv inputs are (batch, length, channels),
dense inputs are (batch, features). Every layer caches what its backward pass
needs during ``forward`` and accumulates nothing between calls, so
``backward`` must follow the matching ``forward``.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


# functional kernels ------------------------------------------------------------


def conv1d_forward(x, kernel, bias=None):
    """Same-padded cross-correlation. x: (B, L, Cin), kernel: (k, Cin, Cout)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    k, cin, cout = kernel.shape
    if x.shape[2] != cin:
        raise ValueError(f"input has {x.shape[2]} channels, kernel expects {cin}")
    if k % 2 == 0:
        raise ValueError("same padding needs an odd kernel size")
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    # windows: (B, L, Cin, k) -> (B, L, k, Cin)
    cols = sliding_window_view(xp, k, axis=1).transpose(0, 1, 3, 2)
    b, length = x.shape[:2]
    cols = cols.reshape(b * length, k * cin)
    out = cols @ kernel.reshape(k * cin, cout)
    if bias is not None:
        out += bias
    return out.reshape(b, length, cout), (cols, x.shape, kernel)


def conv1d_backward(dout, cache):
    cols, x_shape, kernel = cache
    b, length, cin = x_shape
    k, _, cout = kernel.shape
    pad = (k - 1) // 2
    d2 = dout.reshape(b * length, cout)
    dkernel = (cols.T @ d2).reshape(kernel.shape)
    dbias = d2.sum(axis=0)
    dcols = (d2 @ kernel.reshape(k * cin, cout).T).reshape(b, length, k, cin)
    dxp = np.zeros((b, length + 2 * pad, cin))
    for j in range(k):
        dxp[:, j:j + length, :] += dcols[:, :, j, :]
    return dxp[:, pad:pad + length, :], dkernel, dbias


def dense_forward(x, weights, bias):
    x = np.asarray(x, dtype=float)
    return x @ weights + bias, x


def dense_backward(dout, x, weights):
    return dout @ weights.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    labels = np.atleast_1d(np.asarray(labels, dtype=int))
    n, c = logits.shape
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("label out of range")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(n), labels]))
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=float)
    diff = pred - np.asarray(target, dtype=float)
    return float(0.5 * np.mean(np.sum(diff.reshape(diff.shape[0], -1) ** 2, axis=1))), diff / diff.shape[0]


# layers --------------------------------------------------------------------------


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def spec(self) -> dict:
        return {"type": self.kind}

    def output_shape(self, input_shape):
        return input_shape


class Conv1D(Layer):
    kind = "conv1d"

    def __init__(self, in_channels, filters, kernel=9, padding="same", rng=None):
        super().__init__()
        if padding != "same":
            raise ValueError("only 'same' padding is supported")
        rng = rng or np.random.default_rng(0)
        self.in_channels, self.filters, self.kernel, self.padding = in_channels, filters, kernel, padding
        w = _he_uniform(rng, (kernel, in_channels, filters), kernel * in_channels)
        self.params = [w, np.zeros(filters)]
        self.grads = [np.zeros_like(p) for p in self.params]

    def forward(self, x):
        out, self._cache = conv1d_forward(x, self.params[0], self.params[1])
        return out

    def backward(self, dout):
        dx, dw, db = conv1d_backward(dout, self._cache)
        self.grads[0][...] = dw
        self.grads[1][...] = db
        return dx

    def spec(self):
        return {"type": self.kind, "in_channels": self.in_channels, "filters": self.filters,
                "kernel": self.kernel, "padding": self.padding}

    def output_shape(self, input_shape):
        length, channels = input_shape
        if channels != self.in_channels:
            raise ValueError(f"conv1d expects {self.in_channels} channels, got {channels}")
        return (length, self.filters)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, units, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.in_features, self.units = in_features, units
        self.params = [_he_uniform(rng, (in_features, units), in_features), np.zeros(units)]
        self.grads = [np.zeros_like(p) for p in self.params]

    def forward(self, x):
        out, self._x = dense_forward(x, self.params[0], self.params[1])
        return out

    def backward(self, dout):
        dx, dw, db = dense_backward(dout, self._x, self.params[0])
        self.grads[0][...] = dw
        self.grads[1][...] = db
        return dx

    def spec(self):
        return {"type": self.kind, "in_features": self.in_features, "units": self.units}

    def output_shape(self, input_shape):
        if input_shape[-1] != self.in_features:
            raise ValueError(f"dense expects {self.in_features} features, got {input_shape[-1]}")
        return (*input_shape[:-1], self.units)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class GlobalAveragePool1D(Layer):
    kind = "gap"

    def forward(self, x):
        self._length = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dout):
        return np.repeat(dout[:, None, :] / self._length, self._length, axis=1)

    def output_shape(self, input_shape):
        return (input_shape[-1],)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x):
        self._p = softmax(x)
        return self._p

    def backward(self, dout):
        p = self._p
        return p * (dout - np.sum(dout * p, axis=-1, keepdims=True))


_LAYER_TYPES = {cls.kind: cls for cls in (Conv1D, Dense, ReLU, GlobalAveragePool1D, Softmax)}


class Sequential:
    """Ordered stack of layers with flat parameter/gradient access."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    @classmethod
    def from_specs(cls, specs, input_shape, seed=0):
        rng = np.random.default_rng(seed)
        layers = []
        for spec in specs:
            spec = dict(spec)
            kind = spec.pop("type")
            if kind in ("conv1d", "dense"):
                spec["rng"] = rng
            layers.append(_LAYER_TYPES[kind](**spec))
        return cls(layers, input_shape)

    def forward(self, x):
        out = np.asarray(x, dtype=float)
        for layer in self.layers:
            out = layer.forward(out)
        return out

    __call__ = forward

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    def gradients(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def to_dict(self) -> dict:
        return {"version": FORMAT_VERSION, "kind": "sequential", "input_shape": list(self.input_shape),
                "layers": self.specs(), "params": [encode_array(p) for p in self.parameters()]}

    @classmethod
    def from_dict(cls, d):
        model = cls.from_specs(d["layers"], d["input_shape"])
        load_parameters(model, [decode_array(p) for p in d["params"]])
        return model


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).copy()


def load_parameters(model, arrays):
    params = model.parameters()
    if len(params) != len(arrays):
        raise ValueError("parameter count mismatch")
    for p, a in zip(params, arrays):
        if p.shape != a.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {a.shape}")
        p[...] = a


def save_model(model, path, metadata: dict | None = None):
    d = model.to_dict()
    if metadata:
        d["metadata"] = metadata
    Path(path).write_text(json.dumps(d))


def load_model(path):
    d = json.loads(Path(path).read_text())
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')!r}")
    return Sequential.from_dict(d), d.get("metadata", {})


# optimizers --------------------------------------------------------------------


class SGD:
    def __init__(self, params, lr=1e-2):
        self.params, self.lr = params, lr

    def step(self, grads):
        for p, g in zip(self.params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr, self.beta1, self.beta2, self.eps = params, lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    epochs: int = 50
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def make_optimizer(params, config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD(params, config.learning_rate)
    return Adam(params, config.learning_rate)


def train(model, X, y, config: TrainConfig, loss=softmax_xent, on_epoch=None):
    """Mini-batch training with a seeded shuffle per epoch.

    Returns the per-epoch mean training loss. ``on_epoch(epoch, loss)`` is
    called after every epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(model.parameters(), config)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(X), config.batch_size):
            idx = order[start:start + config.batch_size]
            value, dout = loss(model.forward(X[idx]), y[idx])
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, batch starting {start}")
            model.backward(dout)
            if config.learning_rate > 0:
                opt.step(model.gradients())
            total += value * len(idx)
        history.append(total / len(X))
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return model, history


def gradient_check(model, x, target, loss=softmax_xent, n_params: int = 200, h: float = 1e-5,
                   seed: int = 0, floor: float = 1e-8) -> float:
    """Max relative error between backprop and central differences.

    Relative error is |a - n| / max(|a| + |n|, floor) on up to ``n_params``
    randomly chosen scalar parameters. A model without parameters returns 0.
    """
    params = model.parameters()
    sizes = [p.size for p in params]
    total = sum(sizes)
    if total == 0:
        return 0.0
    _, dout = loss(model.forward(x), target)
    model.backward(dout)
    analytic = np.concatenate([g.reshape(-1) for g in model.gradients()])
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_params, total), replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in picks:
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        p = params[which].reshape(-1)
        i = flat - offsets[which]
        orig = p[i]
        p[i] = orig + h
        up, _ = loss(model.forward(x), target)
        p[i] = orig - h
        down, _ = loss(model.forward(x), target)
        p[i] = orig
        numeric = (up - down) / (2 * h)
        err = abs(analytic[flat] - numeric) / max(abs(analytic[flat]) + abs(numeric), floor)
        worst = max(worst, err)
    return float(worst)
