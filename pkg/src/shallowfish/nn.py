"""Minimal dense-network stack: forward, backprop, dropout, Adam, losses.

Covers exactly the topologies this project needs (tanh/sigmoid autoencoder,
relu/softmax classifier, relu/tanh regressor). Parameters are float32;
tests may widen to float64 for finite-difference checks.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

EPS = 1e-7

ACTIVATIONS = ("tanh", "sigmoid", "relu", "softmax", "linear")


class DimensionError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class WeightFileError(ValueError):
    pass


@dataclass
class Layer:
    w: np.ndarray  # (in_dim, out_dim)
    b: np.ndarray  # (out_dim,)
    activation: str


@dataclass
class NetworkParams:
    layers: list[Layer]
    dropout: float = 0.0  # applied to the output of every hidden layer

    @property
    def dims(self):
        return [self.layers[0].w.shape[0]] + [l.w.shape[1] for l in self.layers]


def init_network(dims, activations, dropout=0.0, seed=0) -> NetworkParams:
    """Glorot-uniform initialization with a fixed seed."""
    if len(activations) != len(dims) - 1:
        raise DimensionError("need one activation per weight layer")
    for a in activations:
        if a not in ACTIVATIONS:
            raise DimensionError(f"unknown activation {a!r}")
    if "softmax" in activations[:-1]:
        raise DimensionError("softmax only allowed on the output layer")
    rng = np.random.default_rng(seed)
    layers = []
    for i, act in enumerate(activations):
        fan_in, fan_out = dims[i], dims[i + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)
        b = np.zeros(fan_out, dtype=np.float32)
        layers.append(Layer(w, b, act))
    return NetworkParams(layers, dropout)


def _activate(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "softmax":
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    return z  # linear


def _activate_deriv(a, kind):
    # derivative expressed through the activation value
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "relu":
        return (a > 0).astype(a.dtype)
    if kind == "linear":
        return np.ones_like(a)
    raise DimensionError(f"no elementwise derivative for {kind}")


def _forward_full(net, x, mode, seed):
    """Returns (activations per layer incl. input, dropout masks per hidden layer)."""
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.layers[0].w.shape[0]:
        raise DimensionError(
            f"input dim {x.shape[1]} != first layer dim {net.layers[0].w.shape[0]}"
        )
    rng = np.random.default_rng(seed) if mode == "train" and net.dropout > 0 else None
    keep = 1.0 - net.dropout
    acts = [x.astype(net.layers[0].w.dtype, copy=False)]
    raw = [acts[0]]  # pre-dropout activations, needed for derivatives
    masks = []
    n = len(net.layers)
    for i, layer in enumerate(net.layers):
        z = acts[-1] @ layer.w + layer.b
        a = _activate(z, layer.activation)
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite activation at layer {i}")
        raw.append(a)
        if i < n - 1 and rng is not None:
            # inverted dropout: inference needs no rescaling
            mask = (rng.random(a.shape) < keep).astype(a.dtype)
            a = a * mask / keep
            masks.append(mask)
        else:
            masks.append(None)
        acts.append(a)
    return acts, raw, masks


def forward(net: NetworkParams, x, mode: str = "infer", seed: int = 0) -> np.ndarray:
    """Run the network; deterministic in infer mode and for a fixed seed in train mode."""
    acts, _, _ = _forward_full(net, x, mode, seed)
    return acts[-1]


# -- losses -----------------------------------------------------------------

def loss_bce(predicted, target) -> float:
    """Mean binary cross-entropy over all elements."""
    p = np.clip(np.asarray(predicted, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def loss_categorical_ce(predicted, target) -> float:
    """Cross-entropy of one-hot targets, averaged over the batch."""
    p = np.clip(np.asarray(predicted, dtype=np.float64), EPS, 1.0)
    y = np.asarray(target, dtype=np.float64)
    if p.ndim == 1:
        p, y = p[None, :], y[None, :]
    return float(np.mean(-np.sum(y * np.log(p), axis=-1)))


def loss_mse(predicted, target) -> float:
    """Mean squared error over all elements."""
    d = np.asarray(predicted, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(d * d))


LOSSES = {"bce": loss_bce, "cce": loss_categorical_ce, "mse": loss_mse}


def compute_loss(kind, predicted, target) -> float:
    return LOSSES[kind](predicted, target)


# -- backprop ---------------------------------------------------------------

def backward(net: NetworkParams, x, y, loss_kind: str, mode: str = "train", seed: int = 0):
    """Gradients of the mean loss w.r.t. every weight and bias.

    Returns (grads, loss) where grads is a list of (dW, db) per layer.
    """
    acts, raw, masks = _forward_full(net, x, mode, seed)
    out = acts[-1]
    y = np.asarray(y, dtype=out.dtype)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape != out.shape:
        raise DimensionError(f"target shape {y.shape} != output shape {out.shape}")
    loss = compute_loss(loss_kind, out, y)

    batch = out.shape[0]
    last = net.layers[-1].activation
    if loss_kind == "bce":
        if last != "sigmoid":
            raise DimensionError("bce expects a sigmoid output layer")
        delta = (out - y) / out.size
    elif loss_kind == "cce":
        if last != "softmax":
            raise DimensionError("cce expects a softmax output layer")
        delta = (out - y) / batch
    elif loss_kind == "mse":
        dL = 2.0 * (out - y) / out.size
        delta = dL * _activate_deriv(out, last)
    else:
        raise DimensionError(f"unknown loss {loss_kind!r}")

    keep = 1.0 - net.dropout
    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        a_in = acts[i]
        dw = a_in.T @ delta
        db = delta.sum(axis=0)
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise FloatingPointError(f"non-finite gradient at layer {i}")
        grads[i] = (dw, db)
        if i > 0:
            delta = delta @ net.layers[i].w.T
            if masks[i - 1] is not None:
                delta = delta * masks[i - 1] / keep
            delta = delta * _activate_deriv(raw[i], net.layers[i - 1].activation)
    return grads, loss


# -- Adam -------------------------------------------------------------------

@dataclass
class AdamState:
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    lr: float = 0.001
    beta1: float = 0.90
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net, lr=0.001, beta1=0.90, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for layer in net.layers:
            state.m.append((np.zeros_like(layer.w), np.zeros_like(layer.b)))
            state.v.append((np.zeros_like(layer.w), np.zeros_like(layer.b)))
        return state


def adam_step(net: NetworkParams, grads, state: AdamState):
    """Standard Adam update with bias correction; mutates net and state."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for layer, (gw, gb), mm, vv in zip(net.layers, grads, state.m, state.v):
        for param, g, m, v in ((layer.w, gw, mm[0], vv[0]), (layer.b, gb, mm[1], vv[1])):
            g = g.astype(param.dtype, copy=False)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            param -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state


# -- training loop ----------------------------------------------------------

def accuracy(predicted, target_one_hot) -> float:
    p = np.asarray(predicted)
    y = np.asarray(target_one_hot)
    return float(np.mean(p.argmax(axis=-1) == y.argmax(axis=-1)))


def evaluate(net, x, y, loss_kind, batch_size=1024):
    """Loss (and argmax accuracy for cce) over a dataset in infer mode."""
    losses = []
    accs = []
    n = len(x)
    for i in range(0, n, batch_size):
        out = forward(net, x[i : i + batch_size])
        yb = y[i : i + batch_size]
        losses.append(compute_loss(loss_kind, out, yb) * len(out))
        if loss_kind == "cce":
            accs.append(accuracy(out, yb) * len(out))
    result = {"loss": sum(losses) / n}
    if accs:
        result["accuracy"] = sum(accs) / n
    return result


def train(
    net: NetworkParams,
    x,
    y,
    loss_kind: str,
    epochs: int,
    batch_size: int = 256,
    seed: int = 0,
    adam: AdamState | None = None,
    test_x=None,
    test_y=None,
    epoch_hook=None,
):
    """Mini-batch training; deterministic given the seed. Returns per-epoch metrics."""
    if len(x) == 0:
        raise DimensionError("empty dataset")
    if adam is None:
        adam = AdamState.for_network(net)
    rng = np.random.default_rng(seed)
    metrics = []
    n = len(x)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, batch_size)):
            idx = order[start : start + batch_size]
            step_seed = (seed * 1_000_003 + epoch * 10_007 + bi) & 0x7FFFFFFF
            try:
                grads, loss = backward(net, x[idx], y[idx], loss_kind, seed=step_seed)
            except FloatingPointError:
                raise TrainingDiverged(epoch, bi) from None
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, bi)
            adam_step(net, grads, adam)
            total += loss * len(idx)
        record = {"epoch": epoch, "train_loss": total / n}
        if test_x is not None:
            record.update({f"test_{k}": v for k, v in evaluate(net, test_x, test_y, loss_kind).items()})
        metrics.append(record)
        if epoch_hook is not None:
            epoch_hook(record)
    return metrics


def metrics_to_csv(metrics, path):
    """Per-epoch metrics as CSV (epoch, loss[, accuracy] columns)."""
    if not metrics:
        return
    keys = list(metrics[0].keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(keys) + "\n")
        for row in metrics:
            fh.write(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in keys) + "\n")


# -- weight files -----------------------------------------------------------

_MAGIC = b"SFNW"
_VERSION = 1
_ACT_TAGS = {a: i for i, a in enumerate(ACTIVATIONS)}


def save_params(net: NetworkParams, path):
    payload = bytearray()
    payload += struct.pack("<If", len(net.layers), net.dropout)
    for layer in net.layers:
        w = np.ascontiguousarray(layer.w, dtype="<f4")
        b = np.ascontiguousarray(layer.b, dtype="<f4")
        payload += struct.pack("<IIB", w.shape[0], w.shape[1], _ACT_TAGS[layer.activation])
        payload += w.tobytes()
        payload += b.tobytes()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<I", zlib.crc32(payload)))
        fh.write(payload)


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise WeightFileError("bad magic bytes")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _VERSION:
        raise WeightFileError(f"unsupported version {version}")
    (crc,) = struct.unpack_from("<I", raw, 8)
    payload = raw[12:]
    if zlib.crc32(payload) != crc:
        raise WeightFileError("checksum mismatch")
    try:
        n_layers, dropout = struct.unpack_from("<If", payload, 0)
        off = 8
        layers = []
        for _ in range(n_layers):
            din, dout, tag = struct.unpack_from("<IIB", payload, off)
            off += 9
            w = np.frombuffer(payload, dtype="<f4", count=din * dout, offset=off).reshape(din, dout).copy()
            off += 4 * din * dout
            b = np.frombuffer(payload, dtype="<f4", count=dout, offset=off).copy()
            off += 4 * dout
            layers.append(Layer(w, b, ACTIVATIONS[tag]))
        if off != len(payload):
            raise WeightFileError("trailing bytes in weight file")
    except (struct.error, ValueError) as exc:
        raise WeightFileError(f"truncated weight file: {exc}") from None
    return NetworkParams(layers, float(dropout))


def cast_network(net: NetworkParams, dtype) -> NetworkParams:
    """Copy of the network with parameters in another float width (for oracles)."""
    return NetworkParams(
        [Layer(l.w.astype(dtype), l.b.astype(dtype), l.activation) for l in net.layers],
        net.dropout,
    )
