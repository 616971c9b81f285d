"""The trainable feature extractor: a small fully-connected network with
analytic forward/backward passes, an SGD + cosine-annealing optimizer,
and the hypersphere center attached to it.

Parameters live in float64; checkpoints store float32 (wire dtype).
"""
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError, TrainingError

NET_MAGIC = b"NET1"


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray | None  # (out,)
    activation: str  # "tanh" | "identity"


@dataclass
class ProjectionNetwork:
    layers: list
    center: np.ndarray | None = None
    version: int = 0  # bumped on every parameter update; invalidates caches

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[0]

    def num_params(self):
        return sum(l.weight.size + (l.bias.size if l.bias is not None else 0) for l in self.layers)


@dataclass
class ActivationCache:
    version: int
    batch_shape: tuple
    inputs: list  # input to each layer
    outputs: list  # post-activation output of each layer


@dataclass
class GradientBundle:
    weights: list
    biases: list  # entries None for bias-free layers

    def __iadd__(self, other):
        for i in range(len(self.weights)):
            self.weights[i] += other.weights[i]
            if self.biases[i] is not None:
                self.biases[i] += other.biases[i]
        return self

    def all_finite(self):
        return all(np.all(np.isfinite(w)) for w in self.weights) and all(
            b is None or np.all(np.isfinite(b)) for b in self.biases
        )


def init_network(input_dim, hidden_dims, output_dim, seed, bias=True):
    """Fan-in-scaled uniform init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    so Var(W) = 1/(3*fan_in). Biases start at zero. Hidden layers are tanh,
    the final layer is identity."""
    dims = [input_dim] + list(hidden_dims) + [output_dim]
    if any(d < 1 for d in dims):
        raise DataError("all layer dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = np.zeros(fan_out) if bias else None
        act = "identity" if i == len(dims) - 2 else "tanh"
        layers.append(Layer(w, b, act))
    return ProjectionNetwork(layers)


def forward(net, batch, want_cache=False):
    """Map a (B, input_dim) batch through the network. With
    ``want_cache=True`` returns (output, cache) for a later backward()."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DataError(f"batch shape {x.shape} does not match input_dim {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise DataError("batch contains non-finite values")
    inputs, outputs = [], []
    for layer in net.layers:
        inputs.append(x)
        z = x @ layer.weight.T
        if layer.bias is not None:
            z += layer.bias
        x = np.tanh(z) if layer.activation == "tanh" else z
        outputs.append(x)
    if want_cache:
        return x, ActivationCache(net.version, x.shape, inputs, outputs)
    return x


def backward(net, cache, upstream_grad):
    """Reverse pass: given dL/d(output) for the cached batch, return dL/dθ."""
    if cache is None or cache.version != net.version:
        raise TrainingError("stale or missing activation cache; rerun forward() after parameter updates")
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != cache.batch_shape:
        raise TrainingError(f"upstream grad shape {g.shape} does not match cached batch {cache.batch_shape}")
    grads_w = [None] * len(net.layers)
    grads_b = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "tanh":
            g = g * (1.0 - cache.outputs[i] ** 2)
        grads_w[i] = g.T @ cache.inputs[i]
        grads_b[i] = g.sum(axis=0) if layer.bias is not None else None
        if i > 0:
            g = g @ layer.weight
    return GradientBundle(grads_w, grads_b)


def zero_gradients(net):
    return GradientBundle(
        [np.zeros_like(l.weight) for l in net.layers],
        [np.zeros_like(l.bias) if l.bias is not None else None for l in net.layers],
    )


@dataclass
class OptimizerState:
    """SGD with cosine annealing: lr(t) = base_lr * 0.5 * (1 + cos(pi*t/T))."""

    base_lr: float
    weight_decay: float = 0.0
    total_steps: int = 1
    momentum: float = 0.0
    step_count: int = 0
    velocity: GradientBundle | None = field(default=None, repr=False)

    def current_lr(self):
        t = min(self.step_count, self.total_steps)
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * t / self.total_steps))


def sgd_step(net, grads, opt):
    """θ <- θ - lr * (g + weight_decay * θ), with optional momentum."""
    if not grads.all_finite():
        raise TrainingError("non-finite gradient")
    lr = opt.current_lr()
    use_momentum = opt.momentum != 0.0
    if use_momentum and opt.velocity is None:
        opt.velocity = zero_gradients(net)
    for i, layer in enumerate(net.layers):
        gw = grads.weights[i] + opt.weight_decay * layer.weight
        if use_momentum:
            opt.velocity.weights[i] = opt.momentum * opt.velocity.weights[i] + gw
            gw = opt.velocity.weights[i]
        layer.weight -= lr * gw
        if layer.bias is not None:
            gb = grads.biases[i] + opt.weight_decay * layer.bias
            if use_momentum:
                opt.velocity.biases[i] = opt.momentum * opt.velocity.biases[i] + gb
                gb = opt.velocity.biases[i]
            layer.bias -= lr * gb
    opt.step_count += 1
    net.version += 1


def set_center(net, source):
    """Fix the hypersphere center to the mean of the source features under
    the current parameters. The source must be normal-only."""
    if source.labels is None or np.any(source.labels != 0):
        raise DataError("center requires a normal-only source (labels all 0)")
    if source.n < 1:
        raise DataError("empty source")
    feats = forward(net, source.features)
    net.center = feats.mean(axis=0)


# ---------------------------------------------------------------------------
# Checkpoints


def save_network(net, path, config_hash=None):
    header = {
        "dims": [net.input_dim] + [l.weight.shape[0] for l in net.layers],
        "activations": [l.activation for l in net.layers],
        "bias": net.layers[0].bias is not None,
        "has_center": net.center is not None,
    }
    if config_hash is not None:
        header["config_hash"] = config_hash
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = []
    for l in net.layers:
        parts.append(np.ascontiguousarray(l.weight, dtype="<f4").tobytes())
        if l.bias is not None:
            parts.append(np.ascontiguousarray(l.bias, dtype="<f4").tobytes())
    if net.center is not None:
        parts.append(np.ascontiguousarray(net.center, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in parts:
            fh.write(p)


def load_network(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != NET_MAGIC:
        raise FormatError(f"{path}: bad magic")
    (hlen,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
        dims = [int(d) for d in header["dims"]]
        activations = header["activations"]
        has_bias = bool(header["bias"])
        has_center = bool(header["has_center"])
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: bad header: {exc}") from exc
    off = 8 + hlen
    need = sum(dims[i] * dims[i + 1] + (dims[i + 1] if has_bias else 0) for i in range(len(dims) - 1))
    need += dims[-1] if has_center else 0
    if len(blob) - off != need * 4:
        raise FormatError(f"{path}: payload length {len(blob) - off}, expected {need * 4}")
    vals = np.frombuffer(blob, dtype="<f4", offset=off).astype(np.float64)
    pos = 0
    layers = []
    for i in range(len(dims) - 1):
        w = vals[pos : pos + dims[i] * dims[i + 1]].reshape(dims[i + 1], dims[i]).copy()
        pos += dims[i] * dims[i + 1]
        b = None
        if has_bias:
            b = vals[pos : pos + dims[i + 1]].copy()
            pos += dims[i + 1]
        layers.append(Layer(w, b, activations[i]))
    center = vals[pos : pos + dims[-1]].copy() if has_center else None
    return ProjectionNetwork(layers, center=center)
