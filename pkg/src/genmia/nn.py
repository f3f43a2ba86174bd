"""Dense networks with explicit forward/backward passes.

Everything is float64. A network is a list of affine layers, each followed by
one of a fixed set of activations. ``forward`` returns a cache that
``backward`` consumes; the cache remembers which network (and which parameter
version) produced it so stale caches are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    CacheError,
    InvalidArchitectureError,
    ShapeError,
    TrainingDivergedError,
)
from .rng import RngSeed, as_seed

FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")
BCE_CLAMP = 1e-7


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return sigmoid(z)
    return z


def _activation_grad(z, a, kind):
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str


class DenseNet:
    """Feed-forward stack of affine + activation layers."""

    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise InvalidArchitectureError("a network needs at least one layer")
        for k, layer in enumerate(layers):
            if layer.activation not in ACTIVATIONS:
                raise InvalidArchitectureError(f"unknown activation {layer.activation!r}")
            w, b = layer.weight, layer.bias
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise InvalidArchitectureError(f"layer {k} has inconsistent weight/bias shapes")
            if k and w.shape[1] != layers[k - 1].weight.shape[0]:
                raise InvalidArchitectureError(
                    f"layer {k} expects {w.shape[1]} inputs but layer {k - 1} emits "
                    f"{layers[k - 1].weight.shape[0]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidArchitectureError(f"layer {k} has non-finite parameters")
        self.layers = list(layers)
        self.version = 0

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def arch(self) -> list[tuple[int, str]]:
        return [(layer.weight.shape[0], layer.activation) for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.layers:
            params.extend((layer.weight, layer.bias))
        return params

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, x):
        return predict(self, x)

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "in_dim": self.in_dim,
            "arch": [[w, a] for w, a in self.arch],
            "weights": [
                {"weight": l.weight.tolist(), "bias": l.bias.tolist()} for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DenseNet":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported network format_version {doc.get('format_version')!r}")
        layers = []
        for (width, act), w in zip(doc["arch"], doc["weights"]):
            weight = np.array(w["weight"], dtype=np.float64).reshape(int(width), -1)
            layers.append(Layer(weight, np.array(w["bias"], dtype=np.float64), act))
        net = cls(layers)
        if net.in_dim != doc["in_dim"]:
            raise InvalidArchitectureError("serialized in_dim does not match first layer")
        return net

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False)

    @classmethod
    def loads(cls, text: str) -> "DenseNet":
        return cls.from_dict(json.loads(text))

    def equals(self, other: "DenseNet") -> bool:
        if self.arch != other.arch or self.in_dim != other.in_dim:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters()))


def net_init(
    in_dim: int,
    arch: Sequence[tuple[int, str]],
    seed: RngSeed | int,
    *,
    zero_last: bool = False,
) -> DenseNet:
    """Initialise weights ~ N(0, 1/fan_in) and zero biases.

    ``zero_last`` zeroes the final weight matrix, so the untrained network
    outputs its final bias (zero) for every input.
    """
    if not arch:
        raise InvalidArchitectureError("architecture must be non-empty")
    if int(in_dim) <= 0:
        raise InvalidArchitectureError(f"input width must be positive, got {in_dim}")
    rng = as_seed(seed).generator()
    layers = []
    fan_in = int(in_dim)
    for k, (width, act) in enumerate(arch):
        width = int(width)
        if width <= 0:
            raise InvalidArchitectureError(f"layer {k} width must be positive, got {width}")
        if act not in ACTIVATIONS:
            raise InvalidArchitectureError(f"unknown activation {act!r}")
        w = rng.standard_normal((width, fan_in)) / np.sqrt(fan_in)
        if zero_last and k == len(arch) - 1:
            w = np.zeros_like(w)
        layers.append(Layer(w, np.zeros(width), act))
        fan_in = width
    return DenseNet(layers)


@dataclass
class Cache:
    net_id: int
    version: int
    squeeze: bool
    inputs: list = field(default_factory=list)  # input to each layer
    pre: list = field(default_factory=list)  # affine outputs
    post: list = field(default_factory=list)  # activated outputs


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"expected input with {net.in_dim} features, got shape {x.shape}")
    return x, squeeze


def forward(net: DenseNet, x) -> tuple[np.ndarray, Cache]:
    """Evaluate the network on a vector ``(in_dim,)`` or batch ``(n, in_dim)``."""
    a, squeeze = _as_batch(net, x)
    cache = Cache(id(net), net.version, squeeze)
    for layer in net.layers:
        cache.inputs.append(a)
        z = a @ layer.weight.T + layer.bias
        a = _activate(z, layer.activation)
        cache.pre.append(z)
        cache.post.append(a)
    return (a[0] if squeeze else a), cache


def predict(net: DenseNet, x, *, pre_activation: bool = False) -> np.ndarray:
    """Forward pass without a cache; optionally stop before the last activation."""
    a, squeeze = _as_batch(net, x)
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        a = a @ layer.weight.T + layer.bias
        if not (pre_activation and k == last):
            a = _activate(a, layer.activation)
    return a[0] if squeeze else a


@dataclass
class Gradients:
    weights: list
    biases: list
    dx: np.ndarray

    def params(self) -> list[np.ndarray]:
        out = []
        for gw, gb in zip(self.weights, self.biases):
            out.extend((gw, gb))
        return out

    def __iadd__(self, other: "Gradients"):
        for k in range(len(self.weights)):
            self.weights[k] = self.weights[k] + other.weights[k]
            self.biases[k] = self.biases[k] + other.biases[k]
        return self


def backward(net: DenseNet, cache: Cache, dL_dy, *, pre_activation: bool = False) -> Gradients:
    """Backpropagate ``dL_dy`` through the cached forward pass.

    With ``pre_activation=True`` the incoming gradient is taken with respect to
    the final affine output, skipping the last activation (used for the fused
    sigmoid + cross-entropy gradient).
    """
    if cache.net_id != id(net) or cache.version != net.version or len(cache.pre) != len(net.layers):
        raise CacheError("cache was produced by a different network or a stale parameter version")
    g = np.asarray(dL_dy, dtype=np.float64)
    if cache.squeeze and g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.post[-1].shape:
        raise ShapeError(f"gradient shape {g.shape} does not match output {cache.post[-1].shape}")
    n_layers = len(net.layers)
    gw, gb = [None] * n_layers, [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        layer = net.layers[k]
        if not (pre_activation and k == n_layers - 1):
            g = g * _activation_grad(cache.pre[k], cache.post[k], layer.activation)
        gw[k] = g.T @ cache.inputs[k]
        gb[k] = g.sum(axis=0)
        g = g @ layer.weight
    return Gradients(gw, gb, g[0] if cache.squeeze else g)


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")

    @classmethod
    def for_net(cls, net: DenseNet, kind: str = "adam", learning_rate: float = 1e-3, **kw):
        state = cls(kind=kind, learning_rate=learning_rate, **kw)
        if kind == "adam":
            state.m = [np.zeros_like(p) for p in net.parameters()]
            state.v = [np.zeros_like(p) for p in net.parameters()]
        return state


def optim_step(net: DenseNet, grads: Gradients, state: OptimizerState):
    """Apply one SGD or Adam update in place; returns ``(net, state)``."""
    params = net.parameters()
    gs = grads.params()
    if len(gs) != len(params) or any(g.shape != p.shape for g, p in zip(gs, params)):
        raise ShapeError("gradient shapes do not match network parameters")
    if not all(np.all(np.isfinite(g)) for g in gs):
        raise TrainingDivergedError("non-finite gradient")
    lr = state.learning_rate
    state.step_count += 1
    if state.kind == "sgd":
        for p, g in zip(params, gs):
            p -= lr * g
    else:
        if len(state.m) != len(params):
            state.m = [np.zeros_like(p) for p in params]
            state.v = [np.zeros_like(p) for p in params]
        b1, b2, t = state.beta1, state.beta2, state.step_count
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for p, g, m, v in zip(params, gs, state.m, state.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    net.version += 1
    return net, state


def bce_loss(p, y):
    """Mean binary cross-entropy and its gradient with respect to ``p``."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    n = p.size
    loss = -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    grad = (-y / p + (1.0 - y) / (1.0 - p)) / n
    return float(loss), grad


def mse_loss(a, b):
    """Mean squared componentwise difference and its gradient with respect to ``a``."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    """Yield index arrays covering a fresh permutation of ``range(n)``."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]
