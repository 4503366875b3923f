"""Small dense-network engine with explicit forward and backward passes.

Tensors are plain float64 numpy arrays. Batched inputs have shape
``(batch, width)``; a 1-D input is treated as a batch of one and the
result is returned 1-D again.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, UsageError

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _activate(kind: str, a: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return a
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "tanh":
        return np.tanh(a)
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * a))
    raise ConfigError(f"unknown activation {kind!r}")


def _activation_grad(kind: str, a: np.ndarray, y: np.ndarray) -> np.ndarray:
    # derivative of the activation at pre-activation a, given output y
    if kind == "identity":
        return np.ones_like(a)
    if kind == "relu":
        return (a > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - y * y
    if kind == "sigmoid":
        return y * (1.0 - y)
    raise ConfigError(f"unknown activation {kind!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = as_tensor(self.weights)
        self.bias = as_tensor(self.bias)
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )

    @property
    def in_width(self) -> int:
        return self.weights.shape[1]

    @property
    def out_width(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def init(cls, in_width: int, out_width: int, activation: str, rng) -> "DenseLayer":
        """Glorot-uniform weights, zero bias."""
        a = np.sqrt(6.0 / (in_width + out_width))
        w = rng.uniform(-a, a, size=(out_width, in_width))
        return cls(w, np.zeros(out_width), activation)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


Network = list  # list[DenseLayer]


def build_network(widths, activations, rng) -> list[DenseLayer]:
    if len(activations) != len(widths) - 1:
        raise ConfigError("need one activation per layer")
    return [
        DenseLayer.init(widths[i], widths[i + 1], activations[i], rng)
        for i in range(len(widths) - 1)
    ]


def network_parameters(net) -> list[np.ndarray]:
    out = []
    for layer in net:
        out.extend((layer.weights, layer.bias))
    return out


def set_network_parameters(net, params) -> None:
    if len(params) != 2 * len(net):
        raise DimensionError("parameter count does not match network")
    for layer, w, b in zip(net, params[0::2], params[1::2]):
        if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
            raise DimensionError("parameter shape mismatch")
        layer.weights = w
        layer.bias = b


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)  # input to each layer
    pre: list = field(default_factory=list)  # pre-activations
    outputs: list = field(default_factory=list)
    squeeze: bool = False


@dataclass
class GradientTape:
    weights: list
    biases: list
    input: np.ndarray

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def forward(net, x) -> tuple[np.ndarray, ForwardCache]:
    """Run ``x`` through ``net``; returns the output and the cache for backward."""
    x = as_tensor(x)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2:
        raise DimensionError(f"expected 1-D or 2-D input, got shape {x.shape}")
    cache = ForwardCache(squeeze=squeeze)
    for i, layer in enumerate(net):
        if h.shape[1] != layer.in_width:
            raise DimensionError(
                f"layer {i} expects width {layer.in_width}, got {h.shape[1]}"
            )
        cache.inputs.append(h)
        a = h @ layer.weights.T + layer.bias
        h = _activate(layer.activation, a)
        cache.pre.append(a)
        cache.outputs.append(h)
    return (h[0] if squeeze else h), cache


def backward(net, cache: ForwardCache | None, upstream) -> GradientTape:
    """Gradients of ``sum(upstream * forward(net, x))`` wrt parameters and input."""
    if cache is None or len(cache.inputs) != len(net):
        raise UsageError("backward called without a matching forward cache")
    g = as_tensor(upstream)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.outputs[-1].shape:
        raise DimensionError(
            f"upstream gradient shape {g.shape} != output {cache.outputs[-1].shape}"
        )
    gw = [None] * len(net)
    gb = [None] * len(net)
    for i in range(len(net) - 1, -1, -1):
        layer = net[i]
        ga = g * _activation_grad(layer.activation, cache.pre[i], cache.outputs[i])
        gw[i] = ga.T @ cache.inputs[i]
        gb[i] = ga.sum(axis=0)
        g = ga @ layer.weights
    return GradientTape(gw, gb, g[0] if cache.squeeze else g)


def mse(x, y) -> tuple[float, np.ndarray]:
    """Sum of squared differences and its gradient wrt ``x``."""
    x = as_tensor(x)
    y = as_tensor(y)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    diff = x - y
    return float(np.sum(diff * diff)), 2.0 * diff


def sgd_step(params, grads, lr: float) -> list[np.ndarray]:
    # lr == 0 is allowed as an explicit no-op step
    if not (lr >= 0 and np.isfinite(lr)):
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    if len(params) != len(grads):
        raise DimensionError("params and grads differ in length")
    out = []
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"param {p.shape} vs grad {g.shape}")
        out.append(p - lr * g)
    return out
