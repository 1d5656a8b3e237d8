"""Small dense networks with hand-written backprop and Adam.

Enough for the predictor/target heads of the bonus estimators and for the
policy and value heads of the PPO agent. Weights are stored as
``(fan_in, fan_out)`` matrices so a batch ``X @ W + b`` maps rows to rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from rddlab.rng import make_rng

ACTIVATIONS = ("relu", "tanh", "identity")


class DimensionError(ValueError):
    def __init__(self, what: str, expected, actual):
        super().__init__(f"{what}: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise DimensionError("weight rank", 2, self.weight.ndim)
        if self.bias.shape != (self.weight.shape[1],):
            raise DimensionError("bias shape", (self.weight.shape[1],), self.bias.shape)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str, grad: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return grad * (z > 0.0)
    if kind == "tanh":
        return grad * (1.0 - a * a)
    return grad


class DenseNet:
    """Feed-forward stack of :class:`Layer` objects."""

    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise ValueError("a DenseNet needs at least one layer")
        for k in range(len(layers) - 1):
            out_k = layers[k].weight.shape[1]
            in_next = layers[k + 1].weight.shape[0]
            if out_k != in_next:
                raise DimensionError(f"layer {k + 1} input dim", out_k, in_next)
        # all parameters live in one flat buffer; layer arrays are views into it
        self.flat = np.concatenate([a.ravel() for l in layers for a in (l.weight, l.bias)])
        self._slices = []
        self.layers = []
        off = 0
        for l in layers:
            views = []
            for a in (l.weight, l.bias):
                self._slices.append((off, off + a.size, a.shape))
                views.append(self.flat[off:off + a.size].reshape(a.shape))
                off += a.size
            self.layers.append(Layer(views[0], views[1], l.activation))

    @classmethod
    def init(
        cls,
        sizes: Sequence[int],
        seed: int | np.random.Generator,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
    ) -> "DenseNet":
        """Glorot-uniform weights, zero biases. ``sizes`` includes input and output dims."""
        if len(sizes) < 2 or any(int(s) <= 0 for s in sizes):
            raise ValueError(f"sizes must be >= 2 positive ints, got {list(sizes)}")
        rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
        layers = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            act = output_activation if k == len(sizes) - 2 else hidden_activation
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def load_params(self, params: Sequence[np.ndarray]) -> None:
        mine = self.params()
        if len(params) != len(mine):
            raise DimensionError("parameter count", len(mine), len(params))
        for dst, src in zip(mine, params):
            if dst.shape != np.shape(src):
                raise DimensionError("parameter shape", dst.shape, np.shape(src))
            dst[...] = src

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.input_dim,) or x.ndim > 2:
            raise DimensionError("input dim", self.input_dim, x.shape[-1] if x.ndim else x.shape)
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Accepts a single vector ``(input_dim,)`` or a batch ``(B, input_dim)``."""
        h = self._check_input(x)
        for layer in self.layers:
            h = _activate(h @ layer.weight + layer.bias, layer.activation)
        return h

    __call__ = forward

    def forward_cached(self, x: np.ndarray):
        h = self._check_input(x)
        cache = []
        for layer in self.layers:
            z = h @ layer.weight + layer.bias
            a = _activate(z, layer.activation)
            cache.append((h, z, a))
            h = a
        return h, cache

    def backward(self, cache, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of ``sum(grad_out * output)`` w.r.t. every parameter.

        For a batch the gradients are summed over rows; callers scale
        ``grad_out`` to get a mean.
        """
        grads = Grads(np.empty_like(self.flat), self._slices)
        g = np.asarray(grad_out, dtype=np.float64)
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            h, z, a = cache[k]
            g = _activation_grad(z, a, layer.activation, g)
            if g.ndim == 1:
                np.multiply(h[:, None], g[None, :], out=grads[2 * k])
                grads[2 * k + 1][...] = g
            else:
                np.dot(h.T, g, out=grads[2 * k])
                g.sum(axis=0, out=grads[2 * k + 1])
            if k:
                g = g @ layer.weight.T
        return grads


class Grads(list):
    """Per-parameter gradient arrays that are views into one flat buffer."""

    def __init__(self, flat: np.ndarray, slices):
        super().__init__(flat[a:b].reshape(shape) for a, b, shape in slices)
        self.flat = flat


def forward(net: DenseNet, x) -> np.ndarray:
    return net.forward(x)


def backward_mse(net: DenseNet, x, target) -> tuple[float, list[np.ndarray]]:
    """Loss ``||net(x) - target||^2`` and its exact parameter gradients."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape[-1:] != (net.output_dim,):
        raise DimensionError("target dim", net.output_dim, target.shape[-1] if target.ndim else target.shape)
    out, cache = net.forward_cached(x)
    diff = out - target
    return float(np.sum(diff * diff)), net.backward(cache, 2.0 * diff)


class AdamState:
    """Adam moments (flat buffers, with per-parameter views in ``m``/``v``) and hyperparameters."""

    def __init__(self, m_flat: np.ndarray, v_flat: np.ndarray, slices, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, step: int = 0):
        self.m_flat = m_flat
        self.v_flat = v_flat
        self.m = [m_flat[a:b].reshape(shape) for a, b, shape in slices]
        self.v = [v_flat[a:b].reshape(shape) for a, b, shape in slices]
        self.lr, self.beta1, self.beta2, self.eps, self.step = lr, beta1, beta2, eps, step

    @classmethod
    def for_net(cls, net: DenseNet, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        return cls(np.zeros_like(net.flat), np.zeros_like(net.flat), net._slices, lr, beta1, beta2, eps)


def adam_step(net: DenseNet, grads: Sequence[np.ndarray], state: AdamState) -> tuple[DenseNet, AdamState]:
    """One bias-corrected Adam update, applied in place. Returns ``(net, state)``."""
    params = net.params()
    if len(grads) != len(params):
        raise DimensionError("gradient count", len(params), len(grads))
    flat = getattr(grads, "flat", None)
    if flat is None:
        for i, (p, g) in enumerate(zip(params, grads)):
            if p.shape != np.shape(g):
                raise DimensionError(f"gradient shape (param {i})", p.shape, np.shape(g))
        flat = np.concatenate([np.asarray(g, dtype=np.float64).ravel() for g in grads])
    if not np.isfinite(flat).all():
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                kind = "weight" if i % 2 == 0 else "bias"
                raise NonFiniteGradientError(f"non-finite gradient in layer {i // 2} {kind}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    m, v = state.m_flat, state.v_flat
    m *= b1
    m += (1.0 - b1) * flat
    v *= b2
    v += (1.0 - b2) * (flat * flat)
    net.flat -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state
