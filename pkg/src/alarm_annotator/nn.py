"""Dense feedforward networks with hand-written backpropagation.

Everything runs in float64. Batches are rows; a 1-D input gets a 1-D output.
Gradients come back as a flat list aligned with parameters():
[W1, b1, W2, b2, ...]. Softmax is allowed on the output layer only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUPPORTED_ACTIVATIONS = ("linear", "relu", "tanh", "softmax")


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return softmax(z)


def _activation_backward(kind: str, z: np.ndarray, out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """dL/dz from dL/d(out); the relu subgradient at 0 is 0."""
    if kind == "linear":
        return grad
    if kind == "relu":
        return grad * (z > 0.0)
    if kind == "tanh":
        return grad * (1.0 - out * out)
    inner = (grad * out).sum(axis=-1, keepdims=True)
    return out * (grad - inner)


@dataclass
class _Cache:
    acts: list  # layer inputs/outputs, acts[0] is the network input
    zs: list    # pre-activations per layer
    single: bool


class DenseNet:
    """Fully connected layers with Glorot-uniform init and seeded construction."""

    def __init__(self, sizes, activations, seed=0):
        sizes = [int(s) for s in sizes]
        activations = [str(a) for a in activations]
        if len(sizes) < 2:
            raise ValueError("a network needs at least an input and an output size")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be >= 1, got {sizes}")
        if len(activations) != len(sizes) - 1:
            raise ValueError(f"expected {len(sizes) - 1} activations, got {len(activations)}")
        for i, act in enumerate(activations):
            if act not in SUPPORTED_ACTIVATIONS:
                raise ValueError(f"unsupported activation {act!r}")
            if act == "softmax" and i != len(activations) - 1:
                raise ValueError("softmax is only supported on the output layer")
        rng = np.random.default_rng(seed)
        self.sizes = sizes
        self.activations = activations
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    def parameters(self) -> list[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def _run(self, x, keep: bool):
        a = np.asarray(x, dtype=float)
        single = a.ndim == 1
        if single:
            a = a[None, :]
        if a.ndim != 2 or a.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {a.shape} does not match network input size {self.sizes[0]}")
        acts = [a]
        zs = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = acts[-1] @ w.T + b
            zs.append(z)
            acts.append(_activate(act, z))
        out = acts[-1][0] if single else acts[-1]
        return out, (_Cache(acts, zs, single) if keep else None)

    def forward(self, x) -> np.ndarray:
        out, _ = self._run(x, keep=False)
        return out

    def forward_cached(self, x) -> tuple[np.ndarray, _Cache]:
        return self._run(x, keep=True)

    def backward(self, cache: _Cache, grad_output, wrt: str = "output") -> list[np.ndarray]:
        """Backpropagate dL/d(output) (or dL/d(logits) with wrt="logits") to all parameters."""
        if wrt not in ("output", "logits"):
            raise ValueError(f"wrt must be 'output' or 'logits', got {wrt!r}")
        g = np.asarray(grad_output, dtype=float)
        if cache.single and g.ndim == 1:
            g = g[None, :]
        if g.shape != cache.acts[-1].shape:
            raise ValueError(f"gradient shape {g.shape} does not match output shape {cache.acts[-1].shape}")
        last = len(self.weights) - 1
        grads: list[np.ndarray] = [np.empty(0)] * (2 * len(self.weights))
        for layer in range(last, -1, -1):
            if layer == last and wrt == "logits":
                dz = g
            else:
                dz = _activation_backward(self.activations[layer], cache.zs[layer], cache.acts[layer + 1], g)
            grads[2 * layer] = dz.T @ cache.acts[layer]
            grads[2 * layer + 1] = dz.sum(axis=0)
            if layer:
                g = dz @ self.weights[layer]
        return grads

    def copy(self) -> "DenseNet":
        dup = object.__new__(DenseNet)
        dup.sizes = list(self.sizes)
        dup.activations = list(self.activations)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def to_json_obj(self) -> dict:
        return {
            "sizes": self.sizes,
            "activations": self.activations,
            "layers": [
                {"w": w.tolist(), "b": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DenseNet":
        net = cls(obj["sizes"], obj["activations"], seed=0)
        if len(obj["layers"]) != len(net.weights):
            raise ValueError(f"expected {len(net.weights)} layers, got {len(obj['layers'])}")
        for layer, w, b in zip(obj["layers"], net.weights, net.biases):
            w[:] = np.asarray(layer["w"], dtype=float)
            b[:] = np.asarray(layer["b"], dtype=float)
        return net


class Adam:
    """Adam with bias correction; accumulators are created on the first step."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ValueError("parameter/gradient count mismatch")
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        correct1 = 1.0 - self.beta1 ** self.step_count
        correct2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


class RMSProp:
    """RMSProp without momentum: squared-gradient moving average with decay 0.9."""

    def __init__(self, lr: float, decay: float = 0.9, eps: float = 1e-8):
        self.lr = float(lr)
        self.decay = decay
        self.eps = eps
        self.step_count = 0
        self._acc: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if len(params) != len(grads):
            raise ValueError("parameter/gradient count mismatch")
        if self._acc is None:
            self._acc = [np.zeros_like(p) for p in params]
        self.step_count += 1
        for p, g, acc in zip(params, grads, self._acc):
            acc *= self.decay
            acc += (1.0 - self.decay) * (g * g)
            p -= self.lr * g / (np.sqrt(acc) + self.eps)


OPTIMIZER_KINDS = ("adam", "rmsprop")


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr)
    if kind == "rmsprop":
        return RMSProp(lr)
    raise ValueError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZER_KINDS}")


def optimizer_step(optimizer, net: DenseNet, grads: list[np.ndarray]) -> DenseNet:
    """Apply one in-place update to the network's parameters and return it."""
    optimizer.step(net.parameters(), grads)
    return net


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_grad(pred, target) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    return 2.0 * (pred - target) / pred.size


def _check_probs(probs: np.ndarray) -> None:
    if np.any(probs <= 0.0) or np.any(~np.isfinite(probs)):
        raise ValueError("invalid probability vector: entries must be positive and finite")
    sums = probs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("invalid probability vector: rows must sum to 1")


def cross_entropy(probs, cls: int) -> float:
    """Negative log-likelihood of one sample's class under a probability vector."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1:
        raise ValueError("cross_entropy takes a single probability vector")
    _check_probs(probs)
    return float(-np.log(probs[int(cls)]))


def weighted_cross_entropy(probs, classes, class_weights) -> float:
    """Sum over the batch of class_weights[class] * (-log p[class])."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    classes = np.atleast_1d(np.asarray(classes, dtype=int))
    weights = np.asarray(class_weights, dtype=float)
    _check_probs(probs)
    picked = probs[np.arange(len(classes)), classes]
    return float(-(weights[classes] * np.log(picked)).sum())


def weighted_cross_entropy_logit_grad(probs, classes, class_weights) -> np.ndarray:
    """Gradient of weighted_cross_entropy w.r.t. the softmax logits."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    classes = np.atleast_1d(np.asarray(classes, dtype=int))
    weights = np.asarray(class_weights, dtype=float)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(classes)), classes] = 1.0
    return weights[classes][:, None] * (probs - onehot)


def weighted_mse(pred, target, row_weights) -> float:
    """Sum over rows of weight * mean squared error of that row."""
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    weights = np.atleast_1d(np.asarray(row_weights, dtype=float))
    if pred.shape != target.shape or len(weights) != len(pred):
        raise ValueError("shape mismatch")
    per_row = ((pred - target) ** 2).mean(axis=1)
    return float((weights * per_row).sum())
