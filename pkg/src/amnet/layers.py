"""Memory layers, activations, losses and the network that chains them.

Each ``MemoryLayer`` holds ordinary dense weights plus, for every task, a
block of ``k`` memory units and ``k`` memory weights per output neuron. Only
the active task's block takes part in forward/backward; its contribution to
neuron ``i`` is ``sum_m mem_weights[t][i, m] * mem_units[t][i, m]`` and does
not depend on the layer input.

Backward passes return raw analytic gradients. The sign replacement for memory
units is applied by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .linalg import DimensionError, SeededRng, uniform_init

ACTIVATIONS = ("relu", "tanh")
LOSSES = ("softmax", "sigmoid")
SCHEMES = ("shared", "individual")


@dataclass
class LayerGradients:
    g_w_normal: np.ndarray
    g_bias: np.ndarray
    g_input: np.ndarray
    g_mem_units: Optional[np.ndarray] = None
    g_mem_weights: Optional[np.ndarray] = None

    def copy(self) -> "LayerGradients":
        def c(a):
            return None if a is None else a.copy()

        return LayerGradients(c(self.g_w_normal), c(self.g_bias), c(self.g_input),
                              c(self.g_mem_units), c(self.g_mem_weights))


@dataclass
class MemoryLayer:
    w_normal: np.ndarray            # out_dim x in_dim
    bias: np.ndarray                # out_dim x 1
    mem_units: list[np.ndarray]     # per task, out_dim x k
    mem_weights: list[np.ndarray]   # per task, out_dim x k
    active_task: Optional[int] = None

    def __post_init__(self):
        out_dim, in_dim = self.w_normal.shape
        if self.bias.shape != (out_dim, 1):
            raise DimensionError(f"bias shape {self.bias.shape} != {(out_dim, 1)}")
        if len(self.mem_units) != len(self.mem_weights):
            raise DimensionError("mem_units and mem_weights disagree on task count")
        for u, w in zip(self.mem_units, self.mem_weights):
            if u.shape != w.shape or u.shape[0] != out_dim:
                raise DimensionError(f"memory block shapes {u.shape}, {w.shape} invalid for out_dim={out_dim}")

    @classmethod
    def initialize(cls, rng: SeededRng, in_dim: int, out_dim: int, num_tasks: int, k: int) -> "MemoryLayer":
        scale = 1.0 / np.sqrt(in_dim)
        w = uniform_init(rng, out_dim, in_dim, scale)
        b = uniform_init(rng, out_dim, 1, scale)
        units, weights = [], []
        for _ in range(num_tasks):
            units.append(np.zeros((out_dim, k)))
            # nonzero so the memory units receive gradient from the first step
            weights.append(uniform_init(rng, out_dim, k, 1.0 / np.sqrt(k)) if k else np.zeros((out_dim, 0)))
        return cls(w, b, units, weights)

    @property
    def in_dim(self) -> int:
        return self.w_normal.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w_normal.shape[0]

    @property
    def num_tasks(self) -> int:
        return len(self.mem_units)

    @property
    def k(self) -> int:
        return self.mem_units[0].shape[1] if self.mem_units else 0

    def _check_task(self) -> Optional[int]:
        t = self.active_task
        if t is not None and not 0 <= t < self.num_tasks:
            raise DimensionError(f"active_task {t} out of range for {self.num_tasks} tasks")
        return t

    def memory_term(self) -> Optional[np.ndarray]:
        """Per-neuron memory contribution (length out_dim), or None when inactive."""
        t = self._check_task()
        if t is None:
            return None
        return np.sum(self.mem_weights[t] * self.mem_units[t], axis=1)


def memory_forward(layer: MemoryLayer, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise DimensionError(f"input shape {x.shape} does not match in_dim={layer.in_dim}")
    out = x @ layer.w_normal.T
    mem = layer.memory_term()
    if mem is not None:
        out = out + mem
    return out + layer.bias.T


def memory_backward(layer: MemoryLayer, x: np.ndarray, upstream: np.ndarray,
                    with_memory: Optional[bool] = None) -> LayerGradients:
    """Raw gradients of a scalar loss given ``upstream = dL/d(output)``.

    ``with_memory`` defaults to whether a task is active; asking for memory
    gradients with no active task is an error.
    """
    t = layer._check_task()
    if with_memory is None:
        with_memory = t is not None
    if with_memory and t is None:
        raise ValueError("memory gradients requested but no task is active")
    if upstream.shape != (x.shape[0], layer.out_dim):
        raise DimensionError(f"upstream shape {upstream.shape} != {(x.shape[0], layer.out_dim)}")
    grads = LayerGradients(
        g_w_normal=upstream.T @ x,
        g_bias=upstream.sum(axis=0)[:, None],
        g_input=upstream @ layer.w_normal,
    )
    if with_memory:
        col = grads.g_bias  # column sum of upstream, out_dim x 1
        grads.g_mem_weights = col * layer.mem_units[t]
        grads.g_mem_units = col * layer.mem_weights[t]
    return grads


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return np.where(x > 0, upstream, 0.0)


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * (1.0 - np.tanh(x) ** 2)


_ACT = {"relu": (relu_forward, relu_backward), "tanh": (tanh_forward, tanh_backward)}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_ce(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against integer targets."""
    n, c = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,) or (n and (targets.min() < 0 or targets.max() >= c)):
        raise DimensionError(f"targets must be {n} indices below {c}")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, targets]))
    g = np.exp(z - logsum[:, None])
    g[rows, targets] -= 1.0
    return loss, g / n


def sigmoid_ce(logits: np.ndarray, onehot: np.ndarray,
               active_mask: Optional[Sequence[int]] = None) -> tuple[float, np.ndarray]:
    """Binary cross-entropy with sigmoid, averaged over batch and masked outputs.

    Outputs outside ``active_mask`` contribute neither loss nor gradient.
    """
    if logits.shape != onehot.shape:
        raise DimensionError(f"logits {logits.shape} vs targets {onehot.shape}")
    n, c = logits.shape
    cols = np.arange(c) if active_mask is None else np.array(sorted(set(active_mask)), dtype=np.int64)
    z = logits[:, cols]
    y = onehot[:, cols]
    # max(z,0) - z*y + log(1+exp(-|z|))
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    norm = n * len(cols)
    g = np.zeros_like(logits, dtype=np.float64)
    g[:, cols] = (sigmoid(z) - y) / norm
    return float(per.sum() / norm), g


def onehot(targets: np.ndarray, c: int) -> np.ndarray:
    out = np.zeros((len(targets), c))
    out[np.arange(len(targets)), targets] = 1.0
    return out


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)   # input to each layer
    preacts: list[np.ndarray] = field(default_factory=list)  # output of each layer before activation


@dataclass
class Network:
    layers: list[MemoryLayer]
    activation: str = "relu"
    loss: str = "softmax"
    scheme: str = "shared"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown output scheme {self.scheme!r}")
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        if len({l.num_tasks for l in self.layers}) != 1 or len({l.k for l in self.layers}) != 1:
            raise DimensionError("all layers must share num_tasks and k")
        if len({l.active_task for l in self.layers}) != 1:
            raise ValueError("all layers must share active_task")

    @classmethod
    def build(cls, dims: Sequence[int], num_tasks: int, k: int, rng: SeededRng,
              activation="relu", loss="softmax", scheme="shared") -> "Network":
        layers = [MemoryLayer.initialize(rng, i, o, num_tasks, k) for i, o in zip(dims, dims[1:])]
        return cls(layers, activation, loss, scheme)

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    @property
    def num_tasks(self) -> int:
        return self.layers[0].num_tasks

    @property
    def k(self) -> int:
        return self.layers[0].k

    @property
    def active_task(self) -> Optional[int]:
        return self.layers[0].active_task

    @active_task.setter
    def active_task(self, t: Optional[int]):
        if t is not None and not 0 <= t < self.num_tasks:
            raise DimensionError(f"active_task {t} out of range for {self.num_tasks} tasks")
        for layer in self.layers:
            layer.active_task = t

    def normal_params(self) -> list[np.ndarray]:
        """Normal weights and biases in declaration order (the EWC domain)."""
        out = []
        for layer in self.layers:
            out += [layer.w_normal, layer.bias]
        return out

    def copy(self) -> "Network":
        layers = [MemoryLayer(l.w_normal.copy(), l.bias.copy(), [u.copy() for u in l.mem_units],
                              [w.copy() for w in l.mem_weights], l.active_task) for l in self.layers]
        return Network(layers, self.activation, self.loss, self.scheme)


def network_forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    act, _ = _ACT[net.activation]
    cache = ForwardCache()
    h = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        cache.inputs.append(h)
        z = memory_forward(layer, h)
        cache.preacts.append(z)
        h = z if i == last else act(z)
    return h, cache


def backprop_upstreams(net: Network, cache: ForwardCache, g_logits: np.ndarray) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(layer_index, layer_input, dL/d(layer output))`` from the top down."""
    _, act_back = _ACT[net.activation]
    up = g_logits
    for i in range(len(net.layers) - 1, -1, -1):
        yield i, cache.inputs[i], up
        if i:
            up = act_back(cache.preacts[i - 1], up @ net.layers[i].w_normal)


def network_backward(net: Network, cache: ForwardCache, g_logits: np.ndarray) -> list[LayerGradients]:
    _, act_back = _ACT[net.activation]
    grads: list[Optional[LayerGradients]] = [None] * len(net.layers)
    up = g_logits
    for i in range(len(net.layers) - 1, -1, -1):
        g = memory_backward(net.layers[i], cache.inputs[i], up)
        grads[i] = g
        if i:
            up = act_back(cache.preacts[i - 1], g.g_input)
    return grads


def loss_and_grad(net: Network, logits: np.ndarray, targets: np.ndarray,
                  active_mask: Optional[Sequence[int]] = None) -> tuple[float, np.ndarray]:
    """Dispatch to the network's loss; ``targets`` are output indices."""
    if net.loss == "softmax":
        return softmax_ce(logits, targets)
    return sigmoid_ce(logits, onehot(targets, logits.shape[1]), active_mask)
