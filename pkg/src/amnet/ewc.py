"""Diagonal Fisher estimates and the elastic weight consolidation penalty.

Only normal weights and biases are anchored. Memory units and memory weights
never enter the penalty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .layers import Network, backprop_upstreams, network_forward, sigmoid, softmax
from .linalg import DimensionError, SeededRng


@dataclass(frozen=True)
class FisherAnchor:
    task_id: int
    anchor_params: tuple[np.ndarray, ...]   # theta* for each normal parameter
    fisher_diag: tuple[np.ndarray, ...]     # same shapes, entries >= 0

    def __post_init__(self):
        if len(self.anchor_params) != len(self.fisher_diag):
            raise DimensionError("anchor and fisher parameter lists differ in length")
        for a, f in zip(self.anchor_params, self.fisher_diag):
            if a.shape != f.shape:
                raise DimensionError(f"anchor shape {a.shape} != fisher shape {f.shape}")
            if np.any(f < 0):
                raise ValueError("fisher_diag entries must be nonnegative")


def _sample_labels(probs: np.ndarray, rng: SeededRng) -> np.ndarray:
    u = rng.uniform(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def estimate_fisher(net: Network, images: np.ndarray, targets: np.ndarray, n_samples: int,
                    rng: SeededRng, task_id: int = 0, active_mask: Optional[Sequence[int]] = None,
                    chunk: int = 500) -> FisherAnchor:
    """Empirical diagonal Fisher over ``n_samples`` examples drawn without replacement.

    For softmax networks the label of each example is sampled from the model's
    own predictive distribution; for sigmoid networks the observed target is
    used. Per-example squared gradients of the log-likelihood are averaged.
    The network's active task is used as-is.
    """
    n = images.shape[0]
    if n == 0:
        raise ValueError("cannot estimate Fisher information on an empty dataset")
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if n_samples > n:
        raise ValueError(f"n_samples={n_samples} exceeds dataset size {n}")
    chosen = rng.permutation(n)[:n_samples]
    acc = [np.zeros_like(p) for p in net.normal_params()]
    c = net.dims[-1]
    for start in range(0, n_samples, chunk):
        idx = chosen[start:start + chunk]
        logits, cache = network_forward(net, images[idx])
        # per-example gradient of -log p(y|x) wrt the logits (no batch averaging)
        if net.loss == "softmax":
            p = softmax(logits)
            y = _sample_labels(p, rng)
            g = p
            g[np.arange(len(idx)), y] -= 1.0
        else:
            y = np.zeros_like(logits)
            y[np.arange(len(idx)), np.asarray(targets)[idx]] = 1.0
            g = sigmoid(logits) - y
            if active_mask is not None:
                keep = np.zeros(c, dtype=bool)
                keep[list(active_mask)] = True
                g[:, ~keep] = 0.0
        for i, x, up in backprop_upstreams(net, cache, g):
            # sum_n (u_ni x_nj)^2 == ((u*u)^T (x*x))_ij
            acc[2 * i] += (up * up).T @ (x * x)
            acc[2 * i + 1] += (up * up).sum(axis=0)[:, None]
    fisher = tuple(a / n_samples for a in acc)
    anchor = tuple(p.copy() for p in net.normal_params())
    return FisherAnchor(task_id, anchor, fisher)


def ewc_penalty(params: Sequence[np.ndarray], anchors: Sequence[FisherAnchor],
                lam: float) -> tuple[float, list[np.ndarray]]:
    """``sum_a lam/2 * sum_i F_i (theta_i - theta*_i)^2`` and its gradient."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    grads = [np.zeros_like(p) for p in params]
    penalty = 0.0
    for a in anchors:
        if len(a.anchor_params) != len(params):
            raise DimensionError(f"anchor for task {a.task_id} has {len(a.anchor_params)} tensors, "
                                 f"expected {len(params)}")
        for j, (p, star, f) in enumerate(zip(params, a.anchor_params, a.fisher_diag)):
            if p.shape != star.shape:
                raise DimensionError(f"parameter {j}: shape {p.shape} != anchor {star.shape}")
            d = p - star
            penalty += 0.5 * lam * float(np.sum(f * d * d))
            grads[j] += lam * f * d
    return penalty, grads
