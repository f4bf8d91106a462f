"""Training methods as parameter-group update policies, and the sequential protocol.

Methods:

* ``pgd`` - memory off, plain SGD on normal weights and biases.
* ``ewc`` - memory off, SGD on normal weights with the EWC penalty added.
* ``ad`` - memory on; normal weights train on the first task only and are
  frozen afterwards. Each task then trains its own memory block.
* ``ad_ewc`` - memory on; normal weights always train under EWC, and each
  task trains its own memory block.

Memory units move by ``lr * eps * sign(grad)`` (or by the raw gradient when
``memory_update="gradient"``); memory weights move along the plain gradient.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .datasets import TaskSpec
from .ewc import FisherAnchor, estimate_fisher, ewc_penalty
from .layers import LayerGradients, Network, loss_and_grad, network_backward, network_forward
from .linalg import SeededRng, sign_scale

NORMAL = "normal"
MEMORY = "memory"


logger = logging.getLogger(__name__)

class TrainingMethod(str, enum.Enum):
    PGD = "pgd"
    EWC_ONLY = "ewc"
    AD = "ad"
    AD_EWC = "ad_ewc"

    @property
    def uses_memory(self) -> bool:
        return self in (TrainingMethod.AD, TrainingMethod.AD_EWC)

    @property
    def uses_ewc(self) -> bool:
        return self in (TrainingMethod.EWC_ONLY, TrainingMethod.AD_EWC)


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.05
    batch_size: int = 100
    epochs_per_task: int = 20
    eps: float = 0.1
    lam: float = 400.0
    fisher_samples: int = 2000
    seed: int = 0
    memory_update: str = "sign"
    sigmoid_mask: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs_per_task < 0:
            raise ValueError("epochs_per_task must be >= 0")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.fisher_samples < 1:
            raise ValueError("fisher_samples must be >= 1")
        if self.memory_update not in ("sign", "gradient"):
            raise ValueError("memory_update must be 'sign' or 'gradient'")


class DivergenceError(FloatingPointError):
    """Raised when the loss or a parameter stops being finite."""


@dataclass
class MetricsRecord:
    method: str
    trained_task: int      # 1-based
    epoch: int             # 1-based within the task
    accuracies: tuple[float, ...]
    seconds: float


def apply_sign_rule(grads: Sequence[LayerGradients], eps: float) -> list[LayerGradients]:
    """Replace every memory-unit gradient by ``eps * sign(gradient)``."""
    out = []
    for g in grads:
        if g.g_mem_units is not None:
            g = LayerGradients(g.g_w_normal, g.g_bias, g.g_input,
                               sign_scale(g.g_mem_units, eps), g.g_mem_weights)
        out.append(g)
    return out


def update_groups(method: TrainingMethod, task_number: int) -> frozenset[str]:
    """Parameter groups a method trains while on ``task_number`` (0-based)."""
    if not method.uses_memory:
        return frozenset({NORMAL})
    if method is TrainingMethod.AD and task_number > 0:
        return frozenset({MEMORY})
    return frozenset({NORMAL, MEMORY})


def sgd_step(net: Network, grads: Sequence[LayerGradients], lr: float, method: TrainingMethod,
             groups: frozenset[str], anchors: Sequence[FisherAnchor] = (), lam: float = 0.0) -> None:
    """In-place SGD on the unfrozen groups; EWC gradient joins the normal-weight step."""
    t = net.active_task
    if MEMORY in groups and (t is None or not method.uses_memory):
        raise ValueError(f"method {method.value} cannot update memory (active task {t})")
    if not method.uses_memory and t is not None:
        raise ValueError(f"method {method.value} requires memory to be deactivated")
    if len(grads) != len(net.layers):
        raise ValueError("one LayerGradients per layer required")
    if NORMAL in groups:
        extra = None
        if method.uses_ewc and anchors:
            _, extra = ewc_penalty(net.normal_params(), anchors, lam)
        for i, (layer, g) in enumerate(zip(net.layers, grads)):
            gw, gb = g.g_w_normal, g.g_bias
            if extra is not None:
                gw = gw + extra[2 * i]
                gb = gb + extra[2 * i + 1]
            layer.w_normal -= lr * gw
            layer.bias -= lr * gb
    if MEMORY in groups:
        for layer, g in zip(net.layers, grads):
            if g.g_mem_units is None:
                raise ValueError("memory update requested but gradients carry no memory terms")
            layer.mem_units[t] -= lr * g.g_mem_units
            layer.mem_weights[t] -= lr * g.g_mem_weights


def _mask_for(net: Network, task: TaskSpec, cfg: OptimizerConfig):
    if net.loss == "sigmoid" and cfg.sigmoid_mask:
        return task.outputs
    return None


def evaluate(net: Network, task: TaskSpec, use_memory: bool = True, batch: int = 1000) -> float:
    """Test accuracy on ``task``; the task's memory is switched on when ``use_memory``.

    Shared scheme: argmax over the task's own outputs vs the task-local index.
    Individual scheme: argmax over every output vs the global index.
    """
    n = task.test_labels.shape[0]
    if n == 0:
        raise ValueError(f"task {task.task_index} has an empty test split")
    prev = net.active_task
    net.active_task = task.task_index if use_memory else None
    try:
        targets = task.test_targets
        outs = np.asarray(task.outputs)
        correct = 0
        for s in range(0, n, batch):
            logits, _ = network_forward(net, task.test_images[s:s + batch])
            if net.scheme == "shared":
                pred = outs[np.argmax(logits[:, outs], axis=1)]
            else:
                pred = np.argmax(logits, axis=1)
            correct += int(np.sum(pred == targets[s:s + batch]))
    finally:
        net.active_task = prev
    return correct / n


def train_task(net: Network, task: TaskSpec, method: TrainingMethod, cfg: OptimizerConfig,
               anchors: Sequence[FisherAnchor], rng: SeededRng, task_number: int,
               eval_tasks: Sequence[TaskSpec] = (),
               on_step: Optional[Callable[[Network], None]] = None,
               on_epoch: Optional[Callable[[MetricsRecord], None]] = None) -> list[MetricsRecord]:
    """Mini-batch SGD over ``task``'s training split only; one record per epoch."""
    method = TrainingMethod(method)
    if task.n_train == 0:
        raise ValueError(f"task {task.task_index} has no training data")
    if method.uses_memory and not 0 <= task.task_index < net.num_tasks:
        raise ValueError(f"task index {task.task_index} has no memory block")
    net.active_task = task.task_index if method.uses_memory else None
    groups = update_groups(method, task_number)
    mask = _mask_for(net, task, cfg)
    images, targets = task.train_images, task.train_targets
    n = images.shape[0]
    records = []
    start = time.perf_counter()
    for epoch in range(cfg.epochs_per_task):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            logits, cache = network_forward(net, images[idx])
            loss, g_logits = loss_and_grad(net, logits, targets[idx], mask)
            if not np.isfinite(loss):
                raise DivergenceError(f"loss became {loss} at task {task_number + 1}, epoch {epoch + 1}; "
                                      f"lower lr or lambda")
            grads = network_backward(net, cache, g_logits)
            if method.uses_memory and cfg.memory_update == "sign":
                grads = apply_sign_rule(grads, cfg.eps)
            sgd_step(net, grads, cfg.learning_rate, method, groups, anchors, cfg.lam)
            if on_step is not None:
                on_step(net)
        if not all(np.isfinite(p).all() for layer in net.layers for p in
                   (layer.w_normal, layer.bias, *layer.mem_units, *layer.mem_weights)):
            raise DivergenceError(f"non-finite parameters after task {task_number + 1}, epoch {epoch + 1}")
        accs = tuple(evaluate(net, t, use_memory=method.uses_memory) for t in eval_tasks)
        records.append(MetricsRecord(method.value, task_number + 1, epoch + 1, accs,
                                     time.perf_counter() - start))
        if on_epoch is not None:
            on_epoch(records[-1])
    net.active_task = task.task_index if method.uses_memory else None
    return records


def penalty_stiffness(anchors: Sequence[FisherAnchor], lam: float) -> float:
    """Largest curvature of the summed penalty, ``lam * max_i sum_anchors F_i``."""
    if not anchors:
        return 0.0
    worst = 0.0
    for parts in zip(*(a.fisher_diag for a in anchors)):
        worst = max(worst, float(sum(parts).max()))
    return lam * worst


def sequential_run(net: Network, tasks: Sequence[TaskSpec], method: TrainingMethod,
                   cfg: OptimizerConfig, rng: Optional[SeededRng] = None,
                   log: Optional[Callable[[MetricsRecord], None]] = None
                   ) -> tuple[list[MetricsRecord], list[FisherAnchor]]:
    """Train ``tasks`` in order with no replay, anchoring EWC after each task."""
    method = TrainingMethod(method)
    if not tasks:
        raise ValueError("no tasks to train")
    classes = [set(t.class_list) for t in tasks]
    if tasks[0].permutation is None:
        for i in range(len(classes)):
            for j in range(i + 1, len(classes)):
                if classes[i] & classes[j]:
                    raise ValueError(f"tasks {i + 1} and {j + 1} share classes")
    rng = rng if rng is not None else SeededRng(cfg.seed)
    anchors: list[FisherAnchor] = []
    metrics: list[MetricsRecord] = []
    for number, task in enumerate(tasks):
        metrics += train_task(net, task, method, cfg, tuple(anchors), rng, number, tasks, on_epoch=log)
        if method.uses_ewc and number < len(tasks) - 1:
            n = min(cfg.fisher_samples, task.n_train)
            anchors.append(estimate_fisher(net, task.train_images, task.train_targets, n, rng,
                                           task.task_index, _mask_for(net, task, cfg)))
            stiffness = penalty_stiffness(anchors, cfg.lam) * cfg.learning_rate
            if stiffness > 2.0:
                # plain SGD on a quadratic with curvature c diverges or oscillates once lr * c > 2
                logger.warning("lr * lambda * max Fisher = %.2f > 2 after task %d; the penalty will "
                            "oscillate. Lower lambda or lr.", stiffness, number + 1)
    return metrics, anchors
