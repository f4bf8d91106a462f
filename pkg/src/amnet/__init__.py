"""Adversarial memory networks for sequential learning of disjoint tasks.

Dense networks whose neurons carry per-task memory units (moved by
``eps * sign(gradient)``) and memory weights, trained task after task with
plain SGD, elastic weight consolidation, or both.
"""

__version__ = "0.1.0"

from .ewc import FisherAnchor, estimate_fisher, ewc_penalty
from .layers import MemoryLayer, Network, memory_backward, memory_forward, network_backward, network_forward
from .linalg import SeededRng, matmul, sign_scale, uniform_init
from .trainer import DivergenceError, OptimizerConfig, TrainingMethod, evaluate, sequential_run, train_task

__all__ = [
    "DivergenceError", "FisherAnchor", "MemoryLayer", "Network", "OptimizerConfig", "SeededRng", "TrainingMethod",
    "estimate_fisher", "evaluate", "ewc_penalty", "matmul", "memory_backward", "memory_forward",
    "network_backward", "network_forward", "sequential_run", "sign_scale", "train_task", "uniform_init",
]
