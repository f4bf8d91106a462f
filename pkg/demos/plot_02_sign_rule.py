"""
Moving memory units along the gradient sign
===========================================

Memory units are updated with ``lr * eps * sign(grad)`` rather than the raw
gradient. Every step therefore has the same size, no matter how small the
gradient reaching the unit is. This demo trains one task on random data
twice, once per update rule, and tallies the step sizes.
"""

import numpy as np

from amnet.datasets import TaskSpec
from amnet.layers import Network
from amnet.linalg import SeededRng, sign_scale
from amnet.trainer import OptimizerConfig, train_task

print(sign_scale(np.array([[2.5, -0.001, 0.0]]), 0.1))

# %%
r = np.random.default_rng(1)
images = r.uniform(size=(300, 20))
labels = r.integers(0, 3, size=300)
task = TaskSpec(0, (0, 1, 2), {0: 0, 1: 1, 2: 2}, (0, 1, 2), 3, images, labels, images[:100], labels[:100])


def step_sizes(rule):
    net = Network.build([20, 16, 3], 1, 4, SeededRng(3))
    cfg = OptimizerConfig(learning_rate=0.05, batch_size=30, epochs_per_task=3, eps=0.1,
                          memory_update=rule)
    prev = [l.mem_units[0].copy() for l in net.layers]
    sizes = []

    def watch(n):
        for i, layer in enumerate(n.layers):
            sizes.append(np.abs(layer.mem_units[0] - prev[i]).ravel())
            prev[i] = layer.mem_units[0].copy()

    train_task(net, task, "ad", cfg, (), SeededRng(4), 0, [task], on_step=watch)
    return np.concatenate(sizes)


# %%
# With the sign rule the steps are 0 or lr*eps = 0.005 (up to rounding);
# with the gradient rule they spread over many magnitudes.
for rule in ("sign", "gradient"):
    s = step_sizes(rule)
    nz = s[s > 0]
    print(f"{rule:8s} distinct nonzero step sizes (rounded): {len(np.unique(nz.round(12))):5d}  "
          f"min {nz.min():.2e}  max {nz.max():.2e}")
