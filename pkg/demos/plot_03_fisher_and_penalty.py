"""
Diagonal Fisher information and the consolidation penalty
=========================================================

After a task is learned, the diagonal of the Fisher information ranks how
much each normal weight matters to it. The penalty
``lam/2 * sum F * (theta - theta_star)**2`` then holds important weights
near their old values while later tasks train.
"""

import numpy as np

from amnet.datasets import make_disjoint_tasks, subsample
from amnet.ewc import estimate_fisher, ewc_penalty
from amnet.layers import Network
from amnet.linalg import SeededRng
from amnet.trainer import OptimizerConfig, train_task

from _data import digits

train, test = digits()
task = subsample(make_disjoint_tasks(train, test)[0], 3000, 1000)
net = Network.build([784, 100, 3], 3, 2, SeededRng(0))
train_task(net, task, "ewc", OptimizerConfig(epochs_per_task=2), (), SeededRng(1), 0, [task])

# %%
# Softmax networks sample each label from the model's own prediction.
anchor = estimate_fisher(net, task.train_images, task.train_targets, 1000, SeededRng(2))
for name, f in zip(("W1", "b1", "W2", "b2"), anchor.fisher_diag):
    print(f"{name}: mean {f.mean():.2e}  max {f.max():.2e}")

# %%
# Input pixels that are always blank get exactly zero importance.
blank = (task.train_images == 0).all(axis=0)
print("blank pixels:", int(blank.sum()), " their Fisher is zero:", not anchor.fisher_diag[0][:, blank].any())

# %%
# Zero at the anchor, then growing quadratically as the weights drift.
params = [p.copy() for p in net.normal_params()]
for scale in (0.0, 0.01, 0.1):
    moved = [p + scale for p in params]
    print(f"shift {scale:5.2f}: penalty {ewc_penalty(moved, [anchor], 400.0)[0]:.4f}")
