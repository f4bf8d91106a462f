"""
A layer with per-task memory
============================

Each neuron of a memory layer owns, for every task, ``k`` memory units and
``k`` memory weights. Their products are summed into the neuron's
pre-activation. Nothing about them depends on the input, so switching the
active task shifts every pre-activation by a fixed, task-specific offset.
"""

import numpy as np

from amnet.layers import Network, loss_and_grad, memory_forward, network_backward, network_forward
from amnet.linalg import SeededRng

# %%
# Build a 6 -> 4 -> 3 network for three tasks with two memory units per
# neuron. Memory units start at zero, so give them values to look at.
net = Network.build([6, 4, 3], num_tasks=3, k=2, rng=SeededRng(7))
r = np.random.default_rng(0)
for layer in net.layers:
    for u in layer.mem_units:
        u[:] = r.normal(size=u.shape)

x = r.normal(size=(5, 6))
first = net.layers[0]

# %%
# The offset between two tasks is the same for every input row.
first.active_task = 0
out0 = memory_forward(first, x)
first.active_task = 1
out1 = memory_forward(first, x)
shift = out1 - out0
print("row-wise shift identical:", np.allclose(shift, shift[0]))
print("equals the memory-term difference:",
      np.allclose(shift[0], (first.mem_units[1] * first.mem_weights[1]
                             - first.mem_units[0] * first.mem_weights[0]).sum(axis=1)))

# %%
# With no active task the memory is ignored and the layer is an ordinary
# dense layer.
first.active_task = None
print("plain dense:", np.allclose(memory_forward(first, x), x @ first.w_normal.T + first.bias.T))

# %%
# Backpropagation covers normal weights, bias, and the active task's memory
# units and weights. A central-difference check on one memory unit:
net.active_task = 2
targets = np.array([0, 1, 2, 1, 0])
logits, cache = network_forward(net, x)
grads = network_backward(net, cache, loss_and_grad(net, logits, targets)[1])

unit = net.layers[0].mem_units[2]
h = 1e-6
unit[1, 0] += h
up = loss_and_grad(net, network_forward(net, x)[0], targets)[0]
unit[1, 0] -= 2 * h
down = loss_and_grad(net, network_forward(net, x)[0], targets)[0]
unit[1, 0] += h
print(f"analytic {grads[0].g_mem_units[1, 0]:.8f}  numeric {(up - down) / (2 * h):.8f}")
