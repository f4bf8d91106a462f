"""Binary network checkpoints.

Layout, all little-endian::

    "AMN1"                      4-byte magic
    u32 n_layers
    u32 dims[n_layers + 1]      input width, then each layer's output width
    u32 num_tasks
    u32 k                       memory units per neuron per task
    u8 activation, u8 loss, u8 scheme, u8 reserved (0)
    i32 active_task             -1 when no task is active
    per layer:
        f64 w_normal[out][in], f64 bias[out]
        per task: f64 mem_units[out][k], f64 mem_weights[out][k]
    u32 n_anchors
    per anchor:
        u32 task_id
        f64 anchor value of each normal parameter, in layer order (w, b)
        f64 fisher diagonal of each normal parameter, same order

Parameters are stored row-major; reading back gives bit-identical arrays.
"""

from __future__ import annotations

import io
import struct
from typing import Sequence

import numpy as np

from .ewc import FisherAnchor
from .layers import ACTIVATIONS, LOSSES, SCHEMES, MemoryLayer, Network

MAGIC = b"AMN1"


class CheckpointError(ValueError):
    pass


def _put(buf: io.BytesIO, a: np.ndarray) -> None:
    buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def dumps(net: Network, anchors: Sequence[FisherAnchor] = ()) -> bytes:
    buf = io.BytesIO()
    dims = net.dims
    buf.write(MAGIC)
    buf.write(struct.pack(f"<I{len(dims)}I", len(net.layers), *dims))
    buf.write(struct.pack("<II", net.num_tasks, net.k))
    buf.write(struct.pack("<BBBB", ACTIVATIONS.index(net.activation), LOSSES.index(net.loss),
                          SCHEMES.index(net.scheme), 0))
    t = net.active_task
    buf.write(struct.pack("<i", -1 if t is None else t))
    for layer in net.layers:
        _put(buf, layer.w_normal)
        _put(buf, layer.bias)
        for u, w in zip(layer.mem_units, layer.mem_weights):
            _put(buf, u)
            _put(buf, w)
    buf.write(struct.pack("<I", len(anchors)))
    for a in anchors:
        buf.write(struct.pack("<I", a.task_id))
        for p in a.anchor_params:
            _put(buf, p)
        for f in a.fisher_diag:
            _put(buf, f)
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos}")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        size = rows * cols * 8
        if self.pos + size > len(self.data):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos}")
        a = np.frombuffer(self.data, dtype="<f8", count=rows * cols, offset=self.pos)
        self.pos += size
        return a.astype(np.float64).reshape(rows, cols)


def loads(data: bytes) -> tuple[Network, list[FisherAnchor]]:
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}")
    r = _Reader(data)
    r.pos = 4
    (n_layers,) = r.unpack("<I")
    dims = r.unpack(f"<{n_layers + 1}I")
    num_tasks, k = r.unpack("<II")
    act, loss, scheme, _ = r.unpack("<BBBB")
    (active,) = r.unpack("<i")
    try:
        names = ACTIVATIONS[act], LOSSES[loss], SCHEMES[scheme]
    except IndexError:
        raise CheckpointError("unknown activation/loss/scheme code") from None
    layers = []
    shapes = []
    for i, o in zip(dims, dims[1:]):
        w = r.matrix(o, i)
        b = r.matrix(o, 1)
        units, weights = [], []
        for _ in range(num_tasks):
            units.append(r.matrix(o, k))
            weights.append(r.matrix(o, k))
        layers.append(MemoryLayer(w, b, units, weights))
        shapes += [(o, i), (o, 1)]
    net = Network(layers, *names)
    net.active_task = None if active < 0 else active
    (n_anchors,) = r.unpack("<I")
    anchors = []
    for _ in range(n_anchors):
        (task_id,) = r.unpack("<I")
        star = tuple(r.matrix(*s) for s in shapes)
        fisher = tuple(r.matrix(*s) for s in shapes)
        anchors.append(FisherAnchor(task_id, star, fisher))
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after checkpoint")
    return net, anchors


def save(path, net: Network, anchors: Sequence[FisherAnchor] = ()) -> None:
    with open(path, "wb") as f:
        f.write(dumps(net, anchors))


def load(path) -> tuple[Network, list[FisherAnchor]]:
    with open(path, "rb") as f:
        return loads(f.read())
