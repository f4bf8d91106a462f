"""Raw MNIST / CIFAR-10 readers and sequential task construction."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .linalg import SeededRng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3073
CIFAR_PIXELS = 3072

MNIST_GROUPS = ((0, 1, 2), (4, 5, 6), (7, 8, 9))
CIFAR_GROUPS = ((0, 1, 2), (3, 4, 5), (6, 7, 8))

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILES = ("test_batch.bin",)


class DataFormatError(ValueError):
    """Malformed dataset file. ``offset`` is the byte position of the problem."""

    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{path}: byte {offset}: {message}")


class BadMagicError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


class BadLabelError(DataFormatError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    images: np.ndarray   # n x d, values in [0, 1]
    labels: np.ndarray   # n, original class ids 0-9
    split: str = "train"

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.labels.shape[0]


def _read_idx(path, magic: int, ndims: int) -> tuple[tuple[int, ...], bytes, int]:
    with open(path, "rb") as f:
        raw = f.read()
    header = 4 + 4 * ndims
    if len(raw) < 4:
        raise TruncatedFileError(path, len(raw), "file too short for magic number")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise BadMagicError(path, 0, f"magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedFileError(path, len(raw), f"header needs {header} bytes")
    dims = struct.unpack(f">{ndims}I", raw[4:header])
    need = header + int(np.prod(dims, dtype=np.int64))
    if len(raw) < need:
        raise TruncatedFileError(path, len(raw), f"payload ends early, expected {need} bytes")
    return dims, raw, header


def load_mnist(images_path, labels_path, split: str = "train") -> LabeledDataset:
    dims, raw, off = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    n, rows, cols = dims
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=off)
    (nl,), lraw, loff = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if nl != n:
        raise CountMismatchError(labels_path, 4, f"{nl} labels for {n} images")
    labels = np.frombuffer(lraw, dtype=np.uint8, count=nl, offset=loff).astype(np.int64)
    if nl and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise BadLabelError(labels_path, loff + bad, f"label {labels[bad]} > 9")
    images = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0
    return LabeledDataset(images, labels, split)


def load_cifar10(batch_paths: Sequence, split: str = "train") -> LabeledDataset:
    """Concatenate CIFAR-10 binary batches (1 label byte + 3072 channel-major pixels)."""
    images, labels = [], []
    for path in batch_paths:
        with open(path, "rb") as f:
            raw = f.read()
        rem = len(raw) % CIFAR_RECORD
        if rem or not raw:
            raise TruncatedFileError(path, len(raw) - rem,
                                     f"length {len(raw)} is not a positive multiple of {CIFAR_RECORD}")
        recs = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        lab = recs[:, 0].astype(np.int64)
        if lab.max() > 9:
            bad = int(np.argmax(lab > 9))
            raise BadLabelError(path, bad * CIFAR_RECORD, f"label byte {lab[bad]} > 9")
        labels.append(lab)
        images.append(recs[:, 1:].astype(np.float64) / 255.0)
    if not images:
        raise ValueError("no CIFAR-10 batch files given")
    return LabeledDataset(np.concatenate(images), np.concatenate(labels), split)


def mnist_from_dir(root) -> tuple[LabeledDataset, LabeledDataset]:
    out = []
    for split in ("train", "test"):
        img, lab = MNIST_FILES[split]
        out.append(load_mnist(os.path.join(root, img), os.path.join(root, lab), split))
    return out[0], out[1]


def cifar10_from_dir(root) -> tuple[LabeledDataset, LabeledDataset]:
    train = load_cifar10([os.path.join(root, f) for f in CIFAR_TRAIN_FILES], "train")
    test = load_cifar10([os.path.join(root, f) for f in CIFAR_TEST_FILES], "test")
    return train, test


@dataclass
class TaskSpec:
    """One task in a sequential run.

    ``train_targets``/``test_targets`` are output-neuron indices after the
    label map; ``outputs`` lists the output neurons that belong to the task.
    """

    task_index: int
    class_list: tuple[int, ...]
    label_map: dict[int, int]
    outputs: tuple[int, ...]
    n_outputs: int
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    permutation: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def train_targets(self) -> np.ndarray:
        return _map_labels(self.label_map, self.train_labels)

    @property
    def test_targets(self) -> np.ndarray:
        return _map_labels(self.label_map, self.test_labels)

    @property
    def n_train(self) -> int:
        return self.train_labels.shape[0]


def _map_labels(label_map: dict[int, int], labels: np.ndarray) -> np.ndarray:
    lut = np.full(10, -1, dtype=np.int64)
    for k, v in label_map.items():
        lut[k] = v
    return lut[labels]


def make_disjoint_tasks(train: LabeledDataset, test: LabeledDataset,
                        class_groups: Sequence[Sequence[int]] = MNIST_GROUPS,
                        scheme: str = "shared") -> list[TaskSpec]:
    """Split both datasets into tasks over disjoint class groups.

    ``shared``: every task maps its classes to outputs 0..g-1 in listed order.
    ``individual``: task t owns outputs t*g .. t*g+g-1.
    """
    if scheme not in ("shared", "individual"):
        raise ValueError(f"unknown output scheme {scheme!r}")
    groups = [tuple(int(c) for c in g) for g in class_groups]
    seen: set[int] = set()
    for g in groups:
        if len(set(g)) != len(g) or not g:
            raise ValueError(f"class group {g} is empty or repeats a class")
        if seen & set(g):
            raise ValueError(f"class groups overlap on {sorted(seen & set(g))}")
        seen |= set(g)
    sizes = {len(g) for g in groups}
    if len(sizes) != 1:
        raise ValueError("all class groups must have the same size")
    width = sizes.pop()
    n_out = width if scheme == "shared" else width * len(groups)
    tasks = []
    for t, g in enumerate(groups):
        base = 0 if scheme == "shared" else t * width
        label_map = {c: base + j for j, c in enumerate(g)}
        tr = np.isin(train.labels, g)
        te = np.isin(test.labels, g)
        if not tr.any() or not te.any():
            raise ValueError(f"class group {g} has no examples in one of the splits")
        tasks.append(TaskSpec(t, g, label_map, tuple(range(base, base + width)), n_out,
                              train.images[tr], train.labels[tr], test.images[te], test.labels[te]))
    return tasks


def make_permuted_tasks(train: LabeledDataset, test: LabeledDataset, n_tasks: int,
                        rng: SeededRng) -> list[TaskSpec]:
    """Task i sees every image under a fixed pixel permutation; task 0 is unpermuted."""
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    d = train.images.shape[1]
    identity = {c: c for c in range(10)}
    tasks = []
    for t in range(n_tasks):
        perm = np.arange(d) if t == 0 else rng.permutation(d)
        tasks.append(TaskSpec(t, tuple(range(10)), identity, tuple(range(10)), 10,
                              train.images[:, perm], train.labels.copy(),
                              test.images[:, perm], test.labels.copy(), permutation=perm))
    return tasks


def subsample(task: TaskSpec, train_limit: int = 0, test_limit: int = 0) -> TaskSpec:
    """Keep the first ``train_limit``/``test_limit`` examples (0 keeps all)."""
    tr = slice(None) if not train_limit else slice(0, train_limit)
    te = slice(None) if not test_limit else slice(0, test_limit)
    return TaskSpec(task.task_index, task.class_list, task.label_map, task.outputs, task.n_outputs,
                    task.train_images[tr], task.train_labels[tr], task.test_images[te],
                    task.test_labels[te], task.permutation)
