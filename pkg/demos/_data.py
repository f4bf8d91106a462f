"""Shared helper for the demos: real MNIST when present, otherwise a synthetic stand-in."""

import os

import numpy as np

from amnet.datasets import LabeledDataset, mnist_from_dir

DATA_DIR = os.environ.get("AMNET_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "data"))


def digits():
    try:
        return mnist_from_dir(os.path.join(DATA_DIR, "mnist"))
    except OSError:
        print("MNIST not found; using synthetic 28x28 blobs (run `amnet fetch-data` for the real thing)")
        r = np.random.default_rng(0)
        protos = r.uniform(size=(10, 784)) ** 4
        out = []
        for split, n in (("train", 6000), ("test", 1000)):
            labels = np.arange(n) % 10
            images = np.clip(protos[labels] + 0.2 * r.normal(size=(n, 784)), 0, 1)
            out.append(LabeledDataset(images, labels, split))
        return tuple(out)
