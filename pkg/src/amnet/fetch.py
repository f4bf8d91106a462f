"""Best-effort download of the raw dataset files.

The library itself only reads local files; this helper fills
``<dir>/mnist`` and ``<dir>/cifar10`` so that ``data_dir=<dir>`` works.
"""

from __future__ import annotations

import gzip
import io
import logging
import os
import shutil
import tarfile
import urllib.request

from .datasets import CIFAR_TEST_FILES, CIFAR_TRAIN_FILES, MNIST_FILES

log = logging.getLogger(__name__)

MNIST_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)
# npm tarball that ships the four uncompressed IDX files under package/data/
MNIST_NPM = "https://registry.npmjs.org/mnist-data/-/mnist-data-1.2.6.tgz"
CIFAR_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"


def _get(url: str, timeout: float = 600) -> bytes:
    log.info("downloading %s", url)
    with urllib.request.urlopen(url, timeout=timeout) as r:
        return r.read()


def fetch_mnist(root: str) -> None:
    os.makedirs(root, exist_ok=True)
    names = [n for pair in MNIST_FILES.values() for n in pair]
    if all(os.path.isfile(os.path.join(root, n)) for n in names):
        return
    errors = []
    for base in MNIST_MIRRORS:
        try:
            for n in names:
                with open(os.path.join(root, n), "wb") as f:
                    f.write(gzip.decompress(_get(base + n + ".gz")))
            return
        except OSError as e:
            errors.append(f"{base}: {e}")
    try:
        with tarfile.open(fileobj=io.BytesIO(_get(MNIST_NPM)), mode="r:gz") as tar:
            for n in names:
                src = tar.extractfile(f"package/data/{n}")
                with open(os.path.join(root, n), "wb") as f:
                    shutil.copyfileobj(src, f)
        return
    except (OSError, KeyError, tarfile.TarError) as e:
        errors.append(f"{MNIST_NPM}: {e}")
    raise OSError("could not download MNIST: " + "; ".join(errors))


def fetch_cifar10(root: str) -> None:
    os.makedirs(root, exist_ok=True)
    names = CIFAR_TRAIN_FILES + CIFAR_TEST_FILES
    if all(os.path.isfile(os.path.join(root, n)) for n in names):
        return
    with tarfile.open(fileobj=io.BytesIO(_get(CIFAR_URL)), mode="r:gz") as tar:
        for n in names:
            src = tar.extractfile(f"cifar-10-batches-bin/{n}")
            with open(os.path.join(root, n), "wb") as f:
                shutil.copyfileobj(src, f)


def fetch_data(directory: str, dataset: str = "all") -> None:
    if dataset in ("mnist", "all"):
        fetch_mnist(os.path.join(directory, "mnist"))
    if dataset in ("cifar10", "all"):
        fetch_cifar10(os.path.join(directory, "cifar10"))
