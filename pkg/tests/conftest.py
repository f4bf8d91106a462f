import os

import numpy as np
import pytest

from amnet.layers import MemoryLayer, Network
from amnet.linalg import SeededRng

DATA_DIR = os.environ.get("AMNET_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "data"))


def central_diff(f, arr, step=1e-5):
    """Central finite differences of scalar ``f()`` wrt every entry of ``arr`` (mutated in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + step
        hi = f()
        arr[i] = old - step
        lo = f()
        arr[i] = old
        g[i] = (hi - lo) / (2 * step)
    return g


def assert_grad_close(analytic, numeric, rtol, atol=1e-8):
    """Relative error per entry; entries with tiny magnitude are compared absolutely."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    small = scale < atol
    assert np.all(np.abs(analytic - numeric)[small] <= atol)
    rel = np.abs(analytic - numeric)[~small] / scale[~small]
    assert rel.size == 0 or rel.max() <= rtol, f"max rel err {rel.max():.3e}"


def random_layer(rng, in_dim, out_dim, num_tasks=2, k=2, active=0):
    layer = MemoryLayer(
        rng.normal(size=(out_dim, in_dim)),
        rng.normal(size=(out_dim, 1)),
        [rng.normal(size=(out_dim, k)) for _ in range(num_tasks)],
        [rng.normal(size=(out_dim, k)) for _ in range(num_tasks)],
    )
    layer.active_task = active
    return layer


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_net():
    net = Network.build([6, 4, 3], num_tasks=3, k=2, rng=SeededRng(7))
    # memory units start at zero; give them values so every term is exercised
    r = np.random.default_rng(3)
    for layer in net.layers:
        for u in layer.mem_units:
            u[:] = r.normal(size=u.shape)
    net.active_task = 1
    return net


def mnist_available():
    names = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
    return all(os.path.isfile(os.path.join(DATA_DIR, "mnist", n)) for n in names)


def cifar_available():
    names = [f"data_batch_{i}.bin" for i in range(1, 6)] + ["test_batch.bin"]
    return all(os.path.isfile(os.path.join(DATA_DIR, "cifar10", n)) for n in names)


def write_tiny_mnist(root, n_train=30, n_test=10, side=6, seed=0):
    """Synthetic IDX files: class c lights up pixel block c plus noise."""
    import struct
    r = np.random.default_rng(seed)
    os.makedirs(root, exist_ok=True)
    for prefix, n in (("train", n_train), ("t10k", n_test)):
        labels = np.tile(np.arange(10), n)
        imgs = r.integers(0, 40, size=(len(labels), side * side))
        imgs[np.arange(len(labels)), labels * 3] = 255
        with open(os.path.join(root, f"{prefix}-images-idx3-ubyte"), "wb") as f:
            f.write(struct.pack(">IIII", 0x803, len(labels), side, side) + imgs.astype(np.uint8).tobytes())
        with open(os.path.join(root, f"{prefix}-labels-idx1-ubyte"), "wb") as f:
            f.write(struct.pack(">II", 0x801, len(labels)) + labels.astype(np.uint8).tobytes())


@pytest.fixture
def tiny_data(tmp_path):
    write_tiny_mnist(tmp_path / "data" / "mnist")
    return tmp_path / "data"


# acceptance reporting: tests marked ``criterion(n)`` get one summary line each
_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.addinivalue_line("markers", "slow: full-size training runs (minutes)")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        if rep.skipped:
            status = "SKIP"
            detail = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else detail
        else:
            status = "PASS" if rep.passed else "FAIL"
        _CRITERIA.setdefault(mark.args[0], []).append((status, item.name, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        statuses = {s for s, _, _ in results}
        overall = "FAIL" if "FAIL" in statuses else ("SKIP" if statuses == {"SKIP"} else "PASS")
        details = "; ".join(d for _, _, d in results if d)
        terminalreporter.write_line(f"criterion {n:2d}: {overall}  {details}")
