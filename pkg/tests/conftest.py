import os
import re
from pathlib import Path

import numpy as np
import pytest

from accordion import data, nn

_RESULTS = []


@pytest.fixture(scope="session")
def mnist_root(tmp_path_factory):
    """A directory holding MNIST IDX files.

    Uses ``$DATASET_ROOT`` when it already contains MNIST; otherwise writes the
    5000 real MNIST digits bundled with ``mlxtend`` out as IDX files, so the
    tests always go through ``load_mnist_idx``.
    """
    env = os.environ.get("DATASET_ROOT")
    if env:
        try:
            data.load_mnist(env)
            return Path(env)
        except FileNotFoundError:
            pass
    mlx = pytest.importorskip("mlxtend.data")
    x, y = mlx.mnist_data()
    root = tmp_path_factory.mktemp("dataset_root")
    (root / "mnist").mkdir()
    data.write_mnist_idx(root / "mnist" / data.MNIST_FILES["train"][0],
                         root / "mnist" / data.MNIST_FILES["train"][1],
                         x.reshape(-1, 28, 28).astype(np.uint8), y.astype(np.uint8))
    return root


@pytest.fixture(scope="session")
def mnist_subset(mnist_root):
    """(train 2000, eval 1000) drawn once from the MNIST training file."""
    ds = data.load_mnist(mnist_root)
    train, val, _ = data.split(ds, data.SplitSpec(2000, 1000, 0, seed=0))
    return train, val


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mnist_spec():
    return nn.mnist_custom()


@pytest.fixture(scope="session")
def lenet_spec():
    return nn.lenet_cifar10()


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = report.user_properties and dict(report.user_properties).get("acceptance")
    if marker:
        _RESULTS.append((marker, report.outcome, report.duration))


def pytest_runtest_setup(item):
    m = item.get_closest_marker("acceptance")
    if m:
        item.user_properties.append(("acceptance", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    def order(result):
        label = str(result[0][0])
        return int(re.match(r"\d+", label).group()), label

    for (number, title), outcome, duration in sorted(_RESULTS, key=order):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} ({duration:.1f}s)")
