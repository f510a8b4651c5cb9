from pathlib import Path

import pytest

from difl import _backend

MNIST_DIR = Path(__file__).resolve().parents[1] / "data" / "mnist5k"
MNIST_IMAGES = MNIST_DIR / "images-idx3-ubyte.gz"
MNIST_LABELS = MNIST_DIR / "labels-idx1-ubyte.gz"

_REPORT = []


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run the test once per kernel backend."""
    prev = _backend.backend()
    _backend.set_backend(request.param)
    yield request.param
    _backend.set_backend(prev)


@pytest.fixture(scope="session")
def report():
    return _REPORT


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
