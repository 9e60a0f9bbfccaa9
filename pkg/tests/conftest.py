import numpy as np
import pytest

from fracshe.grid import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1():
    return GridSpec(1, 20.0, 1024)


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACSHE_OUTPUT_ROOT", str(tmp_path / "runs"))
