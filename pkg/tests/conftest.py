import numpy as np
import pytest

from mdmpr.sigcore import SignalGrid, Waveform


@pytest.fixture
def grid():
    return SignalGrid(30e9, 2, 1555e-9, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_waveform(grid, rng, k=None):
    shape = (grid.n_samples,) if k is None else (k, grid.n_samples)
    return Waveform(grid, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
