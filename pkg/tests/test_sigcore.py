import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdmpr.sigcore import (DispersionOperator, SignalGrid, Waveform, apply_dispersion, energy,
                           from_frequency, seeded_rng, to_frequency)

from conftest import random_waveform, rel_err


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        SignalGrid(n_samples=1000)
    with pytest.raises(ValueError):
        SignalGrid(samples_per_symbol=1)


def test_band_mask_keeps_edge_bins():
    g = SignalGrid(30e9, 2, 1555e-9, 2048)
    m = g.band_mask(0.1)
    f = np.abs(g.frequencies())
    assert m[f <= 16.5e9].all() and not m[f > 16.5e9 * 1.001].any()


def test_zero_waveform_has_zero_spectrum(grid):
    assert not np.any(to_frequency(Waveform(grid, np.zeros(grid.n_samples))))


def test_impulse_has_flat_spectrum(grid):
    x = np.zeros(grid.n_samples, complex)
    x[0] = 1
    assert np.allclose(to_frequency(Waveform(grid, x)), 1.0)


def test_parseval_and_inverse(grid, rng):
    x = random_waveform(grid, rng, 3)
    X = to_frequency(x)
    assert abs(energy(x) - np.sum(np.abs(X) ** 2) / grid.n_samples) / energy(x) < 1e-12
    assert rel_err(from_frequency(X, grid).samples, x.samples) < 1e-14


def test_zero_dispersion_is_exact_identity(grid, rng):
    x = random_waveform(grid, rng)
    y = apply_dispersion(x, DispersionOperator(0.0))
    assert np.array_equal(y.samples, x.samples)


def test_dispersion_round_trip(grid, rng):
    x = random_waveform(grid, rng, 6)
    d = DispersionOperator(650.0)
    y = apply_dispersion(apply_dispersion(x, d), d.inverse())
    assert rel_err(y.samples, x.samples) < 1e-9


def test_single_tone_only_gains_phase(grid):
    n = np.arange(grid.n_samples)
    x = Waveform(grid, np.exp(2j * np.pi * 37 * n / grid.n_samples))
    y = apply_dispersion(x, DispersionOperator(650.0))
    ratio = y.samples / x.samples
    assert np.allclose(np.abs(ratio), 1) and np.allclose(ratio, ratio[0])


def test_beta2_sign_convention():
    # normal-dispersion fiber (D > 0) has anomalous beta2 < 0
    d = DispersionOperator(17.0, 1550e-9)
    assert d.beta2 < 0
    assert d.inverse().signed_dispersion == -17.0
    assert (d + d.inverse()).signed_dispersion == 0


def test_dispersion_preserves_energy(grid, rng):
    x = random_waveform(grid, rng)
    y = apply_dispersion(x, DispersionOperator(-300.0))
    assert abs(energy(y) - energy(x)) / energy(x) < 1e-12


def test_wavelength_mismatch_rejected(grid, rng):
    with pytest.raises(ValueError):
        apply_dispersion(random_waveform(grid, rng), DispersionOperator(100.0, 1310e-9))


def test_seeded_rng_streams():
    a = seeded_rng(42, "bits").random(1000)
    assert np.array_equal(a, seeded_rng(42, "bits").random(1000))
    assert not np.array_equal(a, seeded_rng(42, "noise").random(1000))
    assert not np.array_equal(a, seeded_rng(43, "bits").random(1000))


@settings(max_examples=25, deadline=None)
@given(d1=st.floats(-2000, 2000), d2=st.floats(-2000, 2000), seed=st.integers(0, 2**32))
def test_dispersion_composes_additively(d1, d2, seed):
    g = SignalGrid(30e9, 2, 1555e-9, 256)
    x = random_waveform(g, np.random.default_rng(seed))
    a, b = DispersionOperator(d1), DispersionOperator(d2)
    two = apply_dispersion(apply_dispersion(x, a), b)
    one = apply_dispersion(x, a + b)
    assert rel_err(two.samples, one.samples) < 1e-9
