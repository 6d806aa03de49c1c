"""Walk through the signal core: a sampling grid, a band-limited QPSK
waveform and what chromatic dispersion does to it.

Run with ``python3 examples_scripts/01_dispersion_basics.py``.
"""

import numpy as np

from mdmpr.sigcore import DispersionOperator, SignalGrid, apply_dispersion, energy, to_frequency
from mdmpr.txgen import map_qpsk, pulse_shape

# A 30 GBd signal at two samples per symbol around 1555 nm. The grid length
# has to be a power of two so that every transform stays a plain FFT.
grid = SignalGrid(symbol_rate=30e9, samples_per_symbol=2, center_wavelength=1555e-9, n_samples=4096)
print(f"sample rate {grid.sample_rate / 1e9:.0f} GS/s, {grid.n_symbols} symbols per record")

# Random QPSK symbols, shaped with a raised-cosine pulse (roll-off 0.1).
bits = np.random.default_rng(0).integers(0, 2, size=2 * grid.n_symbols)
x = pulse_shape(map_qpsk(bits), grid, rolloff=0.1)

# Dispersion is an all-pass filter: energy is untouched, the intensity is not.
d = DispersionOperator(650.0)  # ps/nm, the receiver's dispersive element
y = apply_dispersion(x, d)
print(f"energy before {energy(x):.6f}, after {energy(y):.6f}")
print(f"intensity change {np.linalg.norm(np.abs(y.samples) ** 2 - np.abs(x.samples) ** 2):.3f}")

# Undoing it is exact up to rounding.
back = apply_dispersion(y, d.inverse())
print(f"round-trip error {np.max(np.abs(back.samples - x.samples)):.2e}")

# The FFT convention is unnormalized, so Parseval carries a 1/N.
X = to_frequency(x)
print(f"Parseval gap {abs(energy(x) - np.sum(np.abs(X) ** 2) / grid.n_samples):.2e}")

# How far does 650 ps/nm smear a symbol? About this many samples:
print(f"spread of 650 ps/nm: {d.spread_samples(grid)} samples")
