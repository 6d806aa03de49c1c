"""Sampling grid, waveform containers, spectral operators and seeded randomness.

Transform convention: the forward transform is the unnormalized DFT and the
inverse carries the 1/N factor (``numpy.fft`` defaults), so Parseval reads
``sum(|x|**2) == sum(|X|**2) / N``. All frequency-domain operators act by
circular convolution on the grid.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import speed_of_light

__all__ = [
    "SignalGrid",
    "Waveform",
    "ComplexWaveform",
    "MdmWaveform",
    "DispersionOperator",
    "to_frequency",
    "from_frequency",
    "apply_dispersion",
    "dispersion_transfer",
    "quadratic_phase",
    "seeded_rng",
    "energy",
]


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SignalGrid:
    """Sampling context shared by every waveform of a simulation.

    Parameters
    ----------
    symbol_rate : float
        Symbols per second.
    samples_per_symbol : int
        Oversampling factor, at least 2.
    center_wavelength : float
        Optical carrier wavelength in meters.
    n_samples : int
        Record length; must be a power of two.
    """

    symbol_rate: float = 30e9
    samples_per_symbol: int = 2
    center_wavelength: float = 1555e-9
    n_samples: int = 4096

    def __post_init__(self):
        if not self.symbol_rate > 0:
            raise ValueError(f"symbol_rate must be positive, got {self.symbol_rate}")
        if int(self.samples_per_symbol) != self.samples_per_symbol or self.samples_per_symbol < 2:
            raise ValueError(
                f"samples_per_symbol must be an integer >= 2, got {self.samples_per_symbol}"
            )
        if not _is_power_of_two(int(self.n_samples)) or int(self.n_samples) != self.n_samples:
            raise ValueError(f"n_samples must be a power of two, got {self.n_samples}")
        if self.n_samples % self.samples_per_symbol:
            raise ValueError("n_samples must be a multiple of samples_per_symbol")
        if not self.center_wavelength > 0:
            raise ValueError("center_wavelength must be positive")

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.samples_per_symbol

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.symbol_rate

    @property
    def n_symbols(self) -> int:
        return self.n_samples // self.samples_per_symbol

    def frequencies(self) -> np.ndarray:
        """Baseband frequency of every DFT bin in Hz (``fftfreq`` order)."""
        return np.fft.fftfreq(self.n_samples, d=1.0 / self.sample_rate)

    def angular_frequencies(self) -> np.ndarray:
        return 2 * np.pi * self.frequencies()

    def band_mask(self, rolloff: float = 0.1) -> np.ndarray:
        """Bins inside the Nyquist band ``|f| <= (1 + rolloff) * symbol_rate / 2``."""
        edge = (1 + rolloff) * self.symbol_rate / 2
        # small tolerance so bins sitting exactly on the edge are kept
        return np.abs(self.frequencies()) <= edge * (1 + 1e-12)

    def with_samples(self, n_samples: int) -> "SignalGrid":
        return replace(self, n_samples=n_samples)


@dataclass(frozen=True, eq=False)
class Waveform:
    """Complex baseband samples on a :class:`SignalGrid`.

    ``samples`` has shape ``(n_samples,)`` for a single tributary or
    ``(K, n_samples)`` for a mode-multiplexed waveform.
    """

    grid: SignalGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim not in (1, 2):
            raise ValueError("samples must be 1-D or 2-D")
        if s.shape[-1] != self.grid.n_samples:
            raise ValueError(
                f"waveform length {s.shape[-1]} does not match grid ({self.grid.n_samples})"
            )
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def n_tributaries(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[0]

    def tributary(self, k: int) -> "Waveform":
        if self.samples.ndim == 1:
            if k != 0:
                raise IndexError(k)
            return self
        return Waveform(self.grid, self.samples[k])

    def energy(self) -> float:
        return energy(self.samples)

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        return Waveform(self.grid, samples)


# One container serves both roles; the aliases keep call sites readable.
ComplexWaveform = Waveform
MdmWaveform = Waveform


def energy(x) -> float:
    s = x.samples if isinstance(x, Waveform) else np.asarray(x)
    return float(np.sum(np.abs(s) ** 2))


def to_frequency(x: Waveform) -> np.ndarray:
    """Unnormalized DFT along the time axis."""
    return np.fft.fft(x.samples, axis=-1)


def from_frequency(spectrum: np.ndarray, grid: SignalGrid) -> Waveform:
    """Inverse of :func:`to_frequency` (carries the 1/N factor)."""
    return Waveform(grid, np.fft.ifft(spectrum, axis=-1))


@dataclass(frozen=True)
class DispersionOperator:
    """Pure quadratic spectral phase equivalent to a fixed ps/nm of dispersion.

    ``beta2`` (accumulated, s**2) follows ``-D * lambda**2 / (2*pi*c)``; the
    forward operator multiplies the spectrum by ``exp(-1j * beta2 / 2 * w**2)``
    and the backward operator by its conjugate.
    """

    accumulated_dispersion: float = 650.0  # ps/nm
    center_wavelength: float = 1555e-9
    sign: str = "forward"

    def __post_init__(self):
        if self.sign not in ("forward", "backward"):
            raise ValueError(f"sign must be 'forward' or 'backward', got {self.sign!r}")

    @property
    def signed_dispersion(self) -> float:
        """Net ps/nm, negative for a backward operator."""
        return self.accumulated_dispersion if self.sign == "forward" else -self.accumulated_dispersion

    @property
    def beta2(self) -> float:
        d_si = self.signed_dispersion * 1e-3  # ps/nm -> s/m
        return -d_si * self.center_wavelength**2 / (2 * np.pi * speed_of_light)

    def inverse(self) -> "DispersionOperator":
        return replace(self, sign="backward" if self.sign == "forward" else "forward")

    def __add__(self, other: "DispersionOperator") -> "DispersionOperator":
        if not np.isclose(self.center_wavelength, other.center_wavelength, rtol=1e-12, atol=0):
            raise ValueError("cannot compose operators defined at different wavelengths")
        return DispersionOperator(
            self.signed_dispersion + other.signed_dispersion, self.center_wavelength, "forward"
        )

    def transfer(self, grid: SignalGrid) -> np.ndarray:
        """Diagonal frequency response on ``grid``."""
        return dispersion_transfer(self.signed_dispersion, grid)

    def spread_samples(self, grid: SignalGrid, rolloff: float = 0.1) -> int:
        """Approximate time spread (in samples) the operator imposes on an in-band signal."""
        bandwidth = 2 * np.pi * (1 + rolloff) * grid.symbol_rate
        return int(np.ceil(abs(self.beta2) * bandwidth * grid.sample_rate))


def dispersion_transfer(dispersion_psnm: float, grid: SignalGrid) -> np.ndarray:
    return quadratic_phase(dispersion_psnm, grid.n_samples, grid.sample_rate, grid.center_wavelength)


def quadratic_phase(
    dispersion_psnm: float, n_samples: int, sample_rate: float, center_wavelength: float
) -> np.ndarray:
    """``exp(-1j * beta2 / 2 * w**2)`` on an arbitrary-length DFT grid."""
    if dispersion_psnm == 0:
        return np.ones(n_samples, dtype=complex)
    beta2 = -(dispersion_psnm * 1e-3) * center_wavelength**2 / (2 * np.pi * speed_of_light)
    w = 2 * np.pi * np.fft.fftfreq(n_samples, d=1.0 / sample_rate)
    return np.exp(-0.5j * beta2 * w**2)


def apply_dispersion(x: Waveform, d: DispersionOperator) -> Waveform:
    """Apply ``d`` to every tributary of ``x``."""
    if not np.isclose(x.grid.center_wavelength, d.center_wavelength, rtol=1e-9, atol=0):
        raise ValueError(
            f"operator wavelength {d.center_wavelength} does not match grid "
            f"{x.grid.center_wavelength}"
        )
    if d.accumulated_dispersion == 0:
        return Waveform(x.grid, x.samples.copy())
    return Waveform(x.grid, np.fft.ifft(np.fft.fft(x.samples, axis=-1) * d.transfer(x.grid), axis=-1))


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


def seeded_rng(seed: int, stream_label: str) -> np.random.Generator:
    """Independent, reproducible generator for one named random stream.

    The same ``(seed, stream_label)`` pair always yields the same stream;
    PCG64 output is platform independent.
    """
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_label_key(stream_label),))
    return np.random.Generator(np.random.PCG64(ss))

