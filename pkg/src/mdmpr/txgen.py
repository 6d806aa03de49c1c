"""Transmit-side signal generation: QPSK mapping, framing, pulse shaping.

Frame layout (in symbols, circular)::

    | guard | training sequence | payload (pilot groups inside) | guard + pad |

The total length is rounded up to a power of two so the waveform fits a
:class:`~mdmpr.sigcore.SignalGrid`. Guard symbols are zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sigcore import SignalGrid, Waveform, seeded_rng

__all__ = [
    "FrameSpec",
    "MdmFrame",
    "map_qpsk",
    "qpsk_gray_bits",
    "build_frame",
    "pulse_spectrum",
    "symbol_gain",
    "pulse_shape",
    "frame_waveform",
    "frame_grid",
    "decorrelate",
]

_SQRT2 = np.sqrt(2.0)


def map_qpsk(bits) -> np.ndarray:
    """Gray-map bit pairs onto unit-power QPSK.

    The first bit of each pair sets the sign of the in-phase part, the second
    the quadrature part (0 -> +, 1 -> -), so ``00 -> (1+1j)/sqrt(2)`` and
    ``11 -> (-1-1j)/sqrt(2)``. Works along the last axis.
    """
    b = np.asarray(bits)
    if b.shape[-1] % 2:
        raise ValueError(f"QPSK mapping needs an even number of bits, got {b.shape[-1]}")
    if b.size and not np.all((b == 0) | (b == 1)):
        raise ValueError("bits must be 0 or 1")
    b = b.astype(np.int8).reshape(*b.shape[:-1], -1, 2)
    return ((1 - 2 * b[..., 0]) + 1j * (1 - 2 * b[..., 1])) / _SQRT2


def qpsk_gray_bits(symbols) -> np.ndarray:
    """Nearest-point Gray demapping; a zero component decides ``+`` (bit 0)."""
    s = np.asarray(symbols)
    bits = np.empty(s.shape + (2,), dtype=np.int8)
    bits[..., 0] = s.real < 0
    bits[..., 1] = s.imag < 0
    return bits.reshape(*s.shape[:-1], -1) if s.ndim else bits


@dataclass(frozen=True)
class FrameSpec:
    """Frame geometry and seeds.

    ``pilot_percentage`` is a fraction in ``[0, 1]``. Pilot groups of
    ``pilot_group_size`` consecutive symbols are spread evenly over the
    payload, the first one right after the training sequence.
    """

    ts_length: int = 2048
    payload_length: int = 2**14
    pilot_percentage: float = 0.2
    pilot_group_size: int = 1
    guard_length: int = 64
    seed: int = 0
    decorrelation_delay: int = 128  # symbols between spatial copies of the payload data

    def __post_init__(self):
        if self.ts_length < 0 or self.payload_length < 1 or self.guard_length < 0:
            raise ValueError("frame lengths must be non-negative and payload at least 1")
        if self.pilot_group_size < 1:
            raise ValueError("pilot_group_size must be >= 1")
        if not 0 <= self.pilot_percentage <= 1:
            raise ValueError("pilot_percentage is a fraction in [0, 1]")
        if self.n_pilot_groups < 1:
            raise ValueError(
                f"pilot_percentage={self.pilot_percentage} with M={self.pilot_group_size} "
                f"over {self.payload_length} symbols gives no pilot group"
            )

    @property
    def n_pilot_groups(self) -> int:
        # tolerance keeps e.g. 0.2 * 2048 / 1 from flooring to 408 through rounding noise
        return int(np.floor(self.pilot_percentage * self.payload_length / self.pilot_group_size + 1e-9))

    @property
    def n_pilots(self) -> int:
        return self.n_pilot_groups * self.pilot_group_size

    @property
    def ts_start(self) -> int:
        return self.guard_length

    @property
    def payload_start(self) -> int:
        return self.guard_length + self.ts_length

    @property
    def payload_stop(self) -> int:
        return self.payload_start + self.payload_length

    @property
    def n_symbols(self) -> int:
        used = self.ts_length + self.payload_length + 2 * self.guard_length
        return 1 << int(np.ceil(np.log2(used)))

    def pilot_group_starts(self) -> np.ndarray:
        g = np.arange(self.n_pilot_groups)
        return self.payload_start + (g * self.payload_length) // self.n_pilot_groups

    def pilot_positions(self) -> np.ndarray:
        """Symbol indices of all pilots, shape ``(n_groups, M)``."""
        return self.pilot_group_starts()[:, None] + np.arange(self.pilot_group_size)[None, :]


@dataclass(frozen=True, eq=False)
class MdmFrame:
    """Symbol-level content of all ``K`` tributaries.

    Attributes
    ----------
    symbols : ndarray, shape (K, n_symbols)
        Full circular frame (guards are zero).
    bits : ndarray, shape (K, 2 * n_symbols)
        Bits behind every symbol (zero under the guards).
    pilot_positions : ndarray, shape (n_groups, M)
        Absolute symbol indices of the pilot groups, shared by all tributaries.
    """

    spec: FrameSpec
    symbols: np.ndarray = field(repr=False)
    bits: np.ndarray = field(repr=False)
    pilot_positions: np.ndarray = field(repr=False)

    @property
    def n_tributaries(self) -> int:
        return self.symbols.shape[0]

    @property
    def ts_slice(self) -> slice:
        return slice(self.spec.ts_start, self.spec.payload_start)

    @property
    def payload_slice(self) -> slice:
        return slice(self.spec.payload_start, self.spec.payload_stop)

    @property
    def ts_symbols(self) -> np.ndarray:
        return self.symbols[:, self.ts_slice]

    @property
    def pilot_symbols(self) -> np.ndarray:
        """Pilot values, shape ``(K, n_groups, M)``."""
        return self.symbols[:, self.pilot_positions]

    @property
    def pilot_index_table(self) -> list[list[tuple[int, int]]]:
        """Per tributary, the ``(position, group_id)`` of every pilot."""
        row = [(int(p), g) for g, grp in enumerate(self.pilot_positions) for p in grp]
        return [list(row) for _ in range(self.n_tributaries)]

    def data_mask(self) -> np.ndarray:
        """Payload symbol positions that carry data rather than pilots."""
        m = np.zeros(self.spec.n_symbols, dtype=bool)
        m[self.payload_slice] = True
        m[self.pilot_positions.ravel()] = False
        return m

    def data_bits(self) -> np.ndarray:
        """Bits of the data symbols only, shape ``(K, 2 * n_data)``."""
        m = np.repeat(self.data_mask(), 2)
        return self.bits[:, m]


def _random_bits(seed: int, label: str, n: int) -> np.ndarray:
    return seeded_rng(seed, label).integers(0, 2, size=n, dtype=np.int8)


def build_frame(spec: FrameSpec, n_tributaries: int = 6) -> MdmFrame:
    """Assemble the symbol frame for ``n_tributaries`` tributaries.

    Payload data come from one stream per polarization; each spatial mode
    carries the same data circularly delayed by ``decorrelation_delay``
    symbols per mode index. Training sequences and pilots are independent
    per tributary.
    """
    K = int(n_tributaries)
    if K < 1:
        raise ValueError("need at least one tributary")
    n = spec.n_symbols
    bits = np.zeros((K, 2 * n), dtype=np.int8)

    n_pol = 2 if K > 1 else 1
    pol_bits = [
        _random_bits(spec.seed, f"payload-pol{p}", 2 * spec.payload_length).reshape(-1, 2)
        for p in range(n_pol)
    ]
    pay = slice(2 * spec.payload_start, 2 * spec.payload_stop)
    ts = slice(2 * spec.ts_start, 2 * spec.payload_start)
    for k in range(K):
        mode_index, pol = divmod(k, n_pol)
        data = decorrelate(pol_bits[pol], mode_index, spec.decorrelation_delay)
        bits[k, pay] = data.reshape(-1)
        bits[k, ts] = _random_bits(spec.seed, f"ts-{k}", 2 * spec.ts_length)

    positions = spec.pilot_positions()
    pilot_bits = np.stack(
        [_random_bits(spec.seed, f"pilots-{k}", 2 * spec.n_pilots) for k in range(K)]
    ).reshape(K, spec.n_pilots, 2)
    flat = positions.ravel()
    bits3 = bits.reshape(K, n, 2)
    bits3[:, flat, :] = pilot_bits

    symbols = map_qpsk(bits)
    guard = np.ones(n, dtype=bool)
    guard[spec.ts_start : spec.payload_stop] = False
    symbols[:, guard] = 0
    bits3[:, guard, :] = 0
    return MdmFrame(spec, symbols, bits, positions)


def frame_grid(spec: FrameSpec, symbol_rate: float = 30e9, samples_per_symbol: int = 2,
               center_wavelength: float = 1555e-9) -> SignalGrid:
    return SignalGrid(symbol_rate, samples_per_symbol, center_wavelength,
                      spec.n_symbols * samples_per_symbol)


def _raised_cosine(f: np.ndarray, symbol_rate: float, rolloff: float) -> np.ndarray:
    a = np.abs(f)
    f1 = (1 - rolloff) * symbol_rate / 2
    f2 = (1 + rolloff) * symbol_rate / 2
    h = np.zeros_like(a)
    h[a <= f1] = 1.0
    if rolloff > 0:
        m = (a > f1) & (a <= f2)
        h[m] = 0.5 * (1 + np.cos(np.pi / (rolloff * symbol_rate) * (a[m] - f1)))
    return h


def pulse_spectrum(grid: SignalGrid, rolloff: float = 0.1, kind: str = "rc") -> np.ndarray:
    """Transmit pulse response on the grid, normalized to unit energy per symbol.

    ``kind="rc"`` is a raised-cosine (Nyquist at the transmitter);
    ``kind="rrc"`` its square root, to be paired with a matched filter.
    Normalization: a single symbol of unit power yields a waveform with
    energy ``samples_per_symbol``.
    """
    if not 0 <= rolloff <= 1:
        raise ValueError("rolloff must lie in [0, 1]")
    rc = _raised_cosine(grid.frequencies(), grid.symbol_rate, rolloff)
    if kind == "rc":
        shape = rc
    elif kind == "rrc":
        shape = np.sqrt(rc)
    else:
        raise ValueError(f"unknown pulse kind {kind!r}")
    n, sps = grid.n_samples, grid.samples_per_symbol
    gain = np.sqrt(sps * n / np.sum(shape**2))
    return gain * shape


def symbol_gain(grid: SignalGrid, rolloff: float = 0.1, kind: str = "rc") -> float:
    """Amplitude of the end-to-end response at the symbol instant.

    For ``rc`` this is the field value per unit symbol at ``t = k*T``; for
    ``rrc`` it includes the unit-peak matched filter used by the receiver.
    """
    p = pulse_spectrum(grid, rolloff, kind)
    if kind == "rrc":
        p = p * np.sqrt(_raised_cosine(grid.frequencies(), grid.symbol_rate, rolloff))
    return float(np.real(np.sum(p)) / grid.n_samples)


def pulse_shape(symbols, grid: SignalGrid, rolloff: float = 0.1, kind: str = "rc") -> Waveform:
    """Upsample ``symbols`` onto ``grid`` and filter with the Nyquist pulse.

    Filtering is circular and done in the frequency domain, so the output
    spectrum is exactly zero outside ``(1 + rolloff) * symbol_rate / 2``.
    Accepts ``(n,)`` or ``(K, n)`` symbol arrays; shorter inputs are
    zero-padded up to the grid.
    """
    s = np.asarray(symbols, dtype=complex)
    sps = grid.samples_per_symbol
    if s.shape[-1] * sps > grid.n_samples:
        raise ValueError(
            f"{s.shape[-1]} symbols need {s.shape[-1] * sps} samples, grid has {grid.n_samples}"
        )
    up = np.zeros(s.shape[:-1] + (grid.n_samples,), dtype=complex)
    up[..., : s.shape[-1] * sps : sps] = s
    spectrum = np.fft.fft(up, axis=-1) * pulse_spectrum(grid, rolloff, kind)
    return Waveform(grid, np.fft.ifft(spectrum, axis=-1))


def frame_waveform(frame: MdmFrame, grid: SignalGrid, rolloff: float = 0.1,
                   kind: str = "rc") -> Waveform:
    return pulse_shape(frame.symbols, grid, rolloff, kind)


def decorrelate(x, tributary_index: int, delta: int):
    """Circularly delay ``x`` by ``tributary_index * delta`` along its first axis.

    ``x`` may be a :class:`Waveform` (delay in samples along time) or an
    array (delay along axis 0).
    """
    shift = int(tributary_index) * int(delta)
    if isinstance(x, Waveform):
        return Waveform(x.grid, np.roll(x.samples, shift, axis=-1))
    return np.roll(np.asarray(x), shift, axis=0)
