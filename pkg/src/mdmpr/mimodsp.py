"""Post-retrieval DSP: CD compensation, symbol-spaced MIMO equalization,
QPSK decisions and BER/constellation metrology."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .channel import TransferMatrix
from .sigcore import DispersionOperator, SignalGrid, Waveform, apply_dispersion
from .txgen import MdmFrame, _raised_cosine, pulse_spectrum, qpsk_gray_bits

__all__ = [
    "EqualizerConfig",
    "EqualizerResult",
    "BerReport",
    "compensate_cd",
    "receive_filter",
    "decimation_phase",
    "mimo_equalize",
    "demap_qpsk",
    "compute_ber",
    "export_constellation",
    "read_constellation",
]

_MODES = ("zero_forcing_from_h", "mmse_from_h", "data_aided_ls")


@dataclass(frozen=True)
class EqualizerConfig:
    """``n_taps=None`` keeps the full-length frequency-domain equalizer;
    an integer truncates each entry to that many symbol-spaced taps.

    ``regularization`` is added to the diagonal before the ZF inversion,
    ``noise_loading`` is the MMSE noise-to-signal power ratio per symbol.
    """

    mode: str = "zero_forcing_from_h"
    n_taps: int | None = None
    noise_loading: float = 0.0
    regularization: float = 0.0
    rolloff: float = 0.1
    pulse: str = "rc"
    ls_ridge: float = 1e-9

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.n_taps is not None and self.n_taps < 1:
            raise ValueError("n_taps must be >= 1")
        if self.noise_loading < 0 or self.regularization < 0:
            raise ValueError("noise_loading and regularization must be >= 0")


@dataclass(eq=False)
class EqualizerResult:
    symbols: np.ndarray  # (K, n_symbols), aligned to transmitted symbol indices
    taps: np.ndarray  # (K, K, n) symbol-spaced equalizer taps, zero delay at index 0 (circular)
    phase: int  # decimation phase in samples

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.symbols, dtype=dtype)


def compensate_cd(x: Waveform, h_cd: DispersionOperator) -> Waveform:
    """Undo the common dispersion ``h_cd`` on every tributary."""
    if h_cd.center_wavelength != x.grid.center_wavelength:
        raise ValueError("dispersion operator and waveform use different center wavelengths")
    op = h_cd if h_cd.sign == "forward" else h_cd.inverse()
    return apply_dispersion(x, op.inverse())


def receive_filter(grid: SignalGrid, rolloff: float = 0.1, pulse: str = "rc") -> np.ndarray:
    """Receiver filter applied before decimation.

    For an ``rrc`` transmitter this is the matched root-raised-cosine; an
    ``rc`` transmitter is already Nyquist, so only the out-of-band noise is
    removed (ideal band-limiting filter).
    """
    if pulse == "rrc":
        return np.sqrt(_raised_cosine(grid.frequencies(), grid.symbol_rate, rolloff))
    if pulse == "rc":
        return grid.band_mask(rolloff).astype(float)
    raise ValueError(f"unknown pulse kind {pulse!r}")


def decimation_phase(samples: np.ndarray, sps: int, region: slice | None = None) -> int:
    """Sampling phase with the largest energy over ``region`` (default: all samples)."""
    s = np.atleast_2d(samples)
    if region is not None:
        s = s[:, region]
    n = (s.shape[-1] // sps) * sps
    e = np.sum(np.abs(s[:, :n].reshape(s.shape[0], -1, sps)) ** 2, axis=(0, 1))
    return int(np.argmax(e))


def _truncate_taps(W: np.ndarray, n_taps: int | None) -> np.ndarray:
    """Circular symbol-spaced taps of a per-bin equalizer, optionally windowed."""
    w = np.fft.ifft(W, axis=-1)
    if n_taps is None or n_taps >= w.shape[-1]:
        return w
    n = w.shape[-1]
    keep = (np.arange(n_taps) - n_taps // 2) % n
    out = np.zeros_like(w)
    out[..., keep] = w[..., keep]
    return out


def _fold(H: np.ndarray, sps: int) -> np.ndarray:
    """Symbol-rate response seen after decimation: sum of the ``sps`` aliases."""
    K1, K2, N = H.shape
    return H.reshape(K1, K2, sps, N // sps).sum(axis=2) / sps


def mimo_equalize(fields: Waveform, h: TransferMatrix | None, cfg: EqualizerConfig | None = None,
                  frame: MdmFrame | None = None) -> EqualizerResult:
    """Equalize the retrieved (CD-free) fields into ``K`` symbol streams.

    The fields are band-limited by :func:`receive_filter`, decimated to one
    sample per symbol at the maximum-energy phase over the training
    sequence (whole record if ``frame`` is None) and then filtered by a
    symbol-spaced ``K x K`` equalizer applied per DFT bin:

    * ``zero_forcing_from_h``: ``W = G^-1`` with ``G`` the aliased
      (folded) symbol-rate response of ``h`` and the pulse;
    * ``mmse_from_h``: ``W = G^H (G G^H + noise_loading I)^-1``;
    * ``data_aided_ls``: taps fitted by least squares on the TS and pilot
      symbols of ``frame`` (``h`` unused).

    The pulse is part of ``G``, so the output symbols come out on the
    constellation scale.
    """
    cfg = EqualizerConfig() if cfg is None else cfg
    grid = fields.grid
    sps = grid.samples_per_symbol
    N = grid.n_samples
    ns = N // sps
    x = np.atleast_2d(fields.samples)
    K = x.shape[0]
    R = receive_filter(grid, cfg.rolloff, cfg.pulse)
    X = np.fft.fft(x, axis=-1) * R
    xf = np.fft.ifft(X, axis=-1)
    ts_region = None
    if frame is not None and frame.spec.ts_length:
        ts_region = slice(frame.spec.ts_start * sps, frame.spec.payload_start * sps)
    phase = decimation_phase(xf, sps, ts_region)
    y = xf[:, phase::sps][:, :ns]
    Y = np.fft.fft(y, axis=-1)

    if cfg.mode == "data_aided_ls":
        if frame is None:
            raise ValueError("data_aided_ls needs the frame (known TS and pilot symbols)")
        W = _data_aided_taps(y, frame, cfg)
        w = np.fft.ifft(W, axis=-1)
    else:
        if h is None:
            raise ValueError(f"{cfg.mode} needs a transfer matrix")
        if h.K != K:
            raise ValueError(f"h is {h.K}x{h.K} but the fields have {K} tributaries")
        if cfg.n_taps is not None:
            memory = int(np.ceil((np.max(np.abs(h.delays())) + 1) / sps))
            if cfg.n_taps < memory:
                raise ValueError(f"n_taps={cfg.n_taps} is shorter than the channel memory ({memory} symbols)")
        P = pulse_spectrum(grid, cfg.rolloff, cfg.pulse) * R
        Hp = h.frequency_response() * P[None, None, :]
        # decimating at ``phase`` samples: time shift by -phase before folding
        Hp = Hp * np.exp(2j * np.pi * np.fft.fftfreq(N) * phase)[None, None, :]
        G = np.moveaxis(_fold(Hp, sps), -1, 0)  # (ns, K, K)
        eye = np.eye(K)
        if cfg.mode == "zero_forcing_from_h":
            A = G + cfg.regularization * eye if cfg.regularization else G
            cond = np.linalg.cond(A)
            bad = np.nonzero(~np.isfinite(cond) | (cond > 1e12))[0]
            if bad.size:
                raise np.linalg.LinAlgError(
                    f"channel response is singular at symbol-rate bin {int(bad[0])}; "
                    "set regularization > 0 or use MMSE"
                )
            Winv = np.linalg.inv(A)
        else:
            Gh = np.conj(np.swapaxes(G, 1, 2))
            Winv = Gh @ np.linalg.inv(G @ Gh + cfg.noise_loading * eye)
        W = np.moveaxis(Winv, 0, -1)  # (K, K, ns)
        w = _truncate_taps(W, cfg.n_taps)
        if cfg.n_taps is not None:
            W = np.fft.fft(w, axis=-1)
    Z = np.einsum("ijn,jn->in", W, Y)
    z = np.fft.ifft(Z, axis=-1)
    return EqualizerResult(z, w, phase)


def _data_aided_taps(y: np.ndarray, frame: MdmFrame, cfg: EqualizerConfig) -> np.ndarray:
    """Per-bin response of LS-trained symbol-spaced taps ``W`` with ``W y = a``
    on the known symbols."""
    K, ns = y.shape
    L = cfg.n_taps if cfg.n_taps is not None else 15
    t0 = L // 2
    known = np.zeros(ns, dtype=bool)
    known[frame.ts_slice] = True
    known[frame.pilot_positions.ravel()] = True
    rows = np.nonzero(known)[0]
    rows = rows[(rows >= t0) & (rows < ns - (L - t0))]
    if rows.size < K * L:
        raise ValueError(f"{rows.size} known symbols cannot train {K * L} taps per output")
    d = np.arange(L) - t0
    X = y[:, (rows[:, None] - d[None, :]) % ns]
    X = np.transpose(X, (1, 0, 2)).reshape(rows.size, K * L)
    target = frame.symbols[:, rows].T
    G = X.conj().T @ X
    G = G + cfg.ls_ridge * np.real(np.trace(G)) / G.shape[0] * np.eye(G.shape[0])
    c = np.linalg.solve(G, X.conj().T @ target).T.reshape(K, K, L)
    w = np.zeros((K, K, ns), dtype=complex)
    w[:, :, d % ns] = c
    return np.fft.fft(w, axis=-1)


def demap_qpsk(symbols) -> np.ndarray:
    """Hard QPSK decisions; ties (a zero component) resolve to the ``+`` half-plane.

    ``(n,)`` symbols give ``2n`` bits, ``(K, n)`` give ``(K, 2n)``.
    """
    return qpsk_gray_bits(np.asarray(symbols))


@dataclass(frozen=True)
class BerReport:
    per_tributary: tuple
    errors: tuple
    bits: tuple
    mean: float
    variance: float
    pilot_percentage: float | None = None

    @property
    def total_bits(self) -> int:
        return int(sum(self.bits))

    def to_json(self) -> str:
        d = asdict(self)
        d["per_tributary"] = list(d["per_tributary"])
        d["errors"] = list(d["errors"])
        d["bits"] = list(d["bits"])
        return json.dumps(d, indent=2, sort_keys=True)

    def write(self, path) -> Path:
        p = Path(path)
        p.write_text(self.to_json() + "\n")
        return p

    @classmethod
    def from_json(cls, text: str) -> "BerReport":
        d = json.loads(text)
        return cls(tuple(d["per_tributary"]), tuple(d["errors"]), tuple(d["bits"]), d["mean"],
                   d["variance"], d.get("pilot_percentage"))


def compute_ber(rx_bits, tx_bits, exclude=None, pilot_percentage: float | None = None) -> BerReport:
    """Bit-error rate per tributary.

    ``rx_bits`` and ``tx_bits`` are ``(K, n)`` (or ``(n,)``) arrays;
    ``exclude`` is a boolean mask over bit positions (``(n,)`` or ``(K, n)``)
    marking bits left out of the count, e.g. TS and pilots.
    """
    rx = np.atleast_2d(np.asarray(rx_bits)).astype(np.uint8)
    tx = np.atleast_2d(np.asarray(tx_bits)).astype(np.uint8)
    if rx.shape != tx.shape:
        raise ValueError(f"bit arrays differ in shape: {rx.shape} vs {tx.shape}")
    keep = np.ones(rx.shape, dtype=bool)
    if exclude is not None:
        keep &= ~np.broadcast_to(np.asarray(exclude, dtype=bool), rx.shape)
    errs = np.sum((rx != tx) & keep, axis=1)
    nbits = np.sum(keep, axis=1)
    if np.any(nbits == 0):
        raise ValueError("no bits left after exclusion")
    ber = errs / nbits
    return BerReport(tuple(float(b) for b in ber), tuple(int(e) for e in errs),
                     tuple(int(n) for n in nbits), float(np.mean(ber)), float(np.var(ber)),
                     pilot_percentage)


def export_constellation(symbols, path) -> Path:
    """Write ``re,im,tributary`` rows (full float repr, lossless)."""
    s = np.asarray(symbols, dtype=complex)
    if s.ndim == 1:
        s = s[None, :]
    p = Path(path)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "tributary"])
        for k, row in enumerate(s):
            for v in row:
                w.writerow([repr(float(v.real)), repr(float(v.imag)), k])
    return p


def read_constellation(path) -> np.ndarray:
    """Inverse of :func:`export_constellation`, shape ``(K, n)``."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros((0, 0), dtype=complex)
    K = max(int(r["tributary"]) for r in rows) + 1
    out = [[] for _ in range(K)]
    for r in rows:
        out[int(r["tributary"])].append(complex(float(r["re"]), float(r["im"])))
    return np.array(out, dtype=complex)
