"""Multimode fiber channel: mode coupling, group delays, CD, MDL and noise.

Tributary order for K=6 is ``[LP01x, LP01y, LP11a-x, LP11a-y, LP11b-x, LP11b-y]``.
A :class:`TransferMatrix` stores ``K x K`` sample-spaced impulse responses
with a delay origin ``t0``; tap ``m`` sits at delay ``m - t0`` samples and
is applied by circular convolution on the grid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .sigcore import SignalGrid, Waveform, dispersion_transfer, seeded_rng

__all__ = [
    "MODE_GROUPS",
    "TransferMatrix",
    "ChannelParams",
    "mode_groups",
    "synthesize_channel",
    "apply_channel",
    "add_noise",
    "mdl_of",
    "impulse_response",
    "random_unitary",
    "export_impulse_response_csv",
]

MODE_GROUPS = {"LP01": (0, 1), "LP11": (2, 3, 4, 5)}


def mode_groups(K: int) -> dict[str, tuple[int, ...]]:
    """Mode-group membership; six tributaries map onto LP01/LP11."""
    if K == 6:
        return dict(MODE_GROUPS)
    return {"all": tuple(range(K))}


@dataclass(eq=False)
class TransferMatrix:
    """K x K matrix of impulse responses.

    Parameters
    ----------
    taps : ndarray, shape (K, K, L)
        ``taps[i, j]`` maps input tributary ``j`` to output ``i``.
    grid : SignalGrid
    t0 : int
        Index of the zero-delay tap.
    label : str
        ``"true_channel"``, ``"estimate"`` or ``"final"``.
    """

    taps: np.ndarray
    grid: SignalGrid
    t0: int = 0
    label: str = "true_channel"
    _response: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.taps, dtype=complex)
        if t.ndim == 2:
            t = t[:, :, None]
        if t.ndim != 3 or t.shape[0] != t.shape[1]:
            raise ValueError(f"taps must have shape (K, K, L), got {t.shape}")
        if t.shape[2] < 1 or t.shape[2] > self.grid.n_samples:
            raise ValueError("tap length must lie in [1, n_samples]")
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite taps")
        if not 0 <= self.t0 < t.shape[2]:
            raise ValueError("t0 must index a tap")
        self.taps = t

    @property
    def K(self) -> int:
        return self.taps.shape[0]

    @property
    def L(self) -> int:
        return self.taps.shape[2]

    def delays(self) -> np.ndarray:
        """Tap delays in samples."""
        return np.arange(self.L) - self.t0

    def circular_taps(self) -> np.ndarray:
        """Taps scattered onto the full circular grid, shape (K, K, N)."""
        N = self.grid.n_samples
        h = np.zeros((self.K, self.K, N), dtype=complex)
        np.add.at(h, (slice(None), slice(None), self.delays() % N), self.taps)
        return h

    def frequency_response(self) -> np.ndarray:
        """``H[i, j, k]`` on the grid's DFT bins (cached)."""
        if self._response is None:
            self._response = np.fft.fft(self.circular_taps(), axis=-1)
        return self._response

    @classmethod
    def from_frequency_response(cls, H: np.ndarray, grid: SignalGrid, tap_length: int | None = None,
                                t0: int | None = None, label: str = "true_channel") -> "TransferMatrix":
        """Build from a sampled response; optionally window to ``tap_length`` taps."""
        N = grid.n_samples
        h = np.fft.ifft(H, axis=-1)
        L = N if tap_length is None else int(tap_length)
        t0 = L // 2 if t0 is None else int(t0)
        idx = (np.arange(L) - t0) % N
        tm = cls(h[:, :, idx], grid, t0, label)
        if L == N:
            tm._response = np.asarray(H, dtype=complex)
        return tm

    def identity_like(self) -> "TransferMatrix":
        return TransferMatrix(np.eye(self.K, dtype=complex)[:, :, None], self.grid, 0, self.label)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR with phase correction."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


@dataclass(frozen=True)
class ChannelParams:
    """Parameters of the synthetic span.

    Delays are in seconds. ``group_delay`` is the LP11-minus-LP01 delay of
    each section; with ``dgd_compensated`` the sections alternate sign so
    the net inter-group delay cancels. ``intra_group_dgd`` is an
    LP11a-minus-LP11b delay applied in the first section only (not
    compensated).
    """

    n_sections: int = 2
    group_delay: float = 0.0
    dgd_compensated: bool = True
    intra_group_dgd: float = 0.0
    intra_group_coupling: float = 0.0
    inter_group_coupling_db: float = -np.inf
    mdl_db: float = 0.0
    cd_psnm: float = 0.0
    snr_db: float = np.inf
    seed: int = 0
    tap_length: int | None = None

    def __post_init__(self):
        if self.n_sections < 1:
            raise ValueError("n_sections must be >= 1")
        if self.dgd_compensated and self.n_sections % 2 and self.group_delay != 0:
            raise ValueError("a DGD-compensated span needs an even number of sections")
        if not 0 <= self.intra_group_coupling <= 1:
            raise ValueError("intra_group_coupling must lie in [0, 1]")
        if self.inter_group_coupling_db > 0:
            raise ValueError("inter_group_coupling_db must be <= 0")
        if self.mdl_db < 0:
            raise ValueError("mdl_db must be >= 0")

    def section_delays(self) -> np.ndarray:
        signs = [(-1) ** s if self.dgd_compensated else 1 for s in range(self.n_sections)]
        return self.group_delay * np.asarray(signs, dtype=float)


def _coupler(K: int, groups: dict, intra: float, inter_db: float, rng) -> np.ndarray:
    """Unitary ``expm(1j*A)``; A has intra-group entries scaled by ``intra`` and
    inter-group entries of amplitude set by ``inter_db``."""
    g_of = np.empty(K, dtype=int)
    for gi, members in enumerate(groups.values()):
        g_of[list(members)] = gi
    same = g_of[:, None] == g_of[None, :]
    z = (rng.standard_normal((K, K)) + 1j * rng.standard_normal((K, K))) / np.sqrt(2)
    a = (z + z.conj().T) / 2
    inter_amp = 0.0 if np.isneginf(inter_db) else 10 ** (inter_db / 20)
    scale = np.where(same, intra * np.pi / 2, inter_amp)
    return expm(1j * a * scale)


def _mdl_stage(K: int, groups: dict, mdl_db: float, rng) -> np.ndarray:
    """Constant matrix with singular values spread evenly (in dB) over ``mdl_db``,
    unit mean power, and group-preserving singular vectors."""
    sv_db = np.linspace(mdl_db / 2, -mdl_db / 2, K)
    sv = 10 ** (sv_db / 20)
    sv = sv / np.sqrt(np.mean(sv**2))
    rng.shuffle(sv)
    B = np.zeros((K, K), dtype=complex)
    for members in groups.values():
        m = list(members)
        B[np.ix_(m, m)] = random_unitary(len(m), rng)
    return B @ np.diag(sv) @ B.conj().T


def synthesize_channel(params: ChannelParams, grid: SignalGrid, K: int = 6) -> TransferMatrix:
    """Build the span response ``H(w) = CD(w) * A * C_n D_n(w) ... C_1 D_1(w) C_0``.

    ``C_0`` and ``C_n`` model the (de)multiplexers and carry inter-group
    crosstalk; couplers between sections mix within groups only. ``D_s`` are
    diagonal delay stages and ``A`` the MDL stage.
    """
    groups = mode_groups(K)
    rng = seeded_rng(params.seed, "channel")
    w = grid.angular_frequencies()
    N = grid.n_samples

    delays = np.zeros((params.n_sections, K))
    lp11 = list(groups.get("LP11", ()))
    for s, gd in enumerate(params.section_delays()):
        delays[s, lp11] = gd
    if lp11 and params.intra_group_dgd:
        half = len(lp11) // 2
        delays[0, lp11[:half]] += params.intra_group_dgd / 2
        delays[0, lp11[half:]] -= params.intra_group_dgd / 2

    if params.tap_length is not None:
        reach = np.max(np.abs(np.cumsum(delays, axis=0))) * grid.sample_rate
        if reach > params.tap_length // 2:
            raise ValueError(
                f"channel delays reach {reach:.1f} samples, beyond the {params.tap_length}-tap window"
            )

    H = np.broadcast_to(
        _coupler(K, groups, params.intra_group_coupling, params.inter_group_coupling_db, rng)[:, :, None],
        (K, K, N),
    ).copy()
    for s in range(params.n_sections):
        phase = np.exp(-1j * delays[s][:, None] * w[None, :])  # (K, N)
        H = phase[:, None, :] * H
        last = s == params.n_sections - 1
        inter = params.inter_group_coupling_db if last else -np.inf
        C = _coupler(K, groups, params.intra_group_coupling, inter, rng)
        H = np.einsum("ab,bcn->acn", C, H)
    A = _mdl_stage(K, groups, params.mdl_db, rng)
    H = np.einsum("ab,bcn->acn", A, H)
    H = H * dispersion_transfer(params.cd_psnm, grid)[None, None, :]
    return TransferMatrix.from_frequency_response(H, grid, params.tap_length, label="true_channel")


def apply_channel(x: Waveform, h: TransferMatrix) -> Waveform:
    """``out_i = sum_j h_ij (*) x_j`` with circular convolution."""
    if x.grid != h.grid:
        raise ValueError("waveform and channel grids differ")
    s = np.atleast_2d(x.samples)
    if s.shape[0] != h.K:
        raise ValueError(f"waveform has {s.shape[0]} tributaries, channel expects {h.K}")
    X = np.fft.fft(s, axis=-1)
    Y = np.einsum("ijn,jn->in", h.frequency_response(), X)
    return Waveform(x.grid, np.fft.ifft(Y, axis=-1))


def add_noise(x: Waveform, snr_db: float, seed: int, signal_power: float | None = None) -> Waveform:
    """Add circular complex Gaussian noise at ``snr_db`` relative to the mean signal power.

    ``signal_power`` overrides the measured mean ``|x|**2`` (over all samples
    and tributaries).
    """
    if np.isposinf(snr_db):
        return Waveform(x.grid, x.samples.copy())
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite or +inf")
    p = float(np.mean(np.abs(x.samples) ** 2)) if signal_power is None else float(signal_power)
    sigma2 = p / 10 ** (snr_db / 10)
    rng = seeded_rng(seed, "noise")
    n = rng.standard_normal(x.samples.shape) + 1j * rng.standard_normal(x.samples.shape)
    return Waveform(x.grid, x.samples + np.sqrt(sigma2 / 2) * n)


def _response_and_band(h, band):
    if isinstance(h, TransferMatrix):
        H = h.frequency_response()
        if band is None:
            band = h.grid.band_mask(0.1)
        return H[:, :, band]
    m = np.asarray(h, dtype=complex)
    if m.ndim == 2:
        return m[:, :, None]
    return m


def mdl_of(h, mode: str = "average", band: np.ndarray | None = None) -> float:
    """Mode-dependent loss in dB, ``10*log10(s_max**2 / s_min**2)``.

    ``mode="average"`` takes the singular values of the frequency-flattened
    matrix (eigenvalues of the in-band mean of ``H^H H``); ``mode="max"``
    reports the worst per-frequency MDL. ``h`` may be a
    :class:`TransferMatrix` or a plain ``K x K`` matrix. ``band`` selects
    the bins (default: the 0.1-rolloff signal band).
    """
    H = _response_and_band(h, band)
    if mode == "average":
        G = np.einsum("jin,jkn->ik", H.conj(), H) / H.shape[2]
        ev = np.linalg.eigvalsh(G)
        ev = np.clip(ev, 0, None)
        if ev[0] <= 0:
            return float("inf")
        return float(10 * np.log10(ev[-1] / ev[0]))
    if mode == "max":
        sv = np.linalg.svd(np.moveaxis(H, 2, 0), compute_uv=False)
        with np.errstate(divide="ignore"):
            return float(np.max(20 * np.log10(sv[:, 0] / sv[:, -1])))
    raise ValueError(f"unknown MDL mode {mode!r}")


def impulse_response(h: TransferMatrix, from_group, to_group, groups: dict | None = None):
    """Aggregate ``|h_ij(n)|**2`` over the named groups.

    Returns ``(delay, profile)`` with ``delay`` in symbol periods.
    """
    groups = mode_groups(h.K) if groups is None else groups
    src = list(groups[from_group]) if isinstance(from_group, str) else list(from_group)
    dst = list(groups[to_group]) if isinstance(to_group, str) else list(to_group)
    if not src or not dst or max(src + dst) >= h.K:
        raise ValueError("invalid group indices")
    profile = np.sum(np.abs(h.taps[np.ix_(dst, src)]) ** 2, axis=(0, 1))
    return h.delays() / h.grid.samples_per_symbol, profile


def export_impulse_response_csv(h: TransferMatrix, path, pairs=None, groups: dict | None = None) -> Path:
    """Write group-to-group impulse-response profiles as CSV.

    Columns: ``delay_symbols`` then one column per ``(from, to)`` pair named
    ``"<from>-><to>"`` holding the aggregated tap power. By default all
    ordered group pairs are written.
    """
    groups = mode_groups(h.K) if groups is None else groups
    if pairs is None:
        pairs = [(a, b) for a in groups for b in groups]
    delay = None
    cols = []
    for a, b in pairs:
        delay, prof = impulse_response(h, a, b, groups)
        cols.append(prof)
    p = Path(path)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay_symbols"] + [f"{a}->{b}" for a, b in pairs])
        for i, d in enumerate(delay):
            w.writerow([repr(float(d))] + [repr(float(c[i])) for c in cols])
    return p
