"""Transfer-matrix reconstruction from intensity-only captures of the training sequence.

The estimator alternates two steps over the training sequence (TS):

1. predict the receiver-side field at a subset of TS symbol instants by
   passing the known TS through the current estimate ``h_ei`` and retrieve
   the full field of every tributary with those samples as pilots;
2. refit ``h`` by least squares between the retrieved fields and the
   time-aligned transmitted TS waveform.

It returns the final matrix and the MDL of every iterate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.constants import speed_of_light

from .channel import TransferMatrix, mdl_of, random_unitary
from .frontend import IntensityCapture
from .retrieval import RetrievalOptions, retrieve
from .sigcore import DispersionOperator, SignalGrid, Waveform, seeded_rng
from .txgen import MdmFrame, pulse_shape

__all__ = [
    "EstimatorOptions",
    "EstimationResult",
    "DispersionSplit",
    "IdentifiabilityError",
    "DivergenceError",
    "ls_channel_fit",
    "time_align",
    "estimate_transfer_matrix",
    "split_dispersion",
    "propagate_pilots",
    "pilot_leakage",
    "leakage_map",
    "export_mdl_history",
    "export_tap_heatmap",
]


class IdentifiabilityError(ValueError):
    """Training data cannot determine the requested number of taps."""


class DivergenceError(RuntimeError):
    """The outer estimation loop kept getting worse."""


def _fit_rows(rows, N):
    return np.asarray(rows, dtype=int) % N


def ls_channel_fit(rx_fields, tx, tap_length: int, ridge: float = 0.0, rows=None,
                   t0: int | None = None, grid: SignalGrid | None = None,
                   label: str = "estimate") -> TransferMatrix:
    """Least-squares fit of ``rx_i = sum_j h_ij (*) tx_j`` over ``rows``.

    Parameters
    ----------
    rx_fields, tx : Waveform or ndarray, shape (K, N)
        Received fields and the time-aligned transmitted waveform.
    tap_length : int
        Taps per matrix entry (sample spaced), centered on ``t0``
        (default ``tap_length // 2``).
    ridge : float
        Tikhonov weight, relative to the mean diagonal of the normal matrix.
    rows : array of int, optional
        Sample indices entering the fit (default: all).
    """
    rx = np.atleast_2d(rx_fields.samples if isinstance(rx_fields, Waveform) else rx_fields)
    txs = np.atleast_2d(tx.samples if isinstance(tx, Waveform) else tx)
    if grid is None:
        grid = rx_fields.grid if isinstance(rx_fields, Waveform) else tx.grid
    K_out, N = rx.shape
    K_in = txs.shape[0]
    L = int(tap_length)
    t0 = L // 2 if t0 is None else int(t0)
    rows = np.arange(N) if rows is None else _fit_rows(rows, N)
    n_unknown = K_in * L
    if rows.size < n_unknown:
        raise IdentifiabilityError(
            f"{rows.size} fit samples cannot identify {n_unknown} taps per output "
            f"(K={K_in}, L={L}); lengthen the training sequence or shorten L"
        )
    delays = np.arange(L) - t0
    # X[r, j*L + m] = tx_j[row_r - delay_m]
    X = txs[:, (rows[:, None] - delays[None, :]) % N]  # (K_in, R, L)
    X = np.transpose(X, (1, 0, 2)).reshape(rows.size, n_unknown)
    Y = rx[:, rows].T  # (R, K_out)
    G = X.conj().T @ X
    b = X.conj().T @ Y
    if ridge > 0:
        G = G + ridge * np.real(np.trace(G)) / n_unknown * np.eye(n_unknown)
    else:
        rank = np.linalg.matrix_rank(G, tol=np.finfo(float).eps * n_unknown * np.abs(G).max())
        if rank < n_unknown:
            raise IdentifiabilityError(
                f"training matrix has rank {rank} < {n_unknown}; use ridge > 0 or a richer TS"
            )
    coeffs = np.linalg.solve(G, b)  # (K_in*L, K_out)
    taps = coeffs.T.reshape(K_out, K_in, L)
    return TransferMatrix(taps, grid, t0, label)


def time_align(capture: IntensityCapture, tx_intensity, max_lag: int | None = None) -> np.ndarray:
    """Per-tributary integer lag maximizing the normalized cross-correlation
    between the measured direct intensity and the channel-free TS intensity.

    A positive lag means the capture is delayed relative to ``tx_intensity``.
    """
    meas = np.atleast_2d(capture.direct).astype(float)
    ref = np.atleast_2d(np.asarray(tx_intensity, dtype=float))
    if ref.shape[0] == 1 and meas.shape[0] > 1:
        ref = np.repeat(ref, meas.shape[0], axis=0)
    N = meas.shape[-1]
    lags = np.zeros(meas.shape[0], dtype=int)
    for k in range(meas.shape[0]):
        a = meas[k] - meas[k].mean()
        r = ref[k] - ref[k].mean()
        denom = np.linalg.norm(a) * np.linalg.norm(r)
        if denom == 0:
            continue
        xc = np.real(np.fft.ifft(np.fft.fft(a) * np.conj(np.fft.fft(r)))) / denom
        if max_lag is not None:
            allowed = np.zeros(N, dtype=bool)
            allowed[: max_lag + 1] = True
            allowed[N - max_lag :] = True
            xc = np.where(allowed, xc, -np.inf)
        lag = int(np.argmax(xc))
        lags[k] = lag - N if lag > N // 2 else lag
    return lags


@dataclass
class EstimatorOptions:
    """Settings of the outer estimation loop.

    ``ts_pilot_fraction`` is the share of TS symbol instants whose predicted
    receiver-side field is imposed during each inner retrieval.
    """

    n_outer_iterations: int = 15
    initial_matrix: str | np.ndarray = "unitary"
    ls_regularization: float = 1e-6
    tap_length: int = 32
    ts_pilot_fraction: float = 0.34
    fit_margin: int = 64  # samples dropped at both TS edges in the fit
    retrieval: RetrievalOptions = field(
        default_factory=lambda: RetrievalOptions(max_iterations=200, escape_period=100,
                                                 escape_strength=3.0, stall_ratio=0.99)
    )
    abort_on_divergence: bool = True
    divergence_tolerance: float = 0.1  # relative growth below this counts as noise
    convergence_tolerance: float = 1e-2  # relative change of h in the last iteration
    seed: int = 0

    def __post_init__(self):
        if self.n_outer_iterations < 1 or self.tap_length < 1:
            raise ValueError("n_outer_iterations and tap_length must be >= 1")
        if not 0 < self.ts_pilot_fraction <= 1:
            raise ValueError("ts_pilot_fraction must lie in (0, 1]")
        if self.ls_regularization < 0:
            raise ValueError("ls_regularization must be >= 0")


@dataclass(eq=False)
class EstimationResult:
    """Final matrix plus per-iteration diagnostics.

    ``mdl_history`` has ``n_outer_iterations + 1`` entries (initial matrix
    first); ``fit_residuals`` and ``h_changes`` one per iteration.
    """

    h: TransferMatrix
    mdl_history: np.ndarray
    fit_residuals: np.ndarray
    h_changes: np.ndarray
    converged: bool
    iterates: list = field(default_factory=list, repr=False)
    retrieved: np.ndarray | None = field(default=None, repr=False)

    def __iter__(self):
        # allows ``h, mdl_history = estimate_transfer_matrix(...)``
        return iter((self.h, self.mdl_history))


def _initial_matrix(opts: EstimatorOptions, K: int, grid: SignalGrid) -> TransferMatrix:
    init = opts.initial_matrix
    if isinstance(init, str):
        if init == "identity":
            m = np.eye(K, dtype=complex)
        elif init == "unitary":
            m = random_unitary(K, seeded_rng(opts.seed, "initial-unitary"))
        else:
            raise ValueError(f"unknown initial_matrix {init!r}")
        return TransferMatrix(m[:, :, None], grid, 0, "estimate")
    if isinstance(init, TransferMatrix):
        return init
    m = np.asarray(init, dtype=complex)
    return TransferMatrix(m if m.ndim == 3 else m[:, :, None], grid, 0, "estimate")


def _apply(h: TransferMatrix, x: np.ndarray) -> np.ndarray:
    return np.fft.ifft(np.einsum("ijn,jn->in", h.frequency_response(), np.fft.fft(x, axis=-1)), axis=-1)


def estimate_transfer_matrix(capture: IntensityCapture, frame: MdmFrame,
                             opts: EstimatorOptions | None = None, rolloff: float = 0.1,
                             pulse: str = "rc") -> EstimationResult:
    """Iterate TS retrieval and least-squares fitting, starting from a unitary matrix.

    The capture must be time-aligned with ``frame`` (see :func:`time_align`).
    ``mdl_history[i]`` is the MDL of the i-th iterate, the first entry being
    the initial matrix.
    """
    opts = EstimatorOptions() if opts is None else opts
    grid = capture.grid
    K = frame.n_tributaries
    N = grid.n_samples
    sps = grid.samples_per_symbol
    spec = frame.spec
    if spec.ts_length < K * int(np.ceil(opts.tap_length / sps)):
        raise IdentifiabilityError(
            f"TS of {spec.ts_length} symbols is too short for K={K} x {opts.tap_length} taps"
        )

    ts_only = np.zeros_like(frame.symbols)
    ts_only[:, frame.ts_slice] = frame.ts_symbols
    tx_ts = pulse_shape(ts_only, grid, rolloff, pulse).samples

    ts0, ts1 = spec.ts_start * sps, spec.payload_start * sps
    region = (ts0, ts1)
    margin = opts.fit_margin
    rows = np.arange(ts0 + margin, ts1 - margin)
    step = max(1, int(round(1 / opts.ts_pilot_fraction)))
    pilot_syms = np.arange(spec.ts_start, spec.payload_start)[::step]
    pilot_pos = pilot_syms * sps
    keep = (pilot_pos >= ts0 + margin) & (pilot_pos < ts1 - margin)
    pilot_pos = pilot_pos[keep]

    h = _initial_matrix(opts, K, grid)
    random_start = isinstance(opts.initial_matrix, str) and opts.initial_matrix == "unitary"
    # a unitary start has no MDL by construction; skip the rounding of the SVD
    mdl_hist = [0.0 if random_start else mdl_of(h)]
    fit_res = []
    changes = []
    iterates = [h]
    retrieved = np.zeros((K, N), dtype=complex)
    worse = 0
    for it in range(opts.n_outer_iterations):
        # receiver field predicted by the current estimate (CD-free domain)
        pred = _apply(h, tx_ts)
        for k in range(K):
            ropts = replace(opts.retrieval, pilot_positions=pilot_pos,
                            pilot_values=pred[k, pilot_pos], seed=opts.seed * 131 + it * 7 + k)
            res = retrieve(capture, k, ropts, region=region,
                           initial_field=pred[k] if it or not random_start else None)
            retrieved[k] = res.field.samples
        h_new = ls_channel_fit(retrieved, tx_ts, opts.tap_length, opts.ls_regularization, rows,
                               grid=grid, label="estimate")
        model = _apply(h_new, tx_ts)[:, rows]
        r = float(np.sum(np.abs(model - retrieved[:, rows]) ** 2) / np.sum(np.abs(retrieved[:, rows]) ** 2))
        if fit_res and r > fit_res[-1] * (1 + opts.divergence_tolerance):
            worse += 1
        else:
            worse = 0
        fit_res.append(r)
        changes.append(_relative_change(h, h_new))
        h = h_new
        iterates.append(h)
        mdl_hist.append(mdl_of(h))
        if worse >= 3 and opts.abort_on_divergence:
            raise DivergenceError(
                f"fit residual grew for 3 consecutive iterations "
                f"(iteration {it + 1}): {[f'{v:.3e}' for v in fit_res[-4:]]}; "
                f"MDL history so far {[round(v, 3) for v in mdl_hist]}"
            )
    h = TransferMatrix(h.taps, grid, h.t0, "final")
    converged = bool(changes[-1] < opts.convergence_tolerance)
    return EstimationResult(h, np.asarray(mdl_hist), np.asarray(fit_res), np.asarray(changes),
                            converged, iterates, retrieved)


def _relative_change(a: TransferMatrix, b: TransferMatrix) -> float:
    """In-band ``||B - A|| / ||B||`` of the frequency responses."""
    band = b.grid.band_mask(0.1)
    Ha = a.frequency_response()[:, :, band]
    Hb = b.frequency_response()[:, :, band]
    nb = np.linalg.norm(Hb)
    return float(np.linalg.norm(Hb - Ha) / nb) if nb > 0 else float("inf")


@dataclass(eq=False)
class DispersionSplit:
    """``h = h_cd (*) h_md``: a common CD operator and the modal remainder."""

    h_cd: DispersionOperator
    h_md: TransferMatrix


def split_dispersion(h: TransferMatrix, rolloff: float = 0.1, known_cd: float | None = None,
                     tap_length: int | None = None) -> DispersionSplit:
    """Separate the common quadratic spectral phase from ``h``.

    The common phase is taken from ``det(H(w))``, whose phase is ``K`` times
    the phase any common all-pass factor contributes. A regression of the
    unwrapped phase on ``[1, w, w**2]`` over the flat part of the band,
    weighted by ``|det H|**(1/K)``, gives the CD. ``known_cd`` bypasses the
    fit. The modal part keeps everything else, so recomposition is exact
    up to the tap window of ``h_md``.
    """
    grid = h.grid
    H = h.frequency_response()
    K = h.K
    if known_cd is None:
        w = grid.angular_frequencies()
        f = grid.frequencies()
        flat = np.abs(f) <= (1 - rolloff) * grid.symbol_rate / 2
        order = np.argsort(w[flat])
        wb = w[flat][order]
        det = np.linalg.det(np.moveaxis(H[:, :, flat], -1, 0))[order]
        ph = np.unwrap(np.angle(det)) / K
        wt = np.abs(det) ** (1.0 / K)
        scale = np.max(np.abs(wb))
        u = wb / scale  # keep the regression well conditioned
        A = np.stack([np.ones_like(u), u, u**2], axis=1) * wt[:, None]
        coef, *_ = np.linalg.lstsq(A, ph * wt, rcond=None)
        beta2 = -2 * coef[2] / scale**2
        cd = -beta2 * 2 * np.pi * speed_of_light / grid.center_wavelength**2 * 1e3
    else:
        cd = float(known_cd)
    op = DispersionOperator(cd, grid.center_wavelength)
    H_md = H * np.conj(op.transfer(grid))[None, None, :]
    L = h.L if tap_length is None else tap_length
    h_md = TransferMatrix.from_frequency_response(H_md, grid, L if L < grid.n_samples else None,
                                                  label=h.label)
    return DispersionSplit(op, h_md)


def _symbol_energy_response(h_md: TransferMatrix, rolloff: float, pulse: str) -> np.ndarray:
    """``e[i, n]``: energy at output ``i``, lag ``n``, of a unit symbol sent on every input."""
    grid = h_md.grid
    one = np.zeros(grid.n_symbols, dtype=complex)
    one[0] = 1
    p = pulse_shape(one, grid, rolloff, pulse).samples
    g = np.fft.ifft(h_md.frequency_response() * np.fft.fft(p)[None, None, :], axis=-1)
    return np.sum(np.abs(g) ** 2, axis=1)


def leakage_map(h_md: TransferMatrix, known_symbols: np.ndarray, rolloff: float = 0.1,
                pulse: str = "rc") -> np.ndarray:
    """Share of the receiver-side energy at every sample that comes from
    symbols outside ``known_symbols`` (boolean, one entry per symbol slot),
    shape ``(K, N)``.

    Every symbol slot is weighted as if it carried unit power, so the map
    depends on the channel and the frame layout only.
    """
    grid = h_md.grid
    sps = grid.samples_per_symbol
    e = _symbol_energy_response(h_md, rolloff, pulse)
    unknown = np.zeros(grid.n_samples)
    unknown[::sps] = ~np.asarray(known_symbols, dtype=bool)
    comb = np.zeros(grid.n_samples)
    comb[::sps] = 1.0
    E = np.fft.fft(e, axis=-1)
    part = np.real(np.fft.ifft(E * np.fft.fft(unknown)[None, :], axis=-1))
    total = np.real(np.fft.ifft(E * np.fft.fft(comb)[None, :], axis=-1))
    return np.clip(part, 0, None) / np.maximum(total, 1e-300)


def _known_mask(frame: MdmFrame, with_pilots: bool, with_ts: bool) -> np.ndarray:
    spec = frame.spec
    known = np.zeros(spec.n_symbols, dtype=bool)
    if with_pilots:
        known[frame.pilot_positions.ravel()] = True
    if with_ts:
        known[:] = True
        known[frame.payload_slice] = False
        if with_pilots:
            known[frame.pilot_positions.ravel()] = True
    return known


def _group_offsets(h_md: TransferMatrix, M: int, rolloff: float, pulse: str) -> np.ndarray:
    """Sample offsets, relative to a group's first symbol instant, that the
    group reaches at the receiver: its ``M`` symbol slots widened by the
    delay spread of ``h_md`` (lags holding more than 1e-3 of the peak
    energy)."""
    grid = h_md.grid
    N, sps = grid.n_samples, grid.samples_per_symbol
    e = _symbol_energy_response(h_md, rolloff, pulse).sum(axis=0)
    lags = np.fft.fftfreq(N, 1.0 / N).astype(int)
    sig = (e > 1e-3 * e.max()) & (np.abs(lags) < N // 4)
    dmin, dmax = int(lags[sig].min()), int(lags[sig].max())
    return np.arange(min(dmin, 0), (M - 1) * sps + max(dmax, 0) + 1)


def pilot_leakage(h_md: TransferMatrix, frame: MdmFrame, rolloff: float = 0.1,
                  pulse: str = "rc", offsets=None) -> np.ndarray:
    """Leakage of unknown symbols at every sample offset of every pilot
    group, shape ``(K, n_groups, len(offsets))``.

    Only the pilots themselves count as known here (the group-local view).
    ``offsets`` default to the group's receiver-side reach (see
    :func:`_group_offsets`).
    """
    sps = h_md.grid.samples_per_symbol
    N = h_md.grid.n_samples
    if offsets is None:
        offsets = _group_offsets(h_md, frame.spec.pilot_group_size, rolloff, pulse)
    lm = leakage_map(h_md, _known_mask(frame, True, False), rolloff, pulse)
    idx = (frame.pilot_positions[:, 0][:, None] * sps + np.asarray(offsets)[None, :]) % N
    return lm[:, idx]


def propagate_pilots(frame: MdmFrame, split: DispersionSplit, M: int | None = None,
                     rolloff: float = 0.1, pulse: str = "rc", max_leakage: float = 1e-3,
                     include_ts: bool = True):
    """Receiver-side pilot samples for payload retrieval.

    Every group of ``M`` pilot symbols (all tributaries) is pulse shaped,
    passed through ``h_md`` only and read back at the receiver-side
    positions the group reaches (its slots widened by the delay spread of
    ``h_md``) where symbols outside the group leak less than
    ``max_leakage`` of the energy; the least leaky position is kept in any
    case. With ``include_ts`` the training sequence and the (zero) guard
    symbols count as known too, and every sample outside the payload whose
    leakage from payload data stays below ``max_leakage`` is added.

    Returns ``(positions, values)`` with ``values`` of shape ``(K, P)``.
    """
    spec = frame.spec
    M = spec.pilot_group_size if M is None else int(M)
    if M != spec.pilot_group_size:
        raise ValueError(f"M={M} does not match the frame's pilot groups ({spec.pilot_group_size})")
    h_md = split.h_md
    grid = h_md.grid
    N, sps = grid.n_samples, grid.samples_per_symbol

    offsets = _group_offsets(h_md, M, rolloff, pulse)
    worst = np.max(pilot_leakage(h_md, frame, rolloff, pulse, offsets), axis=(0, 1))
    chosen = offsets[worst < max_leakage]
    if chosen.size == 0:
        chosen = offsets[[int(np.argmin(worst))]]
    starts = frame.pilot_positions[:, 0] * sps
    positions = ((starts[:, None] + chosen[None, :]) % N).ravel()

    known = _known_mask(frame, True, include_ts)
    # groups are far apart compared with the channel memory, so one
    # propagation of all known symbols equals propagating each group alone
    # at the selected positions
    src = np.where(known[None, :], frame.symbols, 0)
    rx = _apply(h_md, pulse_shape(src, grid, rolloff, pulse).samples)
    if include_ts:
        lm = np.max(leakage_map(h_md, known, rolloff, pulse), axis=0)
        outside = np.ones(N, dtype=bool)
        outside[spec.payload_start * sps : spec.payload_stop * sps] = False
        extra = np.nonzero(outside & (lm < max_leakage))[0]
        positions = np.union1d(positions, extra)
    positions = np.unique(positions)
    return positions, rx[:, positions]


def export_mdl_history(mdl_history, path, fit_residuals=None) -> Path:
    """CSV ``iteration, mdl_db[, fit_residual]``; iteration 0 is the initial matrix."""
    p = Path(path)
    res = None if fit_residuals is None else np.asarray(fit_residuals)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "mdl_db"] + ([] if res is None else ["fit_residual"]))
        for i, v in enumerate(mdl_history):
            row = [i, repr(float(v))]
            if res is not None:
                row.append("" if i == 0 else repr(float(res[i - 1])))
            w.writerow(row)
    return p


def export_tap_heatmap(h: TransferMatrix, path) -> Path:
    """CSV ``output, input, energy, energy_db``: total tap energy of every matrix entry."""
    e = np.sum(np.abs(h.taps) ** 2, axis=-1)
    ref = e.max() if e.max() > 0 else 1.0
    p = Path(path)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["output", "input", "energy", "energy_db"])
        with np.errstate(divide="ignore"):
            for i in range(h.K):
                for j in range(h.K):
                    w.writerow([i, j, repr(float(e[i, j])), repr(float(10 * np.log10(e[i, j] / ref)))])
    return p
