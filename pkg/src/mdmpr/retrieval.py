"""Phase retrieval from two intensity measurements linked by a dispersive element.

The field is constrained by

* the direct-path intensity,
* the dispersed-path intensity (after a known all-pass dispersion),
* a rectangular spectral support (the Nyquist band of the signal),
* known pilot samples.

``method="gs"`` runs the plain alternating-projection cycle of
:func:`gs_iterate`. ``method="raar"`` (default) uses the same projections
in relaxed averaged alternating reflections on the pair of measurement
domains, which escapes the stagnation plain alternation shows on long
random waveforms. In both methods the iterate is periodically perturbed
where the local intensity mismatch stays high (local-minimum escape).

Long records are cut into overlapping blocks. Each block is solved on its
own FFT grid with unconstrained buffer zones around it, so the circular
operators never wrap constrained samples onto each other; only the block
core is kept when stitching.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy.fft import next_fast_len

from .frontend import IntensityCapture
from .sigcore import DispersionOperator, Waveform, quadratic_phase, seeded_rng

__all__ = [
    "RetrievalOptions",
    "RetrievalResult",
    "project_intensity",
    "project_spectrum",
    "apply_pilot_constraint",
    "gs_iterate",
    "escape_local_minimum",
    "intensity_residual",
    "retrieve",
    "export_residual_history",
]


@dataclass
class RetrievalOptions:
    """Knobs of the retrieval engine.

    ``pilot_positions`` are sample indices on the full grid and
    ``pilot_values`` the receiver-side field expected there.
    ``escape_threshold`` is the smoothed, normalized local intensity error
    above which a region counts as stuck and gets its phase perturbed; a
    region must also exceed ``escape_outlier`` times the block median, so
    a uniform noise floor does not count as stuck.
    An escape period that fails to bring the residual below ``stall_ratio``
    times the best earlier value counts as a stall; a stall without stuck
    regions ends the run (the residual is at its floor, set by noise,
    pilot errors or block edges), and so do ``stall_patience``
    consecutive stalls with stuck regions left (noise keeps some regions
    above the threshold for good).
    """

    max_iterations: int = 1000
    escape_period: int = 50
    escape_strength: float = 1.2
    escape_threshold: float = 1e-3
    escape_window: int = 32
    escape_on_stall_only: bool = False
    stall_ratio: float = 0.9
    stall_patience: int = 60
    escape_outlier: float = 10.0
    n_parallel_inits: int = 1
    block_length: int = 4096
    block_overlap: int = 512
    edge_buffer: int = 256
    convergence_threshold: float = 1e-12
    pilot_positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    pilot_values: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    spectral_mask: np.ndarray | None = None
    rolloff: float = 0.1
    method: str = "raar"
    relaxation: float = 0.9
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.block_overlap < self.block_length:
            raise ValueError("need 0 < block_overlap < block_length")
        if not self.convergence_threshold > 0:
            raise ValueError("convergence_threshold must be positive")
        if self.n_parallel_inits < 1 or self.max_iterations < 1 or self.escape_period < 1:
            raise ValueError("n_parallel_inits, max_iterations and escape_period must be >= 1")
        if self.method not in ("gs", "raar"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.escape_outlier < 1:
            raise ValueError("escape_outlier must be >= 1")
        if self.stall_patience < 1:
            raise ValueError("stall_patience must be >= 1")
        if not 0 < self.stall_ratio <= 1:
            raise ValueError("stall_ratio must lie in (0, 1]")
        self.pilot_positions = np.asarray(self.pilot_positions, dtype=int).ravel()
        self.pilot_values = np.asarray(self.pilot_values, dtype=complex).ravel()
        if self.pilot_positions.shape != self.pilot_values.shape:
            raise ValueError("pilot_positions and pilot_values differ in length")


@dataclass(eq=False)
class RetrievalResult:
    field: Waveform
    residual_history: np.ndarray
    iterations_used: int
    init_index_chosen: int | tuple
    converged: bool
    block_histories: list = field(default_factory=list, repr=False)

    @property
    def residual(self) -> float:
        return float(self.residual_history[-1])


# ---------------------------------------------------------------------------
# constraint operators


def _samples(x):
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=complex)


def _wrap(x, s):
    return Waveform(x.grid, s) if isinstance(x, Waveform) else s


def _unit_phase(s):
    mag = np.abs(s)
    return np.divide(s, mag, out=np.ones_like(s), where=mag > 0)


def project_intensity(x, target):
    """Replace magnitudes by ``sqrt(target)``, keep phases (phase 0 where ``x == 0``)."""
    s = _samples(x)
    t = np.asarray(target, dtype=float)
    if t.shape != s.shape:
        raise ValueError("target and field lengths differ")
    if np.any(t < 0):
        raise ValueError("target intensity must be non-negative")
    return _wrap(x, np.sqrt(t) * _unit_phase(s))


def project_spectrum(x, mask):
    """Zero every DFT bin outside ``mask`` (boolean, one entry per bin)."""
    s = _samples(x)
    m = np.asarray(mask, dtype=bool)
    if m.shape[-1] != s.shape[-1]:
        raise ValueError("mask length does not match the grid")
    return _wrap(x, np.fft.ifft(np.fft.fft(s, axis=-1) * m, axis=-1))


def apply_pilot_constraint(x, pilots):
    """Overwrite known samples.

    ``pilots`` is either ``(positions, values)`` arrays or a list of
    ``(position, value)`` pairs.
    """
    s = _samples(x).copy()
    pos, val = _pilot_arrays(pilots)
    if pos.size and (pos.min() < 0 or pos.max() >= s.shape[-1]):
        raise IndexError("pilot position out of range")
    s[..., pos] = val
    return _wrap(x, s)


def _pilot_arrays(pilots):
    if isinstance(pilots, tuple) and len(pilots) == 2 and np.ndim(pilots[0]) == 1:
        return np.asarray(pilots[0], dtype=int), np.asarray(pilots[1], dtype=complex)
    pilots = list(pilots)
    if not pilots:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=complex)
    pos, val = zip(*pilots)
    return np.asarray(pos, dtype=int), np.asarray(val, dtype=complex)


def escape_local_minimum(state, strength: float, seed: int, weights=None):
    """Multiply each sample by ``exp(1j*phi)``, ``phi ~ N(0, (strength*w)**2)``.

    ``weights`` (default 1 everywhere) localizes the perturbation.
    """
    if not strength > 0:
        raise ValueError("strength must be positive")
    s = _samples(state)
    phi = seeded_rng(seed, "escape").standard_normal(s.shape) * strength
    if weights is not None:
        phi = phi * np.asarray(weights, dtype=float)
    return _wrap(state, s * np.exp(1j * phi))


def intensity_residual(field, direct, dispersed, d: DispersionOperator, grid=None,
                       pre_dispersion: float = 0.0) -> float:
    """Mean over both paths of ``sum((|y|**2 - target)**2) / sum(target**2)``."""
    s = _samples(field)
    grid = field.grid if grid is None else grid
    t1 = quadratic_phase(pre_dispersion, grid.n_samples, grid.sample_rate, grid.center_wavelength)
    t2 = t1 * d.transfer(grid)
    S = np.fft.fft(s)
    a = np.fft.ifft(S * t1)
    b = np.fft.ifft(S * t2)
    return _residual(a, b, np.asarray(direct, float), np.asarray(dispersed, float))


def _residual(a, b, i1, i2, v1=None, v2=None) -> float:
    e1 = (np.abs(a) ** 2 - i1) ** 2
    e2 = (np.abs(b) ** 2 - i2) ** 2
    n1 = i1**2
    n2 = i2**2
    if v1 is not None:
        e1, n1 = e1[v1], n1[v1]
    if v2 is not None:
        e2, n2 = e2[v2], n2[v2]
    r1 = e1.sum() / n1.sum() if n1.sum() > 0 else e1.sum()
    r2 = e2.sum() / n2.sum() if n2.sum() > 0 else e2.sum()
    return float(0.5 * (r1 + r2))


def gs_iterate(state, capture_pair, d: DispersionOperator, opts: RetrievalOptions):
    """One cycle on the full grid: direct intensity, forward D, dispersed
    intensity, backward D, spectral support, pilots."""
    direct, dispersed = capture_pair
    grid = state.grid
    x = project_intensity(state, direct)
    x = Waveform(grid, np.fft.ifft(np.fft.fft(x.samples) * d.transfer(grid)))
    x = project_intensity(x, dispersed)
    x = Waveform(grid, np.fft.ifft(np.fft.fft(x.samples) * d.inverse().transfer(grid)))
    mask = opts.spectral_mask if opts.spectral_mask is not None else grid.band_mask(opts.rolloff)
    x = project_spectrum(x, mask)
    return apply_pilot_constraint(x, (opts.pilot_positions, opts.pilot_values))


# ---------------------------------------------------------------------------
# engine


@dataclass
class _Block:
    """One retrieval sub-problem on a local circular grid."""

    index: np.ndarray  # global sample index of every local sample
    core: np.ndarray  # local positions kept when stitching
    t1: np.ndarray
    t2: np.ndarray
    amp1: np.ndarray
    amp2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    mask: np.ndarray
    pil_idx: np.ndarray
    pil_val: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    ref1: float = 0.0  # mean squared intensity of the whole record, per path
    ref2: float = 0.0

    @property
    def n(self) -> int:
        return self.index.size


class _Solver:
    def __init__(self, blk: _Block, opts: RetrievalOptions, seed: int):
        self.b = blk
        self.o = opts
        self.seed = seed
        self.t1c = blk.t1.conj()
        self.t2c = blk.t2.conj()
        self.all1 = bool(blk.v1.all())
        self.all2 = bool(blk.v2.all())
        # normalize by record-wide power so near-empty blocks (guards) count
        # as solved instead of chasing noise-level relative errors
        self.lnorm = blk.ref1 if blk.ref1 > 0 else 1.0
        self.den1 = blk.ref1 * max(int(blk.v1.sum()), 1)
        self.den2 = blk.ref2 * max(int(blk.v2.sum()), 1)
        w = max(1, int(opts.escape_window))
        k = np.zeros(blk.n)
        k[:w] = 1.0 / w
        self.smooth = sfft.rfft(np.roll(k, -(w // 2)))

    # projections in the measurement domains --------------------------------
    def pm(self, a, b):
        blk = self.b
        pa = blk.amp1 * _unit_phase(a)
        pb = blk.amp2 * _unit_phase(b)
        if not self.all1:
            pa = np.where(blk.v1, pa, a)
        if not self.all2:
            pb = np.where(blk.v2, pb, b)
        return pa, pb

    def pc_from_field(self, u):
        blk = self.b
        U = sfft.fft(u)
        return sfft.ifft(U * blk.t1), sfft.ifft(U * blk.t2)

    def constrain(self, u):
        blk = self.b
        U = sfft.fft(u) * blk.mask
        u = sfft.ifft(U)
        if blk.pil_idx.size:
            u[blk.pil_idx] = blk.pil_val
        return u

    def residual(self, a, b):
        blk = self.b
        e1 = (np.abs(a) ** 2 - blk.i1) ** 2
        e2 = (np.abs(b) ** 2 - blk.i2) ** 2
        s1 = e1.sum() if self.all1 else e1[blk.v1].sum()
        s2 = e2.sum() if self.all2 else e2[blk.v2].sum()
        return float(0.5 * (s1 / self.den1 if self.den1 > 0 else s1)
                     + 0.5 * (s2 / self.den2 if self.den2 > 0 else s2))

    def local_error(self, a, b):
        blk = self.b
        e = ((np.abs(a) ** 2 - blk.i1) ** 2) * blk.v1 + ((np.abs(b) ** 2 - blk.i2) ** 2) * blk.v2
        e = e / (2 * self.lnorm)
        return sfft.irfft(sfft.rfft(e) * self.smooth, n=blk.n)

    # iterations -----------------------------------------------------------
    def run(self, init_index: int, initial_field=None):
        o, blk = self.o, self.b
        if initial_field is not None:
            u = np.asarray(initial_field, dtype=complex)
        else:
            rng = seeded_rng(self.seed, f"init-{init_index}")
            a0 = np.sqrt(blk.i1) * np.exp(2j * np.pi * rng.random(blk.n))
            u = sfft.ifft(sfft.fft(a0) * self.t1c)
        if o.method == "gs":
            return self._run_gs(init_index, u)
        return self._run_raar(init_index, u)

    def _escape_check(self, it, r, ea, eb, state):
        """Shared stall/escape bookkeeping; returns (stop, bad-mask or None)."""
        o = self.o
        if (it + 1) % o.escape_period or it + 1 >= o.max_iterations:
            return False, None
        stalled = r > o.stall_ratio * state["best"]
        state["best"] = min(state["best"], r)
        state["stalls"] = state.get("stalls", 0) + 1 if stalled else 0
        e = self.local_error(ea, eb)
        # noise lifts the local error everywhere; only outliers are stuck
        floor = np.median(e[self.b.v1 | self.b.v2]) if (self.b.v1 | self.b.v2).any() else 0.0
        bad = e > max(o.escape_threshold, o.escape_outlier * floor)
        if stalled and (not bad.any() or state["stalls"] >= o.stall_patience):
            return True, None
        if (o.escape_on_stall_only and not stalled) or not bad.any():
            return False, None
        return False, bad

    def _escape_seed(self, init_index, state):
        seed = self.seed * 7919 + init_index * 104729 + state["escapes"]
        state["escapes"] += 1
        return seed

    def _run_gs(self, init_index, u):
        o, blk = self.o, self.b
        history = []
        state = {"best": np.inf, "escapes": 0}
        best_r, best_u = np.inf, u
        for it in range(o.max_iterations):
            a, _ = self.pm(*self.pc_from_field(u))
            b = sfft.ifft(sfft.fft(a) * self.t1c * blk.t2)
            _, b = self.pm(b, b)
            u = self.constrain(sfft.ifft(sfft.fft(b) * self.t2c))
            ea, eb = self.pc_from_field(u)
            r = self.residual(ea, eb)
            history.append(r)
            if r < best_r:
                best_r, best_u = r, u.copy()
            if r < o.convergence_threshold:
                break
            stop, bad = self._escape_check(it, r, ea, eb, state)
            if stop:
                break
            if bad is not None:
                u = escape_local_minimum(u, o.escape_strength, self._escape_seed(init_index, state), bad)
        return best_u, np.asarray(history), len(history)

    def _run_raar(self, init_index, u):
        """RAAR on the measurement pair ``(a, b)``.

        Spectra of the iterates are carried along with the time samples so
        that an iteration costs ten FFTs: the reflection through the
        magnitude projection reuses the spectra of the previous estimate.
        """
        o, blk = self.o, self.b
        t1, t2, t1c, t2c, mask = blk.t1, blk.t2, self.t1c, self.t2c, blk.mask
        has_pilots = blk.pil_idx.size > 0
        beta = o.relaxation

        def sync(a):
            A = sfft.fft(a)
            B = A * t1c * t2
            b = sfft.ifft(B)
            ma, mb = self.pm(a, b)
            return a, b, A, B, ma, mb, sfft.fft(ma), sfft.fft(mb)

        U = sfft.fft(u)
        a, b, A, B, ma, mb, MA, MB = sync(sfft.ifft(U * t1))
        history = []
        state = {"best": np.inf, "escapes": 0}
        best_r, best_u = np.inf, u
        for it in range(o.max_iterations):
            # project the reflection 2*Pm - I onto the consistent set
            Uc = 0.5 * ((2 * MA - A) * t1c + (2 * MB - B) * t2c) * mask
            if has_pilots:
                uc = sfft.ifft(Uc)
                uc[blk.pil_idx] = blk.pil_val
                Uc = sfft.fft(uc)
            CA, CB = Uc * t1, Uc * t2
            ca, cb = sfft.ifft(CA), sfft.ifft(CB)
            a = beta * (a + ca - ma) + (1 - beta) * ma
            b = beta * (b + cb - mb) + (1 - beta) * mb
            A = beta * (A + CA - MA) + (1 - beta) * MA
            B = beta * (B + CB - MB) + (1 - beta) * MB
            ma, mb = self.pm(a, b)
            MA, MB = sfft.fft(ma), sfft.fft(mb)
            # current estimate Pc(Pm(a, b))
            Ue = 0.5 * (MA * t1c + MB * t2c) * mask
            u = sfft.ifft(Ue)
            if has_pilots:
                u[blk.pil_idx] = blk.pil_val
                Ue = sfft.fft(u)
            ea, eb = sfft.ifft(Ue * t1), sfft.ifft(Ue * t2)
            r = self.residual(ea, eb)
            history.append(r)
            if r < best_r:
                best_r, best_u = r, u.copy()
            if r < o.convergence_threshold:
                break
            stop, bad = self._escape_check(it, r, ea, eb, state)
            if stop:
                break
            if bad is not None:
                a = escape_local_minimum(a, o.escape_strength, self._escape_seed(init_index, state), bad)
                a, b, A, B, ma, mb, MA, MB = sync(a)
        return best_u, np.asarray(history), len(history)


def _plan_blocks(N: int, opts: RetrievalOptions):
    """Yield ``(core_start, core_stop)`` pairs covering the circular record."""
    if opts.block_length >= N:
        return None
    hop = opts.block_length - opts.block_overlap
    nb = int(np.ceil(N / hop))
    edges = [round(b * N / nb) for b in range(nb + 1)]
    return list(zip(edges[:-1], edges[1:]))


def _build_blocks(capture: IntensityCapture, tributary: int, opts: RetrievalOptions,
                  pre_dispersion: float, region=None):
    grid = capture.grid
    N = grid.n_samples
    gain = 10 ** (capture.path_loss_db / 10)
    i1_full = capture.direct[tributary]
    i2_full = capture.dispersed[tributary] * gain
    d_total = pre_dispersion + capture.d_operator.signed_dispersion
    if opts.spectral_mask is not None:
        m = np.asarray(opts.spectral_mask, dtype=bool)
        f = grid.frequencies()
        band_edge = np.max(np.abs(f[m])) if m.any() else -1.0
    else:
        m = grid.band_mask(opts.rolloff)
        band_edge = (1 + opts.rolloff) * grid.symbol_rate / 2 * (1 + 1e-12)
    pil_pos = opts.pilot_positions % N if opts.pilot_positions.size else opts.pilot_positions
    pil_lookup = dict(zip(pil_pos.tolist(), opts.pilot_values.tolist()))
    ref1, ref2 = float(np.mean(i1_full**2)), float(np.mean(i2_full**2))

    def phases(n):
        t1 = quadratic_phase(pre_dispersion, n, grid.sample_rate, grid.center_wavelength)
        t2 = quadratic_phase(d_total, n, grid.sample_rate, grid.center_wavelength)
        return t1, t2

    plan = _plan_blocks(N, opts) if region is None else [tuple(int(v) for v in region)]
    if plan is None:
        t1, t2 = phases(N)
        order = np.argsort(pil_pos, kind="stable")
        ones = np.ones(N, dtype=bool)
        return [_Block(np.arange(N), np.arange(N), t1, t2, np.sqrt(i1_full), np.sqrt(i2_full),
                       ones, ones, m.astype(float), pil_pos[order], opts.pilot_values[order],
                       i1_full, i2_full, ref1, ref2)]

    def spread(psnm):
        if psnm == 0:
            return 0
        op = DispersionOperator(abs(psnm), grid.center_wavelength)
        return op.spread_samples(grid, opts.rolloff) + 16

    g1, g2 = spread(pre_dispersion), spread(d_total)
    half = opts.block_overlap // 2 if region is None else 0
    buf = opts.edge_buffer
    blocks = []
    for c0, c1 in plan:
        lo, hi = c0 - half - buf, c1 + half + buf
        n = next_fast_len(hi - lo)
        idx = (lo + np.arange(n)) % N
        rel = np.arange(n)
        con_lo, con_hi = buf, buf + (c1 - c0) + 2 * half
        v1 = (rel >= con_lo + g1) & (rel < con_hi - g1)
        v2 = (rel >= con_lo + g2) & (rel < con_hi - g2)
        t1, t2 = phases(n)
        f = np.fft.fftfreq(n, d=1.0 / grid.sample_rate)
        mask = (np.abs(f) <= band_edge).astype(float)
        in_con = (rel >= con_lo) & (rel < con_hi)
        loc = [(j, pil_lookup[g]) for j, g in enumerate(idx.tolist()) if in_con[j] and g in pil_lookup]
        pil_idx = np.asarray([j for j, _ in loc], dtype=int)
        pil_val = np.asarray([v for _, v in loc], dtype=complex)
        core = np.arange(buf + half, buf + half + (c1 - c0))
        i1 = i1_full[idx]
        i2 = i2_full[idx]
        blocks.append(_Block(idx, core, t1, t2, np.sqrt(i1), np.sqrt(i2), v1, v2, mask,
                             pil_idx, pil_val, i1, i2, ref1, ref2))
    return blocks


def _solve_block(blk: _Block, opts: RetrievalOptions, block_no: int, initial_field):
    runs = []
    init = None if initial_field is None else initial_field[blk.index]
    for k in range(opts.n_parallel_inits):
        solver = _Solver(blk, opts, seed=opts.seed * 1_000_003 + block_no)
        u, hist, used = solver.run(k, init)
        runs.append((float(hist.min()), k, u, hist, used))
    best = min(runs, key=lambda r: (r[0], r[1]))
    return best


def retrieve(capture: IntensityCapture, tributary: int, opts: RetrievalOptions,
             pre_dispersion: float = 0.0, initial_field=None, region=None) -> RetrievalResult:
    """Reconstruct the field of one tributary from its two intensity traces.

    Parameters
    ----------
    capture : IntensityCapture
    tributary : int
    opts : RetrievalOptions
    pre_dispersion : float
        Chromatic dispersion (ps/nm) the field has already experienced in
        front of both detectors. The returned field is then the
        CD-compensated one: direct intensity = ``|CD z|**2``, dispersed
        intensity = ``|D CD z|**2``.
    initial_field : array, optional
        Start every instance from this field instead of a random phase.
    region : (start, stop), optional
        Solve only this sample range (as one windowed block); the returned
        field is zero elsewhere and the residual covers the region only.
    """
    grid = capture.grid
    N = grid.n_samples
    blocks = _build_blocks(capture, tributary, opts, pre_dispersion, region)
    if initial_field is not None:
        initial_field = np.asarray(initial_field.samples if isinstance(initial_field, Waveform)
                                   else initial_field, dtype=complex)

    def work(item):
        no, blk = item
        return _solve_block(blk, opts, no, initial_field)

    items = list(enumerate(blocks))
    if opts.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            outcomes = list(pool.map(work, items))
    else:
        outcomes = [work(it) for it in items]

    field_out = np.zeros(N, dtype=complex)
    histories = []
    chosen = []
    used = 0
    for blk, (res, k, u, hist, n_used) in zip(blocks, outcomes):
        field_out[blk.index[blk.core]] = u[blk.core]
        histories.append(hist)
        chosen.append(k)
        used = max(used, n_used)

    if region is None:
        total = intensity_residual(field_out, capture.direct[tributary],
                                   capture.dispersed[tributary] * 10 ** (capture.path_loss_db / 10),
                                   capture.d_operator, grid, pre_dispersion)
    else:
        total = float(outcomes[0][0])
    if len(blocks) == 1:
        history = histories[0].copy()
        history[-1] = total
        init_chosen = chosen[0]
    else:
        width = max(h.size for h in histories)
        padded = np.stack([np.pad(h, (0, width - h.size), mode="edge") for h in histories])
        history = np.append(padded.mean(axis=0), total)
        init_chosen = tuple(chosen)
    return RetrievalResult(Waveform(grid, field_out), history, used, init_chosen,
                           bool(total < opts.convergence_threshold), histories)


def export_residual_history(results, path) -> Path:
    """CSV with columns ``tributary, iteration, residual``.

    ``results`` is a sequence of :class:`RetrievalResult` (index = tributary)
    or a mapping ``tributary -> RetrievalResult``.
    """
    items = results.items() if isinstance(results, dict) else enumerate(results)
    p = Path(path)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tributary", "iteration", "residual"])
        for k, r in items:
            for i, v in enumerate(r.residual_history):
                w.writerow([k, i, repr(float(v))])
    return p
