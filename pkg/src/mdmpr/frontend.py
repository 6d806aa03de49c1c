"""Direct-detection front end: two photodiodes per tributary, one behind a
dispersive element, followed by an ADC with finite ENOB."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sigcore import DispersionOperator, SignalGrid, Waveform, apply_dispersion, seeded_rng

__all__ = ["IntensityCapture", "detect_intensity", "quantize", "capture"]

_DB_PER_BIT = 20 * np.log10(2.0)  # the "6.02" of the ENOB formula
_SINE_OFFSET_DB = 10 * np.log10(1.5)  # the "1.76"


@dataclass(frozen=True, eq=False)
class IntensityCapture:
    """Per-tributary pair of intensity traces, each of shape ``(K, N)``."""

    direct: np.ndarray = field(repr=False)
    dispersed: np.ndarray = field(repr=False)
    d_operator: DispersionOperator
    grid: SignalGrid
    path_loss_db: float = 0.0

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.direct, dtype=float))
        p = np.atleast_2d(np.asarray(self.dispersed, dtype=float))
        if d.shape != p.shape:
            raise ValueError("direct and dispersed traces must have the same shape")
        if d.shape[-1] != self.grid.n_samples:
            raise ValueError("trace length does not match grid")
        if np.any(d < 0) or np.any(p < 0):
            raise ValueError("intensity traces must be non-negative")
        object.__setattr__(self, "direct", d)
        object.__setattr__(self, "dispersed", p)

    @property
    def n_tributaries(self) -> int:
        return self.direct.shape[0]


def detect_intensity(x) -> np.ndarray:
    """Square-law detection with unit responsivity."""
    s = x.samples if isinstance(x, Waveform) else np.asarray(x)
    return np.abs(s) ** 2


def quantize(trace, enob: float | None, seed: int = 0) -> np.ndarray:
    """Uniform mid-rise ADC over ``[0, max(trace)]`` plus noise to meet the ENOB SINAD.

    The quantizer has ``2**ceil(enob)`` levels; Gaussian noise tops the error
    power up to what a full-scale sine would see at
    ``SINAD = 6.02*enob + 1.76`` dB. For integer ``enob`` no extra noise is
    added. ``enob=None`` or ``inf`` disables the ADC model. Output is
    clamped at zero.
    """
    t = np.asarray(trace, dtype=float)
    if enob is None or np.isposinf(enob):
        return t.copy()
    if enob < 1:
        raise ValueError("enob must be >= 1")
    full_scale = float(np.max(t)) if t.size else 0.0
    if full_scale <= 0:
        return np.zeros_like(t)
    levels = 2 ** int(np.ceil(enob))
    lsb = full_scale / levels
    q = (np.floor(t / lsb) + 0.5) * lsb
    q = np.clip(q, lsb / 2, full_scale - lsb / 2)

    sinad = _DB_PER_BIT * enob + _SINE_OFFSET_DB
    target = (full_scale**2 / 8) / 10 ** (sinad / 10)
    extra = target - lsb**2 / 12
    if extra > 1e-12 * target:
        q = q + np.sqrt(extra) * seeded_rng(seed, "adc").standard_normal(t.shape)
    return np.maximum(q, 0.0)


def capture(x: Waveform, d: DispersionOperator, enob: float | None = None, seed: int = 0,
            path_loss_db: float = 0.0) -> IntensityCapture:
    """Detect every tributary on a direct path and on a path dispersed by ``d``.

    ``path_loss_db`` attenuates the dispersed path (splitter/DCF loss).
    """
    if d.sign != "forward":
        raise ValueError("capture expects a forward dispersion operator")
    s = np.atleast_2d(x.samples)
    direct = detect_intensity(s)
    dispersed = detect_intensity(apply_dispersion(Waveform(x.grid, s), d)) * 10 ** (-path_loss_db / 10)
    if enob is not None and not np.isposinf(enob):
        direct = np.stack([quantize(r, enob, seed=seed * 1000 + 2 * k) for k, r in enumerate(direct)])
        dispersed = np.stack(
            [quantize(r, enob, seed=seed * 1000 + 2 * k + 1) for k, r in enumerate(dispersed)]
        )
    return IntensityCapture(direct, dispersed, d, x.grid, path_loss_db)
