"""Shared little-endian binary layout for waveforms, frames, matrices and captures.

Layout (all little-endian)::

    offset  size  field
    0       4     magic b"MDMP"
    4       2     format version (uint16, currently 1)
    6       2     kind (uint16, see KINDS)
    8       8     symbol_rate (float64, Bd)
    16      4     samples_per_symbol (uint32)
    20      8     center_wavelength (float64, m)
    28      8     n_samples of the grid (uint64)
    36      4     rows (uint32): tributaries, or matrix outputs
    40      4     cols (uint32): 1, or matrix inputs
    44      8     length (uint64): samples per row/entry
    52      8     t0 (int64): zero-delay tap index, 0 when unused
    60      4     metadata length m (uint32)
    64      m     metadata, UTF-8 JSON (kind-specific scalars)
    64+m    ...   body

Bodies:

* ``waveform``, ``matrix``, ``taps``: complex128 as interleaved
  ``re, im`` float64 pairs, row-major over ``(rows, cols, length)``;
* ``capture``: the direct traces then the dispersed traces, float64,
  ``(rows, length)`` each; the dispersion element and path loss are in
  the metadata;
* ``frame``: complex symbols as above, then the bits as uint8
  ``(rows, 2 * length)``, then the pilot positions as int64; the frame
  spec is in the metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .sigcore import DispersionOperator, SignalGrid, Waveform

__all__ = [
    "MAGIC",
    "KINDS",
    "save_waveform",
    "load_waveform",
    "save_transfer_matrix",
    "load_transfer_matrix",
    "save_capture",
    "load_capture",
    "save_frame",
    "load_frame",
    "save_taps",
    "load_taps",
    "read_header",
    "describe",
]

MAGIC = b"MDMP"
VERSION = 1
KINDS = {"waveform": 1, "frame": 2, "matrix": 3, "capture": 4, "taps": 5}
_KIND_NAMES = {v: k for k, v in KINDS.items()}
_HEADER = struct.Struct("<4sHHdIdQIIQqI")


class DumpFormatError(ValueError):
    """File is not a valid dump of the expected kind."""


def _grid_fields(grid: SignalGrid | None):
    if grid is None:
        return 0.0, 0, 0.0, 0
    return grid.symbol_rate, grid.samples_per_symbol, grid.center_wavelength, grid.n_samples


def _write(path, kind: str, grid, rows: int, cols: int, length: int, t0: int, meta: dict,
           chunks) -> Path:
    p = Path(path)
    m = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    head = _HEADER.pack(MAGIC, VERSION, KINDS[kind], *_grid_fields(grid), rows, cols, length, t0, len(m))
    with p.open("wb") as fh:
        fh.write(head)
        fh.write(m)
        for c in chunks:
            fh.write(np.ascontiguousarray(c).tobytes())
    return p


def _complex_bytes(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    out = np.empty(a.shape + (2,), dtype="<f8")
    out[..., 0] = a.real
    out[..., 1] = a.imag
    return out


def read_header(path) -> dict:
    """Decode the fixed header and metadata of a dump file."""
    with Path(path).open("rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise DumpFormatError("file shorter than the header")
        (magic, version, kind, rate, sps, wl, n, rows, cols, length, t0, mlen) = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise DumpFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DumpFormatError(f"unsupported version {version}")
        if kind not in _KIND_NAMES:
            raise DumpFormatError(f"unknown kind {kind}")
        meta = json.loads(fh.read(mlen).decode()) if mlen else {}
    return {
        "kind": _KIND_NAMES[kind],
        "version": version,
        "symbol_rate": rate,
        "samples_per_symbol": sps,
        "center_wavelength": wl,
        "n_samples": n,
        "rows": rows,
        "cols": cols,
        "length": length,
        "t0": t0,
        "meta": meta,
        "body_offset": _HEADER.size + mlen,
    }


def _read(path, kind: str):
    h = read_header(path)
    if h["kind"] != kind:
        raise DumpFormatError(f"expected a {kind} dump, found {h['kind']}")
    grid = None
    if h["n_samples"]:
        grid = SignalGrid(h["symbol_rate"], h["samples_per_symbol"], h["center_wavelength"], h["n_samples"])
    body = Path(path).read_bytes()[h["body_offset"]:]
    return h, grid, body


def _take_complex(body: bytes, offset: int, shape) -> tuple[np.ndarray, int]:
    n = int(np.prod(shape))
    if len(body) < offset + 16 * n:
        raise DumpFormatError("truncated body")
    raw = np.frombuffer(body, dtype="<f8", count=2 * n, offset=offset)
    z = (raw[0::2] + 1j * raw[1::2]).reshape(shape)
    return z, offset + 16 * n


# -- waveforms ---------------------------------------------------------------

def save_waveform(x: Waveform, path) -> Path:
    s = np.atleast_2d(x.samples)
    return _write(path, "waveform", x.grid, s.shape[0], 1, s.shape[1], 0,
                  {"squeeze": x.samples.ndim == 1}, [_complex_bytes(s)])


def load_waveform(path) -> Waveform:
    h, grid, body = _read(path, "waveform")
    z, _ = _take_complex(body, 0, (h["rows"], h["length"]))
    return Waveform(grid, z[0] if h["meta"].get("squeeze") else z)


# -- transfer matrices and equalizer taps ------------------------------------

def save_transfer_matrix(h, path) -> Path:
    return _write(path, "matrix", h.grid, h.K, h.K, h.L, h.t0, {"label": h.label},
                  [_complex_bytes(h.taps)])


def load_transfer_matrix(path):
    from .channel import TransferMatrix

    h, grid, body = _read(path, "matrix")
    taps, _ = _take_complex(body, 0, (h["rows"], h["cols"], h["length"]))
    return TransferMatrix(taps, grid, h["t0"], h["meta"].get("label", "true_channel"))


def save_taps(taps: np.ndarray, path, grid: SignalGrid | None = None, meta: dict | None = None) -> Path:
    """Symbol-spaced equalizer taps ``(K, K, n)``."""
    t = np.asarray(taps, dtype=complex)
    return _write(path, "taps", grid, t.shape[0], t.shape[1], t.shape[2], 0, meta or {},
                  [_complex_bytes(t)])


def load_taps(path) -> np.ndarray:
    h, _, body = _read(path, "taps")
    taps, _ = _take_complex(body, 0, (h["rows"], h["cols"], h["length"]))
    return taps


# -- captures ----------------------------------------------------------------

def save_capture(cap, path) -> Path:
    d = cap.d_operator
    meta = {
        "accumulated_dispersion": d.accumulated_dispersion,
        "d_center_wavelength": d.center_wavelength,
        "sign": d.sign,
        "path_loss_db": cap.path_loss_db,
    }
    return _write(path, "capture", cap.grid, cap.direct.shape[0], 1, cap.direct.shape[1], 0, meta,
                  [cap.direct.astype("<f8"), cap.dispersed.astype("<f8")])


def load_capture(path):
    from .frontend import IntensityCapture

    h, grid, body = _read(path, "capture")
    n = h["rows"] * h["length"]
    if len(body) < 16 * n:
        raise DumpFormatError("truncated body")
    arr = np.frombuffer(body, dtype="<f8", count=2 * n)
    direct = arr[:n].reshape(h["rows"], h["length"]).copy()
    dispersed = arr[n:].reshape(h["rows"], h["length"]).copy()
    m = h["meta"]
    op = DispersionOperator(m["accumulated_dispersion"], m["d_center_wavelength"], m["sign"])
    return IntensityCapture(direct, dispersed, op, grid, m["path_loss_db"])


# -- frames ------------------------------------------------------------------

def save_frame(frame, path, grid: SignalGrid | None = None) -> Path:
    from dataclasses import asdict

    sym = frame.symbols
    pos = np.asarray(frame.pilot_positions, dtype="<i8")
    meta = {"spec": asdict(frame.spec), "pilot_shape": list(pos.shape)}
    return _write(path, "frame", grid, sym.shape[0], 1, sym.shape[1], 0, meta,
                  [_complex_bytes(sym), frame.bits.astype(np.uint8), pos])


def load_frame(path):
    from .txgen import FrameSpec, MdmFrame

    h, _, body = _read(path, "frame")
    K, n = h["rows"], h["length"]
    sym, off = _take_complex(body, 0, (K, n))
    shape = tuple(h["meta"]["pilot_shape"])
    if len(body) < off + 2 * K * n + 8 * int(np.prod(shape)):
        raise DumpFormatError("truncated body")
    bits = np.frombuffer(body, dtype=np.uint8, count=2 * K * n, offset=off).reshape(K, 2 * n)
    off += 2 * K * n
    pos = np.frombuffer(body, dtype="<i8", count=int(np.prod(shape)), offset=off).reshape(shape)
    spec = FrameSpec(**h["meta"]["spec"])
    return MdmFrame(spec, sym.copy(), bits.astype(np.int8), pos.astype(int))


def describe(path) -> dict:
    """Header plus a few summary statistics of the body, for ``inspect``."""
    h = read_header(path)
    out = {k: v for k, v in h.items() if k != "body_offset"}
    kind = h["kind"]
    if kind == "waveform":
        x = load_waveform(path)
        s = np.atleast_2d(x.samples)
        out["power_per_row"] = [float(np.mean(np.abs(r) ** 2)) for r in s]
    elif kind in ("matrix", "taps"):
        t = load_transfer_matrix(path).taps if kind == "matrix" else load_taps(path)
        out["frobenius_norm"] = float(np.linalg.norm(t))
        if kind == "matrix":
            from .channel import TransferMatrix, mdl_of

            out["mdl_db"] = mdl_of(TransferMatrix(t, load_transfer_matrix(path).grid, h["t0"]))
    elif kind == "capture":
        c = load_capture(path)
        out["mean_direct"] = [float(v) for v in c.direct.mean(axis=1)]
        out["mean_dispersed"] = [float(v) for v in c.dispersed.mean(axis=1)]
    elif kind == "frame":
        f = load_frame(path)
        out["n_pilots"] = int(f.pilot_positions.size)
    return out
