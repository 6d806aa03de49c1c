import struct

import numpy as np
import pytest

from mdmpr import dumpfile
from mdmpr.channel import ChannelParams, synthesize_channel
from mdmpr.dumpfile import DumpFormatError
from mdmpr.frontend import capture
from mdmpr.sigcore import DispersionOperator
from mdmpr.txgen import FrameSpec, build_frame, frame_grid

from conftest import random_waveform


def test_waveform_round_trip_is_bit_exact(grid, rng, tmp_path):
    for x in (random_waveform(grid, rng), random_waveform(grid, rng, 6)):
        p = dumpfile.save_waveform(x, tmp_path / "w.mdmp")
        y = dumpfile.load_waveform(p)
        assert y.grid == x.grid
        assert y.samples.shape == x.samples.shape
        assert np.array_equal(y.samples, x.samples)


def test_header_layout(grid, rng, tmp_path):
    p = dumpfile.save_waveform(random_waveform(grid, rng, 2), tmp_path / "w.mdmp")
    raw = p.read_bytes()
    assert raw[:4] == b"MDMP"
    assert struct.unpack_from("<HH", raw, 4) == (1, dumpfile.KINDS["waveform"])
    assert struct.unpack_from("<d", raw, 8)[0] == grid.symbol_rate
    h = dumpfile.read_header(p)
    assert (h["rows"], h["cols"], h["length"]) == (2, 1, grid.n_samples)
    # body is interleaved little-endian re/im float64
    assert len(raw) - h["body_offset"] == 2 * grid.n_samples * 16


def test_matrix_round_trip(grid, tmp_path):
    h = synthesize_channel(ChannelParams(intra_group_coupling=1.0, mdl_db=2.0, seed=3), grid)
    back = dumpfile.load_transfer_matrix(dumpfile.save_transfer_matrix(h, tmp_path / "h.mdmp"))
    assert np.array_equal(back.taps, h.taps)
    assert back.t0 == h.t0 and back.label == h.label


def test_capture_and_frame_round_trip(grid, rng, tmp_path):
    cap = capture(random_waveform(grid, rng, 6), DispersionOperator(650.0))
    back = dumpfile.load_capture(dumpfile.save_capture(cap, tmp_path / "c.mdmp"))
    assert np.array_equal(back.direct, cap.direct)
    assert np.array_equal(back.dispersed, cap.dispersed)
    assert back.d_operator == cap.d_operator

    spec = FrameSpec(ts_length=64, payload_length=256, pilot_group_size=3, seed=9)
    fr = build_frame(spec)
    fb = dumpfile.load_frame(dumpfile.save_frame(fr, tmp_path / "f.mdmp", frame_grid(spec)))
    assert fb.spec == spec
    assert np.array_equal(fb.symbols, fr.symbols)
    assert np.array_equal(fb.bits, fr.bits)
    assert np.array_equal(fb.pilot_positions, fr.pilot_positions)


def test_taps_and_describe(tmp_path, rng):
    t = rng.standard_normal((3, 3, 8)) + 0j
    p = dumpfile.save_taps(t, tmp_path / "t.mdmp")
    assert np.array_equal(dumpfile.load_taps(p), t)
    d = dumpfile.describe(p)
    assert d["kind"] == "taps"
    assert d["frobenius_norm"] == pytest.approx(np.linalg.norm(t))


def test_bad_files_are_rejected(grid, rng, tmp_path):
    bad = tmp_path / "bad.mdmp"
    bad.write_bytes(b"XXXX" + bytes(100))
    with pytest.raises(DumpFormatError, match="magic"):
        dumpfile.read_header(bad)
    bad.write_bytes(b"MD")
    with pytest.raises(DumpFormatError):
        dumpfile.read_header(bad)
    p = dumpfile.save_waveform(random_waveform(grid, rng), tmp_path / "w.mdmp")
    with pytest.raises(DumpFormatError, match="expected a matrix"):
        dumpfile.load_transfer_matrix(p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(DumpFormatError, match="truncated"):
        dumpfile.load_waveform(p)
