"""Scenario configuration, end-to-end runs, parameter sweeps.

A scenario is a JSON document with one block per stage. Every key is
checked: unknown keys and invalid values (wrong types included) raise
:class:`ConfigError` naming the offending path. Missing keys take the
defaults of the chosen profile.

A run writes a report directory (see :func:`run_scenario`); re-running a
saved ``config.json`` reproduces every file except the wall-clock timings
held in ``manifest.json``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dumpfile
from .channel import (ChannelParams, TransferMatrix, add_noise, apply_channel, export_impulse_response_csv, mdl_of,
                      synthesize_channel)
from .chanest import (DispersionSplit, EstimatorOptions, export_mdl_history, export_tap_heatmap, estimate_transfer_matrix,
                      propagate_pilots, split_dispersion, time_align)
from .frontend import IntensityCapture, capture
from .mimodsp import (BerReport, EqualizerConfig, EqualizerResult, compute_ber, demap_qpsk, export_constellation,
                      mimo_equalize)
from .retrieval import RetrievalOptions, export_residual_history, retrieve
from .sigcore import DispersionOperator, SignalGrid, Waveform
from .txgen import FrameSpec, MdmFrame, build_frame, pulse_shape

__all__ = [
    "ConfigError",
    "PROFILES",
    "DEFAULTS",
    "ScenarioConfig",
    "ReportBundle",
    "load_config",
    "Simulation",
    "Recovery",
    "simulate",
    "recover",
    "run_scenario",
    "sweep",
]

SPAN_KM = 30.0
FIBER_CD_PS_NM_KM = 17.0


class ConfigError(ValueError):
    """Invalid scenario configuration. ``path`` is the dotted key at fault."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message

    def to_json(self) -> str:
        return json.dumps({"error": "invalid_config", "path": self.path, "message": self.message},
                          sort_keys=True)


# Every block and key a config may contain, with its default. ``None`` is
# allowed only where the default is None.
DEFAULTS: dict = {
    "profile": "btb",
    "seed": 0,
    "workers": 1,
    "output_dir": "runs/scenario",
    "frame": {
        "ts_length": 2048,
        "payload_length": 2**14,
        "pilot_percentage": 0.2,
        "pilot_group_size": 1,
        "guard_length": 64,
        "decorrelation_delay": 128,
    },
    "signal": {
        "symbol_rate": 30e9,
        "samples_per_symbol": 2,
        "center_wavelength": 1555e-9,
        "rolloff": 0.1,
        "pulse": "rc",
    },
    "channel": {
        "n_sections": 2,
        "group_delay": 0.0,
        "dgd_compensated": True,
        "intra_group_dgd": 0.0,
        "intra_group_coupling": 1.0,
        "inter_group_coupling_db": -15.0,
        "mdl_db": 1.0,
        "cd_psnm": 0.0,
        "snr_db": math.inf,
    },
    "receiver": {
        "d_psnm": 650.0,
        "enob": None,
        "path_loss_db": 0.0,
        "align_max_lag": 64,
    },
    "retrieval": {
        "method": "raar",
        "max_iterations": 3000,
        "block_length": 4096,
        "block_overlap": 512,
        "edge_buffer": 256,
        "escape_period": 50,
        "escape_strength": 1.2,
        "escape_threshold": 1e-3,
        "escape_window": 32,
        "stall_ratio": 0.9,
        "stall_patience": 60,
        "escape_outlier": 10.0,
        "n_parallel_inits": 1,
        "convergence_threshold": 1e-12,
        "relaxation": 0.9,
        "pilot_max_leakage": 1e-3,
    },
    "estimator": {
        "n_outer_iterations": 15,
        "initial_matrix": "unitary",
        "ls_regularization": 1e-6,
        "tap_length": 32,
        "ts_pilot_fraction": 0.34,
        "inner_max_iterations": 200,
        "use_true_cd": False,
    },
    "equalizer": {
        "mode": "zero_forcing_from_h",
        "n_taps": None,
        "noise_loading": 0.0,
        "regularization": 0.0,
    },
}

PROFILES: dict = {
    "btb": {
        "pins": {"frame.pilot_group_size": 1, "channel.cd_psnm": 0.0, "channel.group_delay": 0.0,
                 "channel.intra_group_dgd": 0.0},
        "defaults": {},
    },
    "span_30km": {
        "pins": {"frame.pilot_group_size": 3, "channel.cd_psnm": SPAN_KM * FIBER_CD_PS_NM_KM,
                 "channel.dgd_compensated": True},
        "defaults": {
            "channel.group_delay": 5 / 30e9,  # per section, cancels over the two sections
            "channel.intra_group_dgd": 2 / 30e9,
            "channel.mdl_db": 2.0,
        },
    },
    "custom": {"pins": {}, "defaults": {}},
}

_CHOICES = {
    "profile": tuple(PROFILES),
    "signal.pulse": ("rc", "rrc"),
    "retrieval.method": ("raar", "gs"),
    "estimator.initial_matrix": ("unitary", "identity"),
    "equalizer.mode": ("zero_forcing_from_h", "mmse_from_h", "data_aided_ls"),
}
_RUNTIME_KEYS = ("output_dir", "workers")
_NULLABLE_NUMBER = {"receiver.enob", "equalizer.n_taps"}


def _get(d: dict, path: str):
    cur = d
    for part in path.split("."):
        cur = cur[part]
    return cur


def _set(d: dict, path: str, value):
    parts = path.split(".")
    cur = d
    for part in parts[:-1]:
        cur = cur[part]
    cur[parts[-1]] = value


def _check_value(path: str, value, default):
    if path in _CHOICES:
        if value not in _CHOICES[path]:
            raise ConfigError(f"must be one of {list(_CHOICES[path])}, got {value!r}", path)
        return value
    if value is None:
        if default is None or path in _NULLABLE_NUMBER:
            return None
        raise ConfigError("may not be null", path)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path)
        return value
    if isinstance(default, int) or path in ("receiver.enob", "equalizer.n_taps"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        if path == "receiver.enob":
            return float(value)
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"expected an integer, got {value!r}", path)
            value = int(value)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    raise ConfigError(f"unsupported value {value!r}", path)


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    if not isinstance(override, dict):
        raise ConfigError("expected an object", prefix.rstrip("."))
    for key, value in override.items():
        path = prefix + key
        if key not in base:
            raise ConfigError("unknown key", path)
        if isinstance(base[key], dict):
            out[key] = _merge(base[key], value, path + ".")
        else:
            out[key] = _check_value(path, value, base[key])
    return out


def _json_number(x):
    """JSON has no infinity; store it as the string "inf"."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _from_json_number(x):
    if x in ("inf", "+inf", "Infinity"):
        return math.inf
    if x in ("-inf", "-Infinity"):
        return -math.inf
    return x


def _walk(d: dict, fn, prefix=""):
    return {k: (_walk(v, fn, prefix + k + ".") if isinstance(v, dict) else fn(prefix + k, v))
            for k, v in d.items()}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, fully expanded scenario (all defaults filled in)."""

    data: dict = field(repr=False)

    @classmethod
    def from_dict(cls, raw: dict | None = None, profile: str | None = None, seed: int | None = None,
                  output_dir: str | None = None, workers: int | None = None) -> "ScenarioConfig":
        raw = {} if raw is None else copy.deepcopy(raw)
        if not isinstance(raw, dict):
            raise ConfigError("top level must be an object")
        raw = _walk(raw, lambda p, v: _from_json_number(v))
        for key, val in (("profile", profile), ("seed", seed), ("output_dir", output_dir),
                         ("workers", workers)):
            if val is not None:
                raw[key] = val
        prof = raw.get("profile", DEFAULTS["profile"])
        if prof not in PROFILES:
            raise ConfigError(f"must be one of {list(PROFILES)}, got {prof!r}", "profile")
        base = copy.deepcopy(DEFAULTS)
        for path, v in {**PROFILES[prof]["defaults"], **PROFILES[prof]["pins"]}.items():
            _set(base, path, v)
        merged = _merge(base, raw)
        for path, v in PROFILES[prof]["pins"].items():
            if _get(merged, path) != v:
                raise ConfigError(f"pinned to {v!r} by profile {prof!r}", path)
        cfg = cls(merged)
        cfg._validate()
        return cfg

    def _validate(self):
        d = self.data
        if d["seed"] < 0:
            raise ConfigError("must be >= 0", "seed")
        if d["workers"] < 1:
            raise ConfigError("must be >= 1", "workers")
        checks = [
            (self.frame_spec, "frame"),
            (self.grid, "signal"),
            (self.channel_params, "channel"),
            (self.retrieval_options, "retrieval"),
            (self.estimator_options, "estimator"),
            (self.equalizer_config, "equalizer"),
        ]
        for build, path in checks:
            try:
                build()
            except ConfigError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigError(str(exc), path) from None
        if d["receiver"]["d_psnm"] == 0:
            raise ConfigError("the dispersive element must be nonzero", "receiver.d_psnm")
        enob = d["receiver"]["enob"]
        if enob is not None and enob < 1:
            raise ConfigError("must be >= 1 or null", "receiver.enob")

    # -- accessors ------------------------------------------------------------
    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def profile(self) -> str:
        return self.data["profile"]

    def frame_spec(self) -> FrameSpec:
        return FrameSpec(seed=self.seed, **self.data["frame"])

    def grid(self) -> SignalGrid:
        s = self.data["signal"]
        n_symbols = self.frame_spec().n_symbols
        return SignalGrid(s["symbol_rate"], s["samples_per_symbol"], s["center_wavelength"],
                          n_symbols * s["samples_per_symbol"])

    def channel_params(self) -> ChannelParams:
        return ChannelParams(seed=self.seed, **self.data["channel"])

    def retrieval_options(self, **extra) -> RetrievalOptions:
        r = dict(self.data["retrieval"])
        r.pop("pilot_max_leakage")
        r.update(rolloff=self.data["signal"]["rolloff"], seed=self.seed, workers=self.data["workers"])
        r.update(extra)
        return RetrievalOptions(**r)

    def estimator_options(self) -> EstimatorOptions:
        e = self.data["estimator"]
        inner = RetrievalOptions(max_iterations=e["inner_max_iterations"], escape_period=100,
                                 escape_strength=3.0, stall_ratio=0.99, rolloff=self.data["signal"]["rolloff"])
        return EstimatorOptions(n_outer_iterations=e["n_outer_iterations"],
                                initial_matrix=e["initial_matrix"],
                                ls_regularization=e["ls_regularization"], tap_length=e["tap_length"],
                                ts_pilot_fraction=e["ts_pilot_fraction"], retrieval=inner,
                                seed=self.seed)

    def equalizer_config(self) -> EqualizerConfig:
        q = self.data["equalizer"]
        s = self.data["signal"]
        return EqualizerConfig(mode=q["mode"], n_taps=q["n_taps"], noise_loading=q["noise_loading"],
                               regularization=q["regularization"], rolloff=s["rolloff"],
                               pulse=s["pulse"])

    def d_operator(self) -> DispersionOperator:
        return DispersionOperator(self.data["receiver"]["d_psnm"], self.data["signal"]["center_wavelength"])

    # -- serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(_walk(self.data, lambda p, v: _json_number(v)), indent=2, sort_keys=True)

    def snapshot_json(self) -> str:
        """The config without the keys that only say where and how fast to run
        (``output_dir``, ``workers``); this is what a report stores."""
        d = {k: v for k, v in self.data.items() if k not in _RUNTIME_KEYS}
        return json.dumps(_walk(d, lambda p, v: _json_number(v)), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        d = {k: v for k, v in self.data.items() if k not in _RUNTIME_KEYS}
        canon = json.dumps(_walk(d, lambda p, v: _json_number(v)), sort_keys=True,
                           separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def with_value(self, path: str, value) -> "ScenarioConfig":
        """Copy with one dotted key replaced (validated again)."""
        d = self.to_dict()
        try:
            _get(d, path)
        except (KeyError, TypeError):
            raise ConfigError("unknown key", path) from None
        raw = _walk(d, lambda p, v: _json_number(v))
        _set(raw, path, value)
        return ScenarioConfig.from_dict(raw)


def load_config(path, **overrides) -> ScenarioConfig:
    """Read a JSON scenario file; ``overrides`` (profile, seed, output_dir,
    workers) win over the file."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file {str(p)!r}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return ScenarioConfig.from_dict(raw, **overrides)


# ---------------------------------------------------------------------------
# running


@dataclass(eq=False)
class ReportBundle:
    path: Path
    manifest: dict
    ber: BerReport
    extras: dict = field(default_factory=dict, repr=False)

    @property
    def numeric_artifacts(self) -> list[Path]:
        return [self.path / name for name in self.manifest["artifacts"]]


class _Clock:
    def __init__(self):
        self.timings = {}
        self._t = time.perf_counter()

    def lap(self, stage: str):
        now = time.perf_counter()
        self.timings[stage] = round(now - self._t, 6)
        self._t = now


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _roll_capture(cap: IntensityCapture, lag: int) -> IntensityCapture:
    return IntensityCapture(np.roll(cap.direct, -lag, axis=-1), np.roll(cap.dispersed, -lag, axis=-1),
                            cap.d_operator, cap.grid, cap.path_loss_db)


@dataclass(eq=False)
class Simulation:
    """Transmitter, channel and front end of one scenario."""

    frame: MdmFrame
    grid: SignalGrid
    h_true: TransferMatrix
    received: Waveform  # after channel and noise, before detection
    capture: IntensityCapture  # already aligned
    lag: int  # alignment shift that was removed, in samples


@dataclass(eq=False)
class Recovery:
    """Everything downstream of the transfer-matrix estimate."""

    split: DispersionSplit
    pilot_positions: np.ndarray
    pilot_values: np.ndarray
    retrieval: list
    fields: np.ndarray
    equalized: EqualizerResult
    ber: BerReport


def simulate(cfg: ScenarioConfig, clock: _Clock | None = None) -> Simulation:
    """Build the frame, pass it through the synthetic channel, add noise,
    detect both intensity paths and align the capture on the TS."""
    clock = clock or _Clock()
    rolloff, pulse = cfg["signal"]["rolloff"], cfg["signal"]["pulse"]
    spec = cfg.frame_spec()
    grid = cfg.grid()
    frame = build_frame(spec)
    tx = pulse_shape(frame.symbols, grid, rolloff, pulse)
    clock.lap("transmitter")

    params = cfg.channel_params()
    h_true = synthesize_channel(params, grid)
    rx = apply_channel(tx, h_true)
    sps = grid.samples_per_symbol
    # SNR refers to the mean power over the occupied part of the frame
    active = slice(spec.ts_start * sps, spec.payload_stop * sps)
    p_active = float(np.mean(np.abs(rx.samples[:, active]) ** 2))
    rx = add_noise(rx, params.snr_db, cfg.seed, signal_power=p_active)
    clock.lap("channel")

    rcv = cfg["receiver"]
    cap = capture(rx, cfg.d_operator(), enob=rcv["enob"], seed=cfg.seed, path_loss_db=rcv["path_loss_db"])
    clock.lap("capture")

    ts_only = np.zeros_like(frame.symbols)
    ts_only[:, frame.ts_slice] = frame.ts_symbols
    ref = np.sum(np.abs(pulse_shape(ts_only, grid, rolloff, pulse).samples) ** 2, axis=0)
    summed = IntensityCapture(cap.direct.sum(axis=0, keepdims=True),
                              cap.dispersed.sum(axis=0, keepdims=True), cap.d_operator, grid,
                              cap.path_loss_db)
    lag = int(time_align(summed, ref, max_lag=rcv["align_max_lag"])[0])
    if lag:
        cap = _roll_capture(cap, lag)
    clock.lap("alignment")
    return Simulation(frame, grid, h_true, rx, cap, lag)


def recover(cfg: ScenarioConfig, sim: Simulation, h_est: TransferMatrix,
            clock: _Clock | None = None) -> Recovery:
    """CD/modal split of ``h_est``, pilot propagation, payload retrieval,
    equalization and BER."""
    clock = clock or _Clock()
    rolloff, pulse = cfg["signal"]["rolloff"], cfg["signal"]["pulse"]
    frame, grid, cap = sim.frame, sim.grid, sim.capture
    spec = frame.spec
    known_cd = cfg["channel"]["cd_psnm"] if cfg["estimator"]["use_true_cd"] else None
    split = split_dispersion(h_est, rolloff, known_cd=known_cd)
    pos, val = propagate_pilots(frame, split, spec.pilot_group_size, rolloff, pulse,
                                max_leakage=cfg["retrieval"]["pilot_max_leakage"])
    clock.lap("pilots")

    K = frame.n_tributaries
    fields = np.zeros((K, grid.n_samples), dtype=complex)
    results = []
    cd = split.h_cd.signed_dispersion
    for k in range(K):
        ropts = cfg.retrieval_options(pilot_positions=pos, pilot_values=val[k], seed=cfg.seed * 1009 + k)
        res = retrieve(cap, k, ropts, pre_dispersion=cd)
        fields[k] = res.field.samples
        results.append(res)
    clock.lap("retrieval")

    eq = mimo_equalize(Waveform(grid, fields), split.h_md, cfg.equalizer_config(), frame)
    bits = demap_qpsk(eq.symbols)
    exclude = ~np.repeat(frame.data_mask(), 2)
    ber = compute_ber(bits, frame.bits, exclude=exclude, pilot_percentage=spec.pilot_percentage)
    clock.lap("equalization")
    return Recovery(split, pos, val, results, fields, eq, ber)


def run_scenario(config: ScenarioConfig | dict, out_dir=None, keep_fields: bool = False) -> ReportBundle:
    """Run the full chain and write a report directory.

    Stages: frame and waveform, synthetic channel and noise, two-path
    intensity capture, time alignment, transfer-matrix estimation on the
    TS, CD/modal split, pilot propagation, payload retrieval, MIMO
    equalization and BER.

    Files written into ``out_dir`` (default ``config["output_dir"]``):

    ``config.json``, ``channel_true.mdmp``, ``channel_est.mdmp``,
    ``capture.mdmp``, ``mdl_history.csv``, ``tap_heatmap.csv``,
    ``impulse_response_true.csv``, ``impulse_response_pre_cd.csv``,
    ``impulse_response_post_cd.csv``, ``residual_history.csv``,
    ``constellation.csv``, ``equalizer_taps.mdmp``, ``ber.json`` and
    ``manifest.json`` (config hash, seed, profile, pinned values, summary
    metrics, SHA-256 of every other file and wall-clock timings per stage).
    """
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(config)
    out = Path(out_dir if out_dir is not None else cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    clock = _Clock()
    sim = simulate(cfg, clock)
    frame, grid, cap, h_true = sim.frame, sim.grid, sim.capture, sim.h_true
    spec, params = frame.spec, cfg.channel_params()
    est = estimate_transfer_matrix(cap, frame, cfg.estimator_options(), cfg["signal"]["rolloff"],
                                   cfg["signal"]["pulse"])
    clock.lap("estimation")
    rec = recover(cfg, sim, est.h, clock)
    split, pos, results, eq, ber = rec.split, rec.pilot_positions, rec.retrieval, rec.equalized, rec.ber
    fields, lag = rec.fields, sim.lag

    # artifacts -----------------------------------------------------------------
    (out / "config.json").write_text(cfg.snapshot_json() + "\n")
    dumpfile.save_transfer_matrix(h_true, out / "channel_true.mdmp")
    dumpfile.save_transfer_matrix(est.h, out / "channel_est.mdmp")
    dumpfile.save_capture(cap, out / "capture.mdmp")
    export_mdl_history(est.mdl_history, out / "mdl_history.csv", est.fit_residuals)
    export_tap_heatmap(est.h, out / "tap_heatmap.csv")
    export_impulse_response_csv(h_true, out / "impulse_response_true.csv")
    export_impulse_response_csv(est.h, out / "impulse_response_pre_cd.csv")
    export_impulse_response_csv(split.h_md, out / "impulse_response_post_cd.csv")
    export_residual_history(results, out / "residual_history.csv")
    data = frame.data_mask()
    export_constellation(eq.symbols[:, data], out / "constellation.csv")
    dumpfile.save_taps(eq.taps, out / "equalizer_taps.mdmp", grid,
                       {"mode": cfg["equalizer"]["mode"], "decimation_phase": eq.phase})
    ber.write(out / "ber.json")
    if keep_fields:
        dumpfile.save_waveform(Waveform(grid, fields), out / "retrieved_fields.mdmp")
    clock.lap("artifacts")

    artifacts = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "profile": cfg.profile,
        "pilot_group_size": spec.pilot_group_size,
        "pilot_percentage": spec.pilot_percentage,
        "cd_psnm": params.cd_psnm,
        "n_samples": grid.n_samples,
        "alignment_lag": lag,
        "results": {
            "mean_ber": ber.mean,
            "ber_variance": ber.variance,
            "total_bits": ber.total_bits,
            "mdl_true_db": mdl_of(h_true),
            "mdl_est_db": float(est.mdl_history[-1]),
            "estimator_converged": est.converged,
            "final_fit_residual": float(est.fit_residuals[-1]),
            "cd_est_psnm": split.h_cd.accumulated_dispersion,
            "n_pilot_samples": int(pos.size),
            "retrieval_residuals": [float(r.residual) for r in results],
            "retrieval_iterations": [int(r.iterations_used) for r in results],
        },
        "artifacts": {name: _sha256(out / name) for name in artifacts},
        "timings_s": clock.timings,
    }
    (out / "manifest.json").write_text(json.dumps(_walk(manifest, lambda p, v: _json_number(v)),
                                                  indent=2, sort_keys=True) + "\n")
    return ReportBundle(out, manifest, ber, {"simulation": sim, "estimation": est, "recovery": rec})


def _run_point(args):
    cfg_dict, out = args
    bundle = run_scenario(ScenarioConfig.from_dict(cfg_dict), out)
    return bundle.manifest


def sweep(config: ScenarioConfig | dict, axis: str, values, out_dir=None, workers: int | None = None) -> Path:
    """Run one scenario per value of ``axis`` and aggregate the results.

    ``axis`` is a dotted key (``frame.pilot_percentage``) or a bare key that
    names exactly one parameter. Point ``i`` runs with seed ``seed + i`` in
    ``out_dir/point_<i>``. Writes and returns ``out_dir/sweep.csv`` with
    columns ``value, seed, mean_ber, ber_variance, total_bits,
    estimator_converged, final_fit_residual, mdl_est_db, mean_retrieval_residual``.
    """
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(config)
    axis = _resolve_axis(cfg, axis)
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value", axis)
    current = _get(cfg.data, axis)
    if isinstance(current, (bool, str)) or not isinstance(current, (int, float)):
        raise ConfigError("sweep axis must be a numeric parameter", axis)
    out = Path(out_dir if out_dir is not None else cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i, v in enumerate(values):
        point = cfg.with_value(axis, v).with_value("seed", cfg.seed + i)
        jobs.append((_walk(point.data, lambda p, x: _json_number(x)), str(out / f"point_{i:03d}")))
    n_workers = cfg["workers"] if workers is None else int(workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            manifests = list(pool.map(_run_point, jobs))
    else:
        manifests = [_run_point(j) for j in jobs]
    path = out / "sweep.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "seed", "mean_ber", "ber_variance", "total_bits", "estimator_converged",
                    "final_fit_residual", "mdl_est_db", "mean_retrieval_residual"])
        for v, m in zip(values, manifests):
            r = m["results"]
            w.writerow([repr(v), m["seed"], repr(r["mean_ber"]), repr(r["ber_variance"]), r["total_bits"],
                        int(r["estimator_converged"]), repr(r["final_fit_residual"]),
                        repr(r["mdl_est_db"]), repr(float(np.mean(r["retrieval_residuals"])))])
    return path


def _resolve_axis(cfg: ScenarioConfig, axis: str) -> str:
    if "." in axis:
        try:
            _get(cfg.data, axis)
        except (KeyError, TypeError):
            raise ConfigError("unknown key", axis) from None
        return axis
    hits = [f"{block}.{axis}" for block, v in cfg.data.items() if isinstance(v, dict) and axis in v]
    if axis in cfg.data and not isinstance(cfg.data[axis], dict):
        hits.append(axis)
    if len(hits) != 1:
        raise ConfigError("unknown key" if not hits else f"ambiguous, use one of {hits}", axis)
    return hits[0]
