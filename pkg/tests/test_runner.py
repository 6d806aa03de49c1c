import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from mdmpr.__main__ import EXIT_CONFIG, main
from mdmpr.runner import ConfigError, ScenarioConfig, load_config, run_scenario, sweep

# An almost ideal channel on a short frame: every stage runs, in a few seconds.
TINY = {
    "frame": {"ts_length": 512, "payload_length": 1024},
    "channel": {"intra_group_coupling": 0.0, "inter_group_coupling_db": "-inf", "mdl_db": 0.0},
    "estimator": {"tap_length": 16, "n_outer_iterations": 2, "initial_matrix": "identity"},
}


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


# -- configuration -------------------------------------------------------------

def test_defaults_expand_every_block():
    cfg = ScenarioConfig.from_dict({})
    assert cfg.profile == "btb"
    assert set(cfg.data) >= {"frame", "signal", "channel", "receiver", "retrieval", "estimator", "equalizer"}
    assert cfg.frame_spec().pilot_group_size == 1
    assert cfg.channel_params().cd_psnm == 0.0


@pytest.mark.parametrize("raw, path", [
    ({"channel": {"foo": 1}}, "channel.foo"),
    ({"bogus": {}}, "bogus"),
    ({"frame": {"ts_length": "long"}}, "frame.ts_length"),
    ({"frame": {"pilot_percentage": 1.5}}, "frame"),
    ({"retrieval": {"method": "hio"}}, "retrieval.method"),
    ({"seed": -1}, "seed"),
    ({"receiver": {"d_psnm": 0}}, "receiver.d_psnm"),
    ({"profile": "metro"}, "profile"),
])
def test_invalid_configs_name_the_path(raw, path):
    with pytest.raises(ConfigError) as info:
        ScenarioConfig.from_dict(raw)
    assert info.value.path == path
    doc = json.loads(info.value.to_json())
    assert doc["error"] == "invalid_config" and doc["path"] == path


def test_profile_pins():
    span = ScenarioConfig.from_dict({}, profile="span_30km")
    assert span.frame_spec().pilot_group_size == 3
    assert span.channel_params().cd_psnm == pytest.approx(510.0)
    assert span.channel_params().dgd_compensated
    with pytest.raises(ConfigError) as info:
        ScenarioConfig.from_dict({"frame": {"pilot_group_size": 3}}, profile="btb")
    assert info.value.path == "frame.pilot_group_size"
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"channel": {"cd_psnm": 100.0}}, profile="span_30km")
    # the custom profile pins nothing
    ScenarioConfig.from_dict({"frame": {"pilot_group_size": 2}, "channel": {"cd_psnm": 100.0}},
                             profile="custom")


def test_json_round_trip_and_hash(tmp_path):
    cfg = ScenarioConfig.from_dict(TINY, seed=4)
    again = load_config(_write(tmp_path, json.loads(cfg.to_json())))
    assert again.data == cfg.data
    assert again.config_hash() == cfg.config_hash()
    assert cfg.with_value("seed", 5).config_hash() != cfg.config_hash()
    assert cfg.channel_params().inter_group_coupling_db == -np.inf


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="no such file"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(bad)


# -- CLI -----------------------------------------------------------------------

def test_cli_unknown_key_exit_code_and_json(tmp_path):
    p = _write(tmp_path, {"channel": {"foo": 1}})
    proc = subprocess.run([sys.executable, "-m", "mdmpr", "validate", "--config", str(p)],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    err = json.loads(proc.stderr)
    assert err == {"error": "invalid_config", "message": "unknown key", "path": "channel.foo"}


def test_cli_validate_prints_expanded_config(tmp_path, capsys):
    p = _write(tmp_path, {"frame": {"payload_length": 4096}})
    assert main(["validate", "--config", str(p), "--profile", "span_30km", "--seed", "7"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["profile"] == "span_30km" and out["seed"] == 7
    assert out["frame"]["pilot_group_size"] == 3


def test_cli_bad_sweep_values(tmp_path, capsys):
    p = _write(tmp_path, TINY)
    assert main(["sweep", "--config", str(p), "--param", "frame.pilot_percentage", "--values", "0.1,x"]) == EXIT_CONFIG
    assert json.loads(capsys.readouterr().err)["path"] == "--values"
    assert main(["sweep", "--config", str(p), "--param", "frame.nothing", "--values", "1"]) == EXIT_CONFIG


def test_cli_inspect_missing_path(tmp_path, capsys):
    assert main(["inspect", str(tmp_path / "nothing.mdmp")]) == EXIT_CONFIG
    assert json.loads(capsys.readouterr().err)["error"] == "bad_input"


# -- runs ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = ScenarioConfig.from_dict(TINY, seed=1, output_dir=str(out))
    return run_scenario(cfg)


def test_run_writes_all_artifacts(tiny_run):
    names = {p.name for p in tiny_run.path.iterdir()}
    expected = {"config.json", "manifest.json", "ber.json", "channel_true.mdmp", "channel_est.mdmp",
                "capture.mdmp", "equalizer_taps.mdmp", "mdl_history.csv", "tap_heatmap.csv",
                "impulse_response_true.csv", "impulse_response_pre_cd.csv", "impulse_response_post_cd.csv",
                "residual_history.csv", "constellation.csv"}
    assert expected <= names
    man = tiny_run.manifest
    assert set(man["artifacts"]) == expected - {"manifest.json"}
    assert all(v >= 0 for v in man["timings_s"].values())
    assert tiny_run.ber.mean == 0.0
    assert man["results"]["total_bits"] == tiny_run.ber.total_bits >= 9000
    with (tiny_run.path / "mdl_history.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:2] == ["iteration", "mdl_db"] and len(rows) == 1 + 3


def test_run_is_reproducible(tiny_run, tmp_path):
    cfg = load_config(tiny_run.path / "config.json", output_dir=str(tmp_path / "again"))
    again = run_scenario(cfg)
    assert again.manifest["artifacts"] == tiny_run.manifest["artifacts"]
    assert again.manifest["config_hash"] == tiny_run.manifest["config_hash"]


def test_inspect_report_and_dump(tiny_run, capsys):
    assert main(["inspect", str(tiny_run.path)]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 1
    assert main(["inspect", str(tiny_run.path / "channel_true.mdmp")]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["kind"] == "matrix" and d["rows"] == 6
    assert main(["inspect", str(tiny_run.path / "constellation.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["columns"] == ["re", "im", "tributary"]


def test_span_profile_manifest(tmp_path):
    raw = {"frame": {"ts_length": 512, "payload_length": 1024},
           "estimator": {"tap_length": 24, "n_outer_iterations": 1},
           "retrieval": {"max_iterations": 50}}
    cfg = ScenarioConfig.from_dict(raw, profile="span_30km", output_dir=str(tmp_path))
    man = run_scenario(cfg).manifest
    assert man["profile"] == "span_30km"
    assert man["pilot_group_size"] == 3
    assert man["cd_psnm"] == pytest.approx(510.0)


def test_sweep_rows_follow_values(tmp_path):
    cfg = ScenarioConfig.from_dict(TINY)
    path = sweep(cfg, "pilot_percentage", [0.2, 0.25, 0.3], out_dir=tmp_path / "sw", workers=2)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["value"]) for r in rows] == [0.2, 0.25, 0.3]
    assert [int(r["seed"]) for r in rows] == [0, 1, 2]
    assert all(float(r["mean_ber"]) == 0.0 for r in rows)
    assert (tmp_path / "sw" / "point_002" / "manifest.json").exists()
