"""Drive the whole chain through the scenario runner, the way the CLI does.

A short frame keeps it to well under a minute. The same thing from the
shell is ``python3 -m mdmpr run --config my.json --out runs/demo``.
"""

import csv
import json
import tempfile
from pathlib import Path

from mdmpr.runner import ScenarioConfig, run_scenario, sweep

raw = {
    "frame": {"ts_length": 512, "payload_length": 2048},
    "channel": {"mdl_db": 1.0},
    "estimator": {"tap_length": 16, "n_outer_iterations": 8},
}
out = Path(tempfile.mkdtemp(prefix="mdmpr_demo_"))

cfg = ScenarioConfig.from_dict(raw, profile="btb", seed=2, output_dir=str(out / "single"))
bundle = run_scenario(cfg)
print(f"report in {bundle.path}")
res = bundle.manifest["results"]
print(f"mean BER {res['mean_ber']:.2e} over {res['total_bits']} bits")
print(f"MDL true {res['mdl_true_db']:.2f} dB, estimated {res['mdl_est_db']:.2f} dB")
print("stage timings (s):", json.dumps({k: round(v, 1) for k, v in bundle.manifest["timings_s"].items()}))

# A sweep gives one report directory per value plus a summary table.
table = sweep(cfg, "frame.pilot_percentage", [0.1, 0.2], out_dir=out / "sweep")
with table.open() as fh:
    for row in csv.DictReader(fh):
        print(f"pilots {float(row['value']):.0%}: mean BER {float(row['mean_ber']):.2e}")
