"""Command line front end: ``python3 -m mdmpr <verb> ...``.

Verbs:

run       one scenario, writes a report directory
sweep     one scenario per value of a parameter, plus sweep.csv
inspect   JSON summary of one artifact or of a whole report directory
validate  check a config; prints the expanded config

Errors in the configuration exit with status 2 and print a JSON object
``{"error": "invalid_config", "path": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import dumpfile
from .runner import ConfigError, ScenarioConfig, load_config, run_scenario, sweep

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdmpr", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("--config", required=needs_config, help="scenario JSON file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int, help="worker processes")
        sp.add_argument("--profile", choices=["btb", "span_30km"], help="scenario profile")

    common(sub.add_parser("run", help="run one scenario"), needs_config=False)
    sw = sub.add_parser("sweep", help="sweep one parameter")
    common(sw, needs_config=False)
    sw.add_argument("--param", required=True, help="dotted key, e.g. frame.pilot_percentage")
    sw.add_argument("--values", required=True, help="comma-separated values")
    ins = sub.add_parser("inspect", help="describe an artifact")
    ins.add_argument("path")
    common(sub.add_parser("validate", help="check a config"), needs_config=False)
    return p


def _config(args) -> ScenarioConfig:
    over = {"seed": args.seed, "output_dir": args.out, "workers": args.workers, "profile": args.profile}
    if args.config:
        return load_config(args.config, **over)
    return ScenarioConfig.from_dict({}, **over)


def _parse_values(text: str) -> list:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(json.loads(item))
        except json.JSONDecodeError:
            raise ConfigError(f"not a number: {item!r}", "--values") from None
    return out


def _inspect(path: Path) -> dict:
    if path.is_dir():
        man = path / "manifest.json"
        if not man.exists():
            raise FileNotFoundError(f"{path} has no manifest.json")
        return json.loads(man.read_text())
    if path.suffix == ".csv":
        with path.open() as fh:
            rows = list(csv.reader(fh))
        return {"kind": "csv", "columns": rows[0] if rows else [], "rows": max(len(rows) - 1, 0)}
    if path.suffix == ".json":
        return json.loads(path.read_text())
    return dumpfile.describe(path)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.verb == "inspect":
            print(json.dumps(_inspect(Path(args.path)), indent=2, sort_keys=True, default=str))
            return 0
        cfg = _config(args)
        if args.verb == "validate":
            print(cfg.to_json())
            return 0
        if args.verb == "run":
            bundle = run_scenario(cfg)
            print(json.dumps({"out": str(bundle.path), **bundle.manifest["results"]}, sort_keys=True))
            return 0
        path = sweep(cfg, args.param, _parse_values(args.values))
        print(json.dumps({"sweep": str(path)}))
        return 0
    except ConfigError as exc:
        print(exc.to_json(), file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, dumpfile.DumpFormatError) as exc:
        print(json.dumps({"error": "bad_input", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
