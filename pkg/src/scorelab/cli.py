"""Command line entry point: lab <subcommand> --config <file> [options].

Config files are TOML or JSON; both parse to the same resolved form. Each
run writes <out>/<experiment>/<tag>/rows.csv plus manifest.json, and
`lab replay` re-executes a manifest and verifies the rows byte for byte.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from scorelab.lab import ConfigError, run_experiment

EXPERIMENTS = ("schedule_compare", "hard_instance", "verify_lemmas", "girsanov_budget")


def load_config(path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(text)
    if path.endswith(".toml"):
        return tomllib.loads(text.decode("utf-8"))
    # Sniff: TOML first, JSON fallback.
    try:
        return tomllib.loads(text.decode("utf-8"))
    except Exception:
        return json.loads(text)


def _add_run_args(sub):
    sub.add_argument("--config", help="TOML or JSON config file")
    sub.add_argument("--seed", type=int, help="override the config seed")
    sub.add_argument("--out", help="output root directory (default: config output_dir or ./runs)")
    sub.add_argument("--tag", help="run directory name (default: config tag or timestamp)")
    sub.add_argument("--ceiling", type=float, help="empirical-constant ceiling for verify_lemmas")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub = subparsers.add_parser(name.replace("_", "-"), help=f"run the {name} experiment")
        sub.set_defaults(experiment=name)
        _add_run_args(sub)
    replay = subparsers.add_parser("replay", help="re-run a manifest and verify rows.csv bytes")
    replay.add_argument("--manifest", required=True)
    replay.add_argument("--out", help="write the replayed rows here instead of verifying in place")
    return parser


def _run(args) -> int:
    config = load_config(args.config) if args.config else {}
    config["experiment"] = args.experiment
    if args.seed is not None:
        config["seed"] = args.seed
    if args.ceiling is not None:
        config["ceiling"] = args.ceiling
    out_root = args.out or config.pop("output_dir", None) or "runs"
    tag = args.tag or config.pop("tag", None) or time.strftime("%Y%m%dT%H%M%S")
    result = run_experiment(config)
    out_dir = Path(out_root) / result.experiment / tag
    result.write(out_dir)
    print(f"wrote {out_dir / 'rows.csv'} ({len(result.rows)} rows)")
    if result.experiment == "verify_lemmas":
        worst = result.manifest["worst_constant"]
        ceiling = result.manifest["ceiling"]
        print(f"worst empirical constant {worst:.4g} vs ceiling {ceiling:.4g}")
        if not result.manifest["passed"]:
            return 1
    return 0


def _replay(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text())
    result = run_experiment(dict(manifest["config"]))
    fresh = result.rows_csv_bytes()
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "rows.csv").write_bytes(fresh)
        print(f"wrote {out_dir / 'rows.csv'}")
        return 0
    original = (manifest_path.parent / "rows.csv").read_bytes()
    if fresh == original:
        print("replay matches rows.csv byte for byte")
        return 0
    print("replay DIFFERS from rows.csv", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            return _replay(args)
        return _run(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
