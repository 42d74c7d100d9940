"""Command line entry point: ``gammalab run | list-experiments | validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import GammalabError
from .experiments import EXPERIMENTS, ExperimentConfig, run, validate
from .experiments.runner import THEOREM_TAGS


def _parser():
    ap = argparse.ArgumentParser(prog="gammalab", description="Moving-anisotropy convergence experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment and write its report")
    r.add_argument("--config", required=True, help="JSON config file")
    r.add_argument("--experiment", help="E1..E6 or experiment name; overrides the config entry")
    r.add_argument("--out", default=None, help="output directory (default: config output.dir or '.')")
    r.add_argument("--format", choices=("csv", "json"), default=None)

    sub.add_parser("list-experiments", help="list experiment codes")

    v = sub.add_parser("validate", help="dry run: resolvability and class tags")
    v.add_argument("--config", required=True)
    return ap


def _load(path, experiment=None):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if experiment:
        data["experiment"] = experiment
    return ExperimentConfig.from_dict(data)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "list-experiments":
            for code, name in EXPERIMENTS.items():
                print(f"{code}\t{name}\t{THEOREM_TAGS[code]}")
            return 0
        if args.command == "validate":
            info = validate(_load(args.config))
            print(json.dumps(info, indent=2))
            return 0
        cfg = _load(args.config, args.experiment)
        out = args.out or (cfg.output or {}).get("dir") or "."
        fmt = args.format or (cfg.output or {}).get("format", "csv")
        report = run(cfg, out_dir=out, fmt=fmt)
        print(f"{cfg.experiment}: {len(report.rows)} rows -> {out}/{cfg.experiment}.{fmt}")
        return 0
    except (GammalabError, OSError, json.JSONDecodeError) as exc:
        print(f"gammalab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
