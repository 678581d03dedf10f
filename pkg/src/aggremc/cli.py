"""Command line entry point: ``aggremc pipeline <config>`` or ``aggremc <stage> <config>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .pipeline import STAGES, StageError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aggremc", description="Aggregate query estimation over citation graphs.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("pipeline",) + STAGES:
        s = sub.add_parser(name, help="run all stages" if name == "pipeline" else f"run the {name} stage")
        s.add_argument("config", help="key = value config file")
        s.add_argument("--mode", choices=pipeline.MODES)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
    conv = sub.add_parser("convert", help="convert a Planetoid or LINQS release into tab-separated files")
    conv.add_argument("source")
    conv.add_argument("dest")
    conv.add_argument("--format", default="auto", choices=("auto", "planetoid", "linqs"))
    conv.add_argument("--name", default="cora")
    conv.add_argument("--observed", type=int, default=640)
    conv.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "convert":
        from .datasets import convert
        try:
            paths = convert(args.source, args.dest, args.format, args.name, args.observed, args.seed)
        except Exception as exc:  # noqa: BLE001
            print(f"aggremc: convert failed: {exc}", file=sys.stderr)
            return 2
        for key, path in paths.items():
            print(f"{key}\t{path}")
        return 0

    overrides = {"mode": args.mode, "seed": args.seed,
                 "out": str(Path(args.out).resolve()) if args.out else None}
    try:
        cfg = pipeline.load_config(args.config, overrides)
    except (OSError, ValueError) as exc:
        print(f"aggremc: config: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "pipeline":
            report = pipeline.run_pipeline(cfg)
        else:
            result = pipeline.run_stage(args.command, cfg)
            report = result if args.command == "evaluate" else None
            if report is None:
                print(result)
    except StageError as exc:
        print(f"aggremc: {exc}", file=sys.stderr)
        return 1
    if report is not None:
        sys.stdout.write(pipeline.aggregates.format_report([report]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
