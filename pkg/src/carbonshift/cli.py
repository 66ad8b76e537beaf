"""``carbonshift`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import synth
from .experiments import COMMANDS, ExperimentConfig

log = logging.getLogger("carbonshift")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carbonshift", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment config JSON")
        sp.add_argument("--out", help="output directory (overrides config)")
        sp.add_argument("--parallelism", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--global-avg", type=float, dest="global_avg")
    sp = sub.add_parser("synth", help="write the synthetic world corpus and a config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--hours", type=int, default=synth.HOURS_PER_YEAR)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "synth":
        path = synth.write_world(args.out, seed=args.seed, hours=args.hours)
        print(path / "config.json")
        return 0
    try:
        config = ExperimentConfig.from_file(
            args.config,
            out=args.out,
            parallelism=args.parallelism,
            seed=args.seed,
            global_avg=args.global_avg,
        )
        config = config.with_overrides(kind=args.command)
        config.validate()
        result = COMMANDS[args.command](config)
    except (OSError, ValueError, RuntimeError) as exc:
        log.error("%s", exc)
        return 1
    if "written" in result:
        for name in result["written"]:
            print(name)
    else:
        print(json.dumps(result.get("status", {}), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
