"""Command-line entry point ``mcmp2``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import driver, kernels
from .fixtures import FIXTURES, write_fixture


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file of 'key value' lines")
    p.add_argument("--spinors", help="SPINOR-TEXT input file")
    stop = p.add_mutually_exclusive_group()
    stop.add_argument("--steps", type=int, help="total MC steps over all workers")
    stop.add_argument("--target-rel-err", type=float,
                      help="stop once sigma_bar/|E2| falls below this value")
    p.add_argument("--walkers", type=int, help="electron-pair walkers m (default 8)")
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--blocksize", type=int, help="blocking size N_b (default 100)")
    p.add_argument("--burnin", type=int, help="burn-in steps (default 1000)")
    p.add_argument("--checkpoint", help="checkpoint file")
    p.add_argument("--checkpoint-interval", type=int,
                   help="steps per worker between checkpoints (default 10000)")
    p.add_argument("--trace", help="trace file: 'N I_N sigma_bar' per completed block")
    p.add_argument("--weight", nargs=5, action="append", metavar=("EL", "C1", "Z1", "C2", "Z2"),
                   help="weight parameters for an element; repeatable")
    p.add_argument("--no-adapt", action="store_true", help="keep the initial step size")
    p.add_argument("--json", action="store_true", help="print the report as JSON")


def _config_from_args(args) -> driver.RunConfig:
    flags = {k: getattr(args, k) for k in ("spinors", "steps", "target_rel_err", "walkers",
                                            "seed", "workers", "blocksize", "burnin",
                                            "checkpoint", "checkpoint_interval", "trace")}
    for k in ("spinors", "checkpoint", "trace"):
        if flags[k] is not None:
            flags[k] = os.path.abspath(flags[k])
    if args.no_adapt:
        flags["adapt"] = False
    if args.weight:
        try:
            flags["weights"] = {w[0]: ((float(w[1]), float(w[2])), (float(w[3]), float(w[4])))
                                for w in args.weight}
        except ValueError:
            raise driver.ConfigError("non-numeric --weight parameter") from None
    return driver.parse_config(args.config, **flags)


def _print_report(report, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report.to_dict(), indent=1))
    else:
        print(report.format())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mcmp2", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("run", help="start a sampling run"))
    p = sub.add_parser("resume", help="continue a run from its checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", action="store_true")
    p = sub.add_parser("merge", help="combine results of checkpoint files")
    p.add_argument("files", nargs="+")
    p.add_argument("--json", action="store_true")
    p = sub.add_parser("fixture", help="write a reference spinor file and its oracle E2")
    p.add_argument("name", choices=sorted(FIXTURES))
    p.add_argument("--dir", default=".")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = _config_from_args(args)
            logging.getLogger("mcmp2").info("kernel backend: %s", kernels.BACKEND)
            _print_report(driver.run(cfg), args.json)
        elif args.command == "resume":
            _print_report(driver.resume(args.checkpoint), args.json)
        elif args.command == "merge":
            _print_report(driver.merge_files(args.files), args.json)
        elif args.command == "fixture":
            path, e2 = write_fixture(args.name, args.dir)
            print(f"{path} E2 = {e2:.12e}")
            print(f"weights: {path.with_suffix('.cfg')} (use with --config)")
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"mcmp2: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
