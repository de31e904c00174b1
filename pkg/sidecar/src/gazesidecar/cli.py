"""Sidecar CLI: run export jobs, mint stand-in checkpoints."""

from __future__ import annotations

import argparse
import json
import sys

from .jobs import JobError, load_job, run_job
from .models import init_scorer, init_segnet


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gaze-sidecar",
        description="model exports in the streetgaze exchange formats",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a job file")
    p.add_argument("--job", required=True, help="job JSON path")

    p = sub.add_parser("init-scorer", help="write a seeded stand-in perception checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("init-segnet", help="write a seeded stand-in segmentation checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            result = run_job(load_job(args.job))
            print(json.dumps({"command": "run", **result}, sort_keys=True))
        elif args.command == "init-scorer":
            init_scorer(args.out, seed=args.seed)
            print(json.dumps({"command": "init-scorer", "out": args.out}))
        elif args.command == "init-segnet":
            init_segnet(args.out, seed=args.seed)
            print(json.dumps({"command": "init-segnet", "out": args.out}))
        return 0
    except JobError as exc:
        print(f"job error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
