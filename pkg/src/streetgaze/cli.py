"""Command-line entry point.

Subcommands: ingest, heatmap, metrics, group, stratify, compare, report,
serve, simulate, run. Stage commands execute the pipeline up to and
including their stage against a manifest; ``run`` executes everything.
Exit codes: 0 success, 2 validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import StreetgazeError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _add_manifest(parser):
    parser.add_argument("--manifest", required=True, help="pipeline manifest YAML")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streetgaze",
        description="gaze-based street view safety perception pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in [
        ("ingest", "parse gaze logs and classify fixations"),
        ("heatmap", "build aggregated attention heatmaps"),
        ("metrics", "compute object-attention metric tables"),
        ("group", "group images safe/unsafe from the comparison log"),
        ("compare", "score machine heatmaps against human attention"),
        ("report", "assemble the report bundle"),
        ("run", "execute the full pipeline"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _add_manifest(p)

    p = sub.add_parser("stratify", help="high/medium/low sampling from dual scores")
    p.add_argument("--scores", required=True, help="scores CSV (image_id,global,sweden)")
    p.add_argument("--per-stratum", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("serve", help="run the survey HTTP service")
    p.add_argument("--config", required=True, help="service config YAML")

    p = sub.add_parser("simulate", help="generate a synthetic study bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=8)
    p.add_argument("--participants", type=int, default=5)
    p.add_argument("--pairs", type=int, default=10)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--bias", default="",
        help="comma-separated class:weight saliency bias, e.g. '20:1.0'",
    )
    return parser


def _stage_chain(command: str, manifest_path: str) -> dict:
    from . import pipeline as pl

    manifest = pl.load_manifest(manifest_path)
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)

    segs = pl.load_segmentations(manifest)
    if command == "group":
        labels = pl.stage_group(manifest, out)
        return {"groups": len(labels)}

    fixations, diags = pl.stage_ingest(manifest, segs, out)
    if command == "ingest":
        return {"streams": sum(len(v) for v in fixations.values()),
                "diagnostics": len(diags)}
    heatmaps = pl.stage_heatmaps(manifest, segs, fixations, out)
    if command == "heatmap":
        return {"heatmaps": len(heatmaps)}
    vectors = pl.stage_metrics(manifest, segs, heatmaps, out)
    if command == "metrics":
        return {"images": len(vectors["mor"])}
    if command == "compare":
        report = pl.stage_similarity(manifest, segs, heatmaps, out)
        return {"similarity": report is not None}
    # report == run remainder
    labels = pl.stage_group(manifest, out)
    rankings = pl.group_rankings(vectors, labels)
    report = pl.stage_similarity(manifest, segs, heatmaps, out)
    from .report import write_reports

    return write_reports(manifest, out, segs, heatmaps, vectors, labels, rankings, report)


def _parse_bias(text: str) -> dict:
    bias = {}
    if not text:
        return bias
    for part in text.split(","):
        cls, _, weight = part.partition(":")
        try:
            bias[int(cls)] = float(weight) if weight else 1.0
        except ValueError as exc:
            raise ValidationError(f"bad bias spec {part!r}: {exc}") from exc
    return bias


def run_command(args) -> int:
    if args.command in ("ingest", "heatmap", "metrics", "group", "compare", "report"):
        result = _stage_chain(args.command, args.manifest)
        print(json.dumps({"command": args.command, **result}, sort_keys=True))
        return EXIT_OK

    if args.command == "run":
        from . import pipeline as pl

        summary = pl.cmd_run(pl.load_manifest(args.manifest))
        print(json.dumps({"command": "run", **summary}, sort_keys=True))
        return EXIT_OK

    if args.command == "stratify":
        from .formats import read_scores_csv
        from .metrics import stratify_by_score

        scores = read_scores_csv(args.scores)
        result = stratify_by_score(scores, per_stratum=args.per_stratum, seed=args.seed)
        payload = {
            "high": result.high,
            "medium": result.medium,
            "low": result.low,
            "pool_sizes": {k: len(v) for k, v in sorted(result.pools.items())},
        }
        Path(args.out).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        print(json.dumps({"command": "stratify", "out": args.out,
                          **payload["pool_sizes"]}, sort_keys=True))
        return EXIT_OK

    if args.command == "serve":
        import uvicorn

        from .survey import build_from_config, load_service_config

        config = load_service_config(args.config)
        app = build_from_config(config)
        uvicorn.run(app, host="0.0.0.0", port=config.port, log_level="info")
        return EXIT_OK

    if args.command == "simulate":
        from .simulate import SimulateConfig, run_simulation

        cfg = SimulateConfig(
            out_dir=args.out,
            images=args.images,
            participants=args.participants,
            pairs_per_participant=args.pairs,
            width=args.width,
            height=args.height,
            bias=_parse_bias(args.bias),
            seed=args.seed,
        )
        summary = run_simulation(cfg)
        print(json.dumps({"command": "simulate", **summary}, sort_keys=True))
        return EXIT_OK

    raise ValidationError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run_command(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StreetgazeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
