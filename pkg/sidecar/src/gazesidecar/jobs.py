"""Job file parsing and the three export tasks.

A job is one JSON document:

    {
      "tasks": ["segment", "cam", "lpips"],
      "images": ["fixtures/img_000.png", ...],
      "output_dir": "exports",
      "segment_model": "builtin",
      "cam_methods": ["GradCAM", "EigenCAM"],
      "cam_checkpoint": "scorer.pt",
      "cam_layer": "last",
      "lpips_pairs": [{"image_id": ..., "method": ..., "human": ..., "machine": ...}],
      "workers": 1
    }

Outputs land under output_dir in the pipeline exchange formats:
seg/<image_id>.png, xai/<method>/<image_id>.png (+ _hue.png + .json),
lpips.jsonl. Per-pair perceptual failures go to lpips_errors.jsonl and the
job continues.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .cams import CAM_METHODS, compute_cam
from .lpips import PerceptualDistance
from .models import load_scorer, load_segnet, segment_builtin, segment_with_net
from .standardize import (
    rank_cdf,
    read_heatmap_image,
    read_rgb,
    write_heatmap,
    write_hue_visualization,
    write_segmentation,
)

TASKS = ("segment", "cam", "lpips")


class JobError(Exception):
    pass


@dataclass
class SidecarJob:
    tasks: list
    output_dir: Path
    images: list = field(default_factory=list)
    segment_model: str = "builtin"
    cam_methods: list = field(default_factory=lambda: list(CAM_METHODS))
    cam_checkpoint: str | None = None
    cam_layer: str = "last"
    lpips_pairs: list = field(default_factory=list)
    workers: int = 1
    base_dir: Path = Path(".")

    def resolve(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p


def load_job(path) -> SidecarJob:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise JobError(f"cannot read job file {path}: {exc}") from exc

    tasks = raw.get("tasks") or []
    unknown = [t for t in tasks if t not in TASKS]
    if not tasks or unknown:
        raise JobError(f"tasks must be a non-empty subset of {TASKS}, got {tasks}")
    if "output_dir" not in raw:
        raise JobError("job field 'output_dir' is required")

    job = SidecarJob(
        tasks=tasks,
        output_dir=Path(raw["output_dir"]),
        images=list(raw.get("images") or []),
        segment_model=raw.get("segment_model", "builtin"),
        cam_methods=list(raw.get("cam_methods") or CAM_METHODS),
        cam_checkpoint=raw.get("cam_checkpoint"),
        cam_layer=raw.get("cam_layer", "last"),
        lpips_pairs=list(raw.get("lpips_pairs") or []),
        workers=int(raw.get("workers", 1)),
        base_dir=path.parent,
    )
    if not job.output_dir.is_absolute():
        job.output_dir = job.base_dir / job.output_dir

    bad = [m for m in job.cam_methods if m not in CAM_METHODS]
    if bad:
        raise JobError(f"unknown CAM methods: {', '.join(bad)}")
    if ("segment" in tasks or "cam" in tasks) and not job.images:
        raise JobError("segment/cam tasks need a non-empty 'images' list")
    if "cam" in tasks and not job.cam_checkpoint:
        raise JobError("cam task requires a perception checkpoint ('cam_checkpoint')")
    if "lpips" in tasks and not job.lpips_pairs:
        raise JobError("lpips task needs a non-empty 'lpips_pairs' list")
    if job.workers < 1:
        raise JobError("workers must be >= 1")
    return job


def _image_entries(job: SidecarJob):
    entries = []
    for value in job.images:
        path = job.resolve(value)
        if not path.exists():
            raise JobError(f"input image {path} does not exist")
        entries.append((path.stem, path))
    return sorted(entries)


def run_segment(job: SidecarJob) -> dict:
    out = job.output_dir / "seg"
    out.mkdir(parents=True, exist_ok=True)
    net = None
    if job.segment_model != "builtin":
        net = load_segnet(job.resolve(job.segment_model))

    def one(entry):
        image_id, path = entry
        rgb = read_rgb(path)
        labels = segment_builtin(rgb) if net is None else segment_with_net(net, rgb)
        write_segmentation(out / f"{image_id}.png", labels)
        return image_id

    entries = _image_entries(job)
    if job.workers == 1 or net is not None:
        done = [one(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=job.workers) as pool:
            done = list(pool.map(one, entries))
    return {"segment": len(done)}


def run_cam(job: SidecarJob) -> dict:
    ckpt = job.resolve(job.cam_checkpoint)
    local = threading.local()

    def scorer():
        if not hasattr(local, "model"):
            local.model = load_scorer(ckpt)
        return local.model

    methods = sorted(set(job.cam_methods))
    for method in methods:
        (job.output_dir / "xai" / method).mkdir(parents=True, exist_ok=True)

    def one(entry):
        image_id, path = entry
        rgb = read_rgb(path)
        for method in methods:
            raw = compute_cam(scorer(), method, rgb, layer_name=job.cam_layer)
            normalized = rank_cdf(raw)
            mdir = job.output_dir / "xai" / method
            write_heatmap(mdir / f"{image_id}.png", normalized, image_id)
            write_hue_visualization(mdir / f"{image_id}_hue.png", normalized)
        return image_id

    entries = _image_entries(job)
    if job.workers == 1:
        done = [one(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=job.workers) as pool:
            done = list(pool.map(one, entries))
    return {"cam": len(done) * len(methods)}


def run_lpips(job: SidecarJob) -> dict:
    job.output_dir.mkdir(parents=True, exist_ok=True)
    metric = PerceptualDistance()
    scores = []
    errors = []
    for pair in job.lpips_pairs:
        try:
            image_id = pair["image_id"]
            method = pair["method"]
            a = read_heatmap_image(job.resolve(pair["human"]))
            b = read_heatmap_image(job.resolve(pair["machine"]))
            scores.append((image_id, method, metric.distance(a, b)))
        except (KeyError, OSError, ValueError) as exc:
            errors.append({"pair": pair, "error": str(exc)})

    with open(job.output_dir / "lpips.jsonl", "w", encoding="utf-8") as fh:
        for image_id, method, score in sorted(scores):
            fh.write(json.dumps(
                {"image_id": image_id, "method": method, "lpips": round(score, 6)},
                separators=(",", ":"),
            ) + "\n")
    if errors:
        with open(job.output_dir / "lpips_errors.jsonl", "w", encoding="utf-8") as fh:
            for err in errors:
                fh.write(json.dumps(err, sort_keys=True) + "\n")
    return {"lpips": len(scores), "lpips_errors": len(errors)}


def run_job(job: SidecarJob) -> dict:
    job.output_dir.mkdir(parents=True, exist_ok=True)
    result = {}
    if "segment" in job.tasks:
        result.update(run_segment(job))
    if "cam" in job.tasks:
        result.update(run_cam(job))
    if "lpips" in job.tasks:
        result.update(run_lpips(job))
    return result
