"""End-to-end pipeline: manifest loading, stage orchestration, determinism.

A run executes ingest -> heatmaps -> metrics -> grouping -> similarity ->
report against one manifest. Every stage writes its outputs under the
manifest's output directory; given the same manifest and seed the bundle
is byte-identical across runs (files are iterated in sorted order and no
timestamps are embedded).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import ade20k
from .errors import ValidationError
from .formats import (
    hue_from_heatmap,
    parse_comparison_log,
    read_heatmap_png,
    read_segmentation_png,
    write_heatmap_png,
    write_hue_png,
    write_metric_csv,
)
from .gaze import (
    ScreenGeometry,
    classify_fixations_ivt,
    downsample,
    filter_invalid,
    parse_gaze_log,
    serialize_fixations,
    split_streams,
)
from .heatmap import accumulate, aggregate_participants, cdf_normalize
from .metrics import MetricKind, group_images, mean_over_images, moh, mor, morh, top_k
from .similarity import CAM_METHODS, HeatmapPair, MethodScore, cosine_element, ingest_lpips, l2_rms, rank_methods


@dataclass
class PipelineParams:
    seed: int
    sigma_px: float | None = None
    morh_thresholds: list = field(default_factory=lambda: [15.0, 30.0])
    group_threshold: int = 3
    source_hz: float | None = None
    target_hz: float = 60.0
    pixel_pitch_mm: float = 0.27
    viewing_distance_mm: float = 700.0
    velocity_threshold_deg_s: float = 30.0
    min_fixation_ms: float = 60.0


@dataclass
class PipelineManifest:
    base_dir: Path
    segmentation_dir: Path
    gaze_logs: list
    comparison_log: Path
    output_dir: Path
    params: PipelineParams
    images_dir: Path | None = None
    scores_file: Path | None = None
    xai_dirs: dict = field(default_factory=dict)
    lpips_file: Path | None = None

    def gaze_log_paths(self) -> list:
        paths = []
        for pattern in self.gaze_logs:
            p = Path(pattern)
            if p.is_absolute():
                hits = sorted(p.parent.glob(p.name))
            else:
                hits = sorted(self.base_dir.glob(pattern))
            paths.extend(hits)
        return sorted(set(paths))


def load_manifest(path) -> PipelineManifest:
    path = Path(path)
    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: manifest must be a mapping")
    base = path.parent

    def need(key):
        if key not in raw or raw[key] in (None, ""):
            raise ValidationError(f"manifest field {key!r} is required")
        return raw[key]

    def respath(value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    params_raw = dict(raw.get("params") or {})
    if "seed" not in params_raw:
        raise ValidationError("manifest field 'params.seed' is required")
    known = set(PipelineParams.__dataclass_fields__)
    unknown = set(params_raw) - known
    if unknown:
        raise ValidationError(f"unknown params: {', '.join(sorted(unknown))}")
    params = PipelineParams(**params_raw)
    for t in params.morh_thresholds:
        if not 0 <= float(t) <= 150:
            raise ValidationError(f"params.morh_thresholds value {t} outside [0, 150]")

    manifest = PipelineManifest(
        base_dir=base,
        segmentation_dir=respath(need("segmentation_dir")),
        gaze_logs=[str(g) for g in need("gaze_logs")],
        comparison_log=respath(need("comparison_log")),
        output_dir=respath(need("output_dir")),
        params=params,
        images_dir=respath(raw["images_dir"]) if raw.get("images_dir") else None,
        scores_file=respath(raw["scores_file"]) if raw.get("scores_file") else None,
        xai_dirs={m: respath(d) for m, d in (raw.get("xai_dirs") or {}).items()},
        lpips_file=respath(raw["lpips_file"]) if raw.get("lpips_file") else None,
    )
    validate_manifest(manifest)
    return manifest


def validate_manifest(m: PipelineManifest) -> None:
    if not m.segmentation_dir.is_dir():
        raise ValidationError(f"manifest field 'segmentation_dir': {m.segmentation_dir} does not exist")
    if not m.comparison_log.exists():
        raise ValidationError(f"manifest field 'comparison_log': {m.comparison_log} does not exist")
    if m.images_dir is not None and not m.images_dir.is_dir():
        raise ValidationError(f"manifest field 'images_dir': {m.images_dir} does not exist")
    if m.scores_file is not None and not m.scores_file.exists():
        raise ValidationError(f"manifest field 'scores_file': {m.scores_file} does not exist")
    if m.lpips_file is not None and not m.lpips_file.exists():
        raise ValidationError(f"manifest field 'lpips_file': {m.lpips_file} does not exist")
    for method, d in m.xai_dirs.items():
        if method not in CAM_METHODS:
            raise ValidationError(f"manifest field 'xai_dirs': unknown method {method!r}")
        if not d.is_dir():
            raise ValidationError(f"manifest field 'xai_dirs.{method}': {d} does not exist")
    if not m.gaze_log_paths():
        raise ValidationError("manifest field 'gaze_logs': no files matched")


def load_segmentations(m: PipelineManifest) -> dict:
    segs = {}
    for png in sorted(m.segmentation_dir.glob("*.png")):
        segs[png.stem] = read_segmentation_png(png)
    if not segs:
        raise ValidationError(f"no segmentation maps found in {m.segmentation_dir}")
    return segs


def stage_ingest(m: PipelineManifest, segs: dict, out: Path):
    """Parse gaze logs, standardize rate, classify fixations per stream."""
    p = m.params
    all_samples = []
    diagnostics = []
    for log_path in m.gaze_log_paths():
        samples, diags = parse_gaze_log(log_path.read_bytes(), strict=False)
        all_samples.extend(samples)
        diagnostics.extend(f"{log_path.name}: {d}" for d in diags)

    fixations_by_image: dict[str, dict[str, list]] = {}
    n_fix = 0
    for (session_id, image_id), stream in sorted(split_streams(all_samples).items()):
        seg = segs.get(image_id)
        if seg is None:
            diagnostics.append(f"gaze stream references unknown image {image_id}")
            continue
        if p.source_hz and p.source_hz > p.target_hz:
            stream = downsample(stream, p.source_hz, p.target_hz)
        stream = filter_invalid(stream)
        geom = ScreenGeometry(
            width_px=seg.width,
            height_px=seg.height,
            physical_width_mm=seg.width * p.pixel_pitch_mm,
            viewing_distance_mm=p.viewing_distance_mm,
        )
        fixations = classify_fixations_ivt(
            stream, geom, p.velocity_threshold_deg_s, p.min_fixation_ms
        )
        if fixations:
            fixations_by_image.setdefault(image_id, {}).setdefault(session_id, []).extend(fixations)
            n_fix += len(fixations)

    lines = []
    for image_id in sorted(fixations_by_image):
        for session_id in sorted(fixations_by_image[image_id]):
            lines.append(serialize_fixations(fixations_by_image[image_id][session_id]))
    (out / "fixations.jsonl").write_text("".join(lines), encoding="utf-8")
    (out / "ingest_diagnostics.txt").write_text(
        "\n".join(diagnostics) + ("\n" if diagnostics else ""), encoding="utf-8"
    )
    return fixations_by_image, diagnostics


def stage_heatmaps(m: PipelineManifest, segs: dict, fixations_by_image: dict, out: Path):
    """Per-participant accumulation, aggregation, and PNG export per image."""
    p = m.params
    heat_dir = out / "heatmaps"
    hue_dir = out / "hue"
    heat_dir.mkdir(exist_ok=True)
    hue_dir.mkdir(exist_ok=True)
    heatmaps = {}
    for image_id in sorted(fixations_by_image):
        seg = segs[image_id]
        geom = ScreenGeometry(
            width_px=seg.width, height_px=seg.height,
            physical_width_mm=seg.width * p.pixel_pitch_mm,
            viewing_distance_mm=p.viewing_distance_mm,
        )
        sigma = p.sigma_px if p.sigma_px else geom.degrees_to_pixels(0.5)
        per_participant = []
        for session_id in sorted(fixations_by_image[image_id]):
            acc = accumulate(
                fixations_by_image[image_id][session_id], seg.width, seg.height, sigma
            )
            per_participant.append(cdf_normalize(acc))
        agg = aggregate_participants(per_participant)
        heatmaps[image_id] = agg
        write_heatmap_png(
            heat_dir / f"{image_id}.png", agg,
            image_id=image_id, participants=len(per_participant), sigma=sigma,
        )
        write_hue_png(hue_dir / f"{image_id}.png", hue_from_heatmap(agg))
    return heatmaps


def stage_metrics(m: PipelineManifest, segs: dict, heatmaps: dict, out: Path):
    """MoR for every segmented image; MoRH per threshold and MoH where gaze exists."""
    mdir = out / "metrics"
    mdir.mkdir(exist_ok=True)
    vectors = {"mor": {}, "moh": {}}
    for t in m.params.morh_thresholds:
        vectors[f"morh_t{t:g}"] = {}

    for image_id in sorted(segs):
        vectors["mor"][image_id] = mor(segs[image_id])
    for image_id in sorted(heatmaps):
        hue = hue_from_heatmap(heatmaps[image_id])
        seg = segs[image_id]
        vectors["moh"][image_id] = moh(seg, hue)
        for t in m.params.morh_thresholds:
            vectors[f"morh_t{t:g}"][image_id] = morh(seg, hue, float(t))

    write_metric_csv(mdir / "mor.csv", sorted(vectors["mor"].items()), MetricKind.MOR)
    write_metric_csv(mdir / "moh.csv", sorted(vectors["moh"].items()), MetricKind.MOH_ADJUSTED)
    for t in m.params.morh_thresholds:
        write_metric_csv(
            mdir / f"morh_t{t:g}.csv",
            sorted(vectors[f"morh_t{t:g}"].items()),
            MetricKind.MORH,
            threshold_t=float(t),
        )
    return vectors


def stage_group(m: PipelineManifest, out: Path):
    records = parse_comparison_log(m.comparison_log.read_bytes())
    labels = group_images(records, threshold=m.params.group_threshold)
    with open(out / "groups.csv", "w", encoding="utf-8") as fh:
        fh.write("image_id,group\n")
        for gl in labels:
            fh.write(f"{gl.image_id},{gl.group}\n")
    return labels


def group_rankings(vectors: dict, labels, k: int = 10) -> dict:
    """Top-k object tables per image group per metric kind."""
    by_group = {"safe": [], "unsafe": []}
    for gl in labels:
        if gl.group in by_group:
            by_group[gl.group].append(gl.image_id)

    rankings = {}
    for kind_key, per_image in sorted(vectors.items()):
        for group, members in sorted(by_group.items()):
            vecs = [per_image[i] for i in members if i in per_image]
            if not vecs:
                continue
            rankings[f"{kind_key}/{group}"] = top_k(mean_over_images(vecs), k)
    return rankings


def stage_similarity(m: PipelineManifest, segs: dict, heatmaps: dict, out: Path):
    """Score machine heatmaps against human ones; None when no machine maps."""
    if not m.xai_dirs:
        return None
    lpips_map = {}
    if m.lpips_file is not None:
        lpips_map, _ = ingest_lpips(m.lpips_file)

    per_image = {}
    for image_id in sorted(heatmaps):
        seg = segs[image_id]
        human_hue = hue_from_heatmap(heatmaps[image_id])
        human_vec = moh(seg, human_hue)
        row = {}
        for method in sorted(m.xai_dirs):
            png = m.xai_dirs[method] / f"{image_id}.png"
            if not png.exists():
                continue
            machine, _meta = read_heatmap_png(png)
            machine_hue = hue_from_heatmap(machine)
            pair = HeatmapPair(human=human_hue, machine=machine_hue,
                               image_id=image_id, method=method)
            row[method] = MethodScore(
                method=method,
                l2=l2_rms(pair),
                cosine=cosine_element(human_vec, moh(seg, machine_hue)),
                lpips=lpips_map.get((image_id, method)),
            )
        if row:
            per_image[image_id] = row
    if not per_image:
        return None
    report = rank_methods(per_image)

    breakdown = {
        img: {
            meth: {"l2": s.l2, "cosine": s.cosine, "lpips": s.lpips}
            for meth, s in sorted(rows.items())
        }
        for img, rows in sorted(report.per_image.items())
    }
    (out / "similarity_breakdown.json").write_text(
        json.dumps(breakdown, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return report


def cmd_run(manifest: PipelineManifest) -> dict:
    """Execute every stage; returns a summary dict.

    Failures propagate; anything already written stays under the output
    directory with a partial marker so half-finished bundles are obvious.
    """
    from .report import write_reports

    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "INCOMPLETE"
    marker.write_text("run in progress or failed; outputs may be partial\n")

    segs = load_segmentations(manifest)
    fixations_by_image, diagnostics = stage_ingest(manifest, segs, out)
    heatmaps = stage_heatmaps(manifest, segs, fixations_by_image, out)
    vectors = stage_metrics(manifest, segs, heatmaps, out)
    labels = stage_group(manifest, out)
    rankings = group_rankings(vectors, labels)
    report = stage_similarity(manifest, segs, heatmaps, out)
    summary = write_reports(manifest, out, segs, heatmaps, vectors, labels, rankings, report)

    marker.unlink()
    return summary
