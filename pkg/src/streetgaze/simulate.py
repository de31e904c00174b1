"""Synthetic study generator.

Builds a complete fake study on disk: layered street-scene segmentation
maps with paired RGB renderings, participant gaze logs whose fixation
targets are biased toward configurable object classes, pairwise choice
logs driven by latent safety scores, machine saliency heatmaps with
method-specific class profiles, and a sidecar perceptual-score fixture.
Everything flows from one seed through named substreams, so a bundle is
reproducible byte for byte.

The gaze and choice logs are produced by running simulated participants
through the real survey service, so the emitted files are genuine service
exports rather than hand-rolled lookalikes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from . import ade20k
from .errors import ValidationError
from .formats import (
    write_heatmap_png,
    write_hue_png,
    write_scores_csv,
    write_segmentation_png,
)
from .heatmap import AttentionHeatmap, HueMap, rank_cdf, HUE_MAX
from .metrics import SegmentationMap
from .similarity import CAM_METHODS, export_lpips
from .survey import StudyConfig, SurveyService

# Street-scene classes scattered over the layered base scene.
SCATTER_CLASSES = (4, 9, 11, 12, 17, 20, 32, 43, 83, 87, 102)  # tree..van
BASE_SKY, BASE_BUILDING, BASE_ROAD = 2, 1, 6

PALETTE_SEED = 1234


@dataclass
class SimulateConfig:
    out_dir: str
    images: int = 8
    participants: int = 5
    pairs_per_participant: int = 10
    width: int = 320
    height: int = 240
    bias: dict = field(default_factory=dict)  # class index -> weight
    seed: int = 0
    hz: int = 120
    fixations_per_view: int = 6
    pixel_pitch_mm: float = 0.27
    viewing_distance_mm: float = 700.0

    def __post_init__(self):
        if self.images < 2 and self.participants > 0:
            raise ValidationError("need at least two images to form pairs")
        if self.images < 1:
            raise ValidationError("image count must be >= 1")
        if self.participants < 0 or self.pairs_per_participant < 1:
            raise ValidationError("participants must be >= 0 and pairs >= 1")
        if self.width < 16 or self.height < 16:
            raise ValidationError("image dimensions must be at least 16x16")
        for cls, w in self.bias.items():
            if not 0 <= int(cls) < ade20k.N_CLASSES:
                raise ValidationError(f"bias class {cls} out of range")
            if w < 0:
                raise ValidationError("bias weights must be non-negative")


def substream(seed: int, name: str) -> np.random.Generator:
    """Named, order-independent child stream of the master seed."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(
        np.random.SeedSequence([seed, int.from_bytes(digest, "big")])
    )


def _unit_float(seed: int, *tokens) -> float:
    h = hashlib.blake2b(":".join(str(t) for t in tokens).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big") / float(1 << 64)


def make_segmentation(cfg: SimulateConfig, image_idx: int) -> SegmentationMap:
    rng = substream(cfg.seed, f"seg:{image_idx}")
    w, h = cfg.width, cfg.height
    labels = np.full((h, w), BASE_BUILDING, dtype=np.uint8)
    sky_rows = int(h * rng.uniform(0.25, 0.40))
    road_rows = int(h * rng.uniform(0.25, 0.40))
    labels[:sky_rows, :] = BASE_SKY
    labels[h - road_rows:, :] = BASE_ROAD

    def stamp(cls: int, min_frac=0.05, max_frac=0.18):
        rw = max(4, int(w * rng.uniform(min_frac, max_frac)))
        rh = max(4, int(h * rng.uniform(min_frac, max_frac)))
        x0 = int(rng.integers(0, w - rw))
        y0 = int(rng.integers(0, h - rh))
        labels[y0:y0 + rh, x0:x0 + rw] = cls

    for _ in range(int(rng.integers(4, 9))):
        stamp(int(rng.choice(SCATTER_CLASSES)))
    # biased classes must exist in every image so the bias has a target
    for cls in sorted(cfg.bias):
        stamp(int(cls), 0.08, 0.16)
    return SegmentationMap(width=w, height=h, labels=labels)


def render_rgb(seg: SegmentationMap) -> np.ndarray:
    rng = np.random.default_rng(PALETTE_SEED)
    palette = rng.integers(30, 225, size=(256, 3), dtype=np.uint8)
    palette[BASE_SKY] = (130, 190, 235)
    palette[BASE_BUILDING] = (150, 140, 130)
    palette[BASE_ROAD] = (90, 90, 95)
    palette[4] = (60, 140, 60)
    palette[20] = (170, 40, 40)
    return palette[seg.labels]


def _fixation_target(rng, seg: SegmentationMap, bias: dict):
    if bias:
        classes = sorted(bias)
        weights = np.array([bias[c] for c in classes], dtype=np.float64)
        total = weights.sum()
        if total > 0:
            cls = int(rng.choice(classes, p=weights / total))
            ys, xs = np.nonzero(seg.labels == cls)
            if xs.size:
                j = int(rng.integers(0, xs.size))
                return float(xs[j]), float(ys[j])
    return (
        float(rng.uniform(0, seg.width - 1)),
        float(rng.uniform(0, seg.height - 1)),
    )


def synth_gaze_samples(cfg: SimulateConfig, rng, seg: SegmentationMap):
    """One viewing of one image: fixation clusters joined by fast saccades.

    Yields (t_ms, x, y, valid) with jitter small enough to stay under the
    default I-VT threshold inside clusters and jumps far above it between
    them. Timestamps count milliseconds from the start of this stream.
    """
    step_ms = 1000.0 / cfg.hz
    tick = 0
    out = []
    x, y = _fixation_target(rng, seg, cfg.bias)
    for _ in range(cfg.fixations_per_view):
        n = int(rng.integers(int(0.20 * cfg.hz), int(0.45 * cfg.hz)))  # 200-450 ms
        for _ in range(n):
            jx = x + rng.normal(0, 1.0)
            jy = y + rng.normal(0, 1.0)
            out.append((int(round(tick * step_ms)), jx, jy, True))
            tick += 1
        if rng.uniform() < 0.15:  # occasional blink
            for _ in range(int(rng.integers(2, 5))):
                out.append((int(round(tick * step_ms)), 0.0, 0.0, False))
                tick += 1
        nx, ny = _fixation_target(rng, seg, cfg.bias)
        steps = int(rng.integers(2, 4))
        for k in range(1, steps + 1):
            sx = x + (nx - x) * k / steps
            sy = y + (ny - y) * k / steps
            out.append((int(round(tick * step_ms)), sx, sy, True))
            tick += 1
        x, y = nx, ny
    return out


def _method_profile(method: str) -> np.ndarray:
    """Per-method class weighting used to fake a machine attention field."""
    rng = substream(0xCA11, f"method:{method}")
    w = rng.uniform(0.0, 1.0, size=ade20k.N_CLASSES)
    return w ** 2  # sparsify a little


def _box_blur(field: np.ndarray, radius: int, passes: int = 3) -> np.ndarray:
    """Separable box blur via padded cumulative sums (approximates Gaussian)."""
    out = field.astype(np.float64)
    k = 2 * radius + 1
    for _ in range(passes):
        for axis in (0, 1):
            padded = np.concatenate(
                [np.repeat(out.take([0], axis=axis), radius, axis=axis),
                 out,
                 np.repeat(out.take([-1], axis=axis), radius, axis=axis)],
                axis=axis,
            )
            c = np.cumsum(padded, axis=axis)
            lead = c.take(range(k - 1, padded.shape[axis]), axis=axis)
            lag = c.take(range(0, padded.shape[axis] - k + 1), axis=axis)
            first = c.take([k - 1], axis=axis)
            out = np.concatenate([first, lead - lag], axis=axis)[
                tuple(slice(None) if a != axis else slice(0, field.shape[axis])
                      for a in (0, 1))
            ] / k
    return out


def machine_heatmap(cfg: SimulateConfig, method: str, seg: SegmentationMap) -> AttentionHeatmap:
    weights = _method_profile(method)
    raw = weights[np.minimum(seg.labels, ade20k.N_CLASSES - 1)].astype(np.float64)
    raw[seg.labels == ade20k.UNLABELED] = 0.0
    radius = 3 + (sum(method.encode()) % 5)  # distinct spatial character per method
    blurred = _box_blur(raw, radius)
    return AttentionHeatmap(seg.width, seg.height, rank_cdf(blurred))


def run_simulation(cfg: SimulateConfig) -> dict:
    """Generate the full bundle; returns a summary of what was written."""
    out = Path(cfg.out_dir)
    (out / "seg").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(exist_ok=True)

    image_ids = [f"img_{i:03d}" for i in range(cfg.images)]
    segs = {}
    for i, image_id in enumerate(image_ids):
        seg = make_segmentation(cfg, i)
        segs[image_id] = seg
        write_segmentation_png(out / "seg" / f"{image_id}.png", seg)
        Image.fromarray(render_rgb(seg), mode="RGB").save(
            out / "images" / f"{image_id}.png", format="PNG"
        )

    # latent safety plus two correlated model scores on the 1-9 scale
    rng_scores = substream(cfg.seed, "scores")
    latent = {img: float(rng_scores.uniform(0.0, 1.0)) for img in image_ids}
    scores = {}
    for img in image_ids:
        g = 1.0 + 8.0 * min(1.0, max(0.0, latent[img] + rng_scores.normal(0, 0.08)))
        s = 1.0 + 8.0 * min(1.0, max(0.0, latent[img] + rng_scores.normal(0, 0.08)))
        scores[img] = (min(g, 9.0), min(s, 9.0))
    write_scores_csv(out / "scores.csv", scores)

    # run simulated participants through the actual service
    rng_study = substream(cfg.seed, "study")
    ids = iter(f"{k:08x}" for k in range(10 ** 8))
    clock_ms = [0]

    def clock():
        clock_ms[0] += 137
        return clock_ms[0]

    exposure_stats = {"images": cfg.images, "participants": cfg.participants}
    if cfg.participants > 0:
        study = StudyConfig(
            images=image_ids,
            pairs_per_session=cfg.pairs_per_participant,
            seed=cfg.seed,
        )
        service = SurveyService(
            study, out / ".study_log", clock=clock, id_factory=lambda: next(ids)
        )
        bands = ("18_24", "25_34", "35_44", "45_54", "55_64")
        for p in range(cfg.participants):
            session = service.create_session({
                "age_band": bands[int(rng_study.integers(0, len(bands)))],
                "gender": ["female", "male", "nonbinary"][int(rng_study.integers(0, 3))],
            })
            for _ in range(cfg.pairs_per_participant):
                pa = service.next_pair(session.session_id)
                for image_id in (pa.left_image, pa.right_image):
                    rng_view = substream(
                        cfg.seed, f"gaze:{session.session_id}:{pa.pair_id}:{image_id}"
                    )
                    raw = synth_gaze_samples(cfg, rng_view, segs[image_id])
                    service.record_gaze_batch(session.session_id, image_id, [
                        {"t_ms": t, "x_px": x, "y_px": y, "valid": v}
                        for t, x, y, v in raw
                    ])
                noise = rng_study.uniform()
                prefer_left = latent[pa.left_image] >= latent[pa.right_image]
                if noise < 0.85:
                    chosen = "left" if prefer_left else "right"
                else:
                    chosen = "right" if prefer_left else "left"
                service.record_choice(session.session_id, pa.pair_id, chosen)
        service.export_logs(out)
        exp = service.exposure
        exposure_stats.update({
            "min": min(exp.values()),
            "max": max(exp.values()),
            "mean": sum(exp.values()) / len(exp),
            "spread": max(exp.values()) - min(exp.values()),
        })
    else:
        (out / "comparisons.jsonl").write_text("", encoding="utf-8")
        (out / "sessions.jsonl").write_text("", encoding="utf-8")
        (out / "gaze").mkdir(exist_ok=True)
        exposure_stats.update({"min": 0, "max": 0, "mean": 0.0, "spread": 0})

    (out / "exposure_stats.json").write_text(
        json.dumps(exposure_stats, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    # machine saliency heatmaps, one directory per method, plus lpips scores
    lpips_scores = {}
    for method in CAM_METHODS:
        mdir = out / "xai" / method
        mdir.mkdir(parents=True, exist_ok=True)
        for image_id in image_ids:
            hm = machine_heatmap(cfg, method, segs[image_id])
            write_heatmap_png(
                mdir / f"{image_id}.png", hm,
                image_id=image_id, participants=0, sigma=0.0,
            )
            write_hue_png(
                mdir / f"{image_id}_hue.png",
                HueMap(hm.width, hm.height, HUE_MAX * (1.0 - hm.cells)),
            )
            lpips_scores[(image_id, method)] = round(
                0.3 + 0.5 * _unit_float(cfg.seed, "lpips", image_id, method), 6
            )
    export_lpips(out / "lpips.jsonl", lpips_scores)

    manifest = {
        "images_dir": "images",
        "segmentation_dir": "seg",
        "gaze_logs": ["gaze/*.jsonl"],
        "comparison_log": "comparisons.jsonl",
        "scores_file": "scores.csv",
        "xai_dirs": {m: f"xai/{m}" for m in CAM_METHODS},
        "lpips_file": "lpips.jsonl",
        "output_dir": "out",
        "params": {
            "seed": cfg.seed,
            "morh_thresholds": [15, 30],
            "group_threshold": 3,
            "source_hz": cfg.hz,
            "target_hz": 60,
            "pixel_pitch_mm": cfg.pixel_pitch_mm,
            "viewing_distance_mm": cfg.viewing_distance_mm,
        },
    }
    (out / "manifest.yaml").write_text(
        "# streetgaze pipeline manifest (paths relative to this file)\n"
        + yaml.safe_dump(manifest, sort_keys=True),
        encoding="utf-8",
    )
    return {
        "images": cfg.images,
        "participants": cfg.participants,
        "out_dir": str(out),
        "manifest": str(out / "manifest.yaml"),
    }
