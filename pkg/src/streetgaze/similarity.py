"""Agreement scoring between human attention hue maps and machine heatmaps.

Scene-level agreement is the root-mean-square difference of the two hue
grids after scaling onto [0, 1] (lower = more similar), optionally joined
by perceptual distances ingested from a sidecar score file. Element-level
agreement is the cosine between the two 150-entry adjusted-hue object
vectors (higher = more similar).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import FormatError, InsufficientDataError, ValidationError
from .heatmap import HUE_MAX, HueMap
from .metrics import ObjectVector

log = logging.getLogger(__name__)

CAM_METHODS = (
    "AblationCAM",
    "EigenCAM",
    "GradCAM",
    "GradCAMPlusPlus",
    "HiResCAM",
    "ScoreCAM",
    "XGradCAM",
)


@dataclass(frozen=True)
class HeatmapPair:
    human: HueMap
    machine: HueMap
    image_id: str
    method: str

    def __post_init__(self):
        if self.method not in CAM_METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if (self.human.width, self.human.height) != (self.machine.width, self.machine.height):
            raise ValidationError("heatmap pair dimensions differ")


@dataclass(frozen=True)
class MethodScore:
    method: str
    l2: float
    cosine: float
    lpips: float | None = None


@dataclass(frozen=True)
class SimilarityReport:
    means: dict  # method -> MethodScore with per-method means
    per_image: dict  # image_id -> {method: MethodScore}
    bold: dict  # column ("l2" | "lpips" | "cosine") -> [two method names]
    tied_columns: set = field(default_factory=set)


def l2_rms(pair: HeatmapPair) -> float:
    """Scene score: RMS of cellwise differences over hue/150, in [0, 1]."""
    a = pair.human.cells / HUE_MAX
    b = pair.machine.cells / HUE_MAX
    return float(np.sqrt(np.mean((a - b) ** 2)))


def cosine_element(human_vec: ObjectVector, machine_vec: ObjectVector) -> float:
    """Cosine of the two 150-dim adjusted-hue vectors, missing read as zero."""
    if human_vec.kind != machine_vec.kind:
        raise ValidationError("element vectors must share a kind")
    u = np.nan_to_num(human_vec.values, nan=0.0)
    v = np.nan_to_num(machine_vec.values, nan=0.0)
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        log.warning("cosine_element: all-zero vector, similarity defined as 0.0")
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def ingest_lpips(path, expect=None):
    """Read a sidecar perceptual-score file.

    The file holds one JSON record per line: {"image_id", "method", "lpips"}.
    Returns ``(mapping, missing)`` where mapping keys are (image_id, method)
    and ``missing`` lists expected keys absent from the file (pairs are
    reported, never fabricated). Scores outside [0, 1] are rejected.
    """
    mapping: dict[tuple[str, str], float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                image_id = rec["image_id"]
                method = rec["method"]
                score = float(rec["lpips"])
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}: line {line_no}: {exc}") from exc
            if method not in CAM_METHODS:
                raise ValidationError(f"{path}: line {line_no}: unknown method {method!r}")
            if not (0.0 <= score <= 1.0) or not math.isfinite(score):
                raise ValidationError(
                    f"{path}: line {line_no}: lpips {score} outside [0, 1]"
                )
            mapping[(image_id, method)] = score

    missing = []
    if expect is not None:
        missing = sorted(k for k in expect if k not in mapping)
        for key in missing:
            log.warning("lpips score missing for %s", key)
    return mapping, missing


def export_lpips(path, mapping: Mapping[tuple[str, str], float]) -> None:
    """Write the sidecar score exchange format (inverse of ingest_lpips)."""
    with open(path, "w", encoding="utf-8") as fh:
        for (image_id, method) in sorted(mapping):
            fh.write(json.dumps(
                {"image_id": image_id, "method": method,
                 "lpips": mapping[(image_id, method)]},
                separators=(",", ":"),
            ) + "\n")


def _mean(values):
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def _bold_two(items, reverse=False):
    """Two best method names; value order first, method name breaks ties."""
    ranked = sorted(items, key=lambda kv: (-kv[1] if reverse else kv[1], kv[0]))
    names = [m for m, _ in ranked[:2]]
    tied = len(ranked) > 2 and ranked[1][1] == ranked[2][1]
    return names, tied


def rank_methods(per_image: Mapping[str, Mapping[str, MethodScore]]) -> SimilarityReport:
    """Aggregate per-image scores into per-method means plus top-2 bold sets."""
    complete = [
        img for img, scores in per_image.items()
        if all(m in scores for m in CAM_METHODS)
    ]
    if not complete:
        raise InsufficientDataError(
            "no image carries scores for all seven methods"
        )

    means = {}
    for method in CAM_METHODS:
        rows = [
            per_image[img][method]
            for img in sorted(per_image)
            if method in per_image[img]
        ]
        means[method] = MethodScore(
            method=method,
            l2=_mean(r.l2 for r in rows),
            cosine=_mean(r.cosine for r in rows),
            lpips=_mean(r.lpips for r in rows),
        )

    tied_columns = set()
    bold_l2, tied = _bold_two([(m, s.l2) for m, s in means.items()])
    if tied:
        tied_columns.add("l2")
    bold_cos, tied = _bold_two([(m, s.cosine) for m, s in means.items()], reverse=True)
    if tied:
        tied_columns.add("cosine")
    with_lpips = [(m, s.lpips) for m, s in means.items() if s.lpips is not None]
    if with_lpips:
        bold_lpips, tied = _bold_two(with_lpips)
        if tied:
            tied_columns.add("lpips")
    else:
        bold_lpips = []

    return SimilarityReport(
        means=means,
        per_image={img: dict(scores) for img, scores in sorted(per_image.items())},
        bold={"l2": bold_l2, "lpips": bold_lpips, "cosine": bold_cos},
        tied_columns=tied_columns,
    )
