"""Object-attention metrics over segmented images plus study-level grouping.

Three per-image vectors are computed against the 150-class taxonomy:

* object ratio      -- fraction of all pixels carrying each class label
* ratio-in-region   -- same fraction restricted to pixels whose hue falls
                       at or below a threshold t (the highlighted region),
                       normalized by the region size
* adjusted mean hue -- 150 minus the mean hue over a class's pixels, so
                       150 reads as maximal attention and 0 as none

Images are additionally grouped safe/unsafe from pairwise choice counts and
stratified into high/medium/low pools from precomputed dual safety scores.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import ade20k
from .errors import EmptyHighlightRegionError, StratumUnderflowError, ValidationError
from .heatmap import HUE_MAX, HueMap


class MetricKind(enum.Enum):
    MOR = "mor"
    MORH = "morh"
    MOH_ADJUSTED = "moh_adjusted"


@dataclass(frozen=True)
class SegmentationMap:
    width: int
    height: int
    labels: np.ndarray  # (height, width) uint8; 255 = unlabeled

    def __post_init__(self):
        if self.labels.shape != (self.height, self.width):
            raise ValidationError("segmentation labels shape mismatch")
        bad = (self.labels >= ade20k.N_CLASSES) & (self.labels != ade20k.UNLABELED)
        if bad.any():
            raise ValidationError("segmentation contains class indices >= 150")


@dataclass(frozen=True)
class ObjectVector:
    kind: MetricKind
    values: np.ndarray  # (150,) float64, NaN = missing
    threshold_t: float | None = None  # present iff kind == MORH

    def __post_init__(self):
        if self.values.shape != (ade20k.N_CLASSES,):
            raise ValidationError("object vector must have 150 entries")
        if (self.kind == MetricKind.MORH) != (self.threshold_t is not None):
            raise ValidationError("threshold_t present iff kind is MORH")

    def present(self) -> np.ndarray:
        return ~np.isnan(self.values)


@dataclass(frozen=True)
class ComparisonRecord:
    pair_id: str
    left_image: str
    right_image: str
    chosen: str  # "left" | "right"
    session_id: str
    t_ms: int = 0

    def __post_init__(self):
        if self.chosen not in ("left", "right"):
            raise ValidationError(f"chosen must be left or right, got {self.chosen!r}")
        if self.left_image == self.right_image:
            raise ValidationError("a comparison pair must contain two distinct images")

    @property
    def chosen_image(self) -> str:
        return self.left_image if self.chosen == "left" else self.right_image

    @property
    def rejected_image(self) -> str:
        return self.right_image if self.chosen == "left" else self.left_image


@dataclass(frozen=True)
class SafetyScore:
    image_id: str
    score: float  # perception scale, 1-9 at the ingest boundary
    source_model: str  # "global" | "sweden"


@dataclass(frozen=True)
class GroupLabel:
    image_id: str
    group: str  # "safe" | "unsafe" | "ambiguous"


def mor(seg: SegmentationMap) -> ObjectVector:
    """Per-class pixel fraction over the whole image.

    Unlabeled pixels count in the denominator (total pixels) but belong to
    no class, so the 150 fractions plus the unlabeled fraction sum to one.
    """
    total = seg.labels.size
    if total == 0:
        raise ValidationError("segmentation map has zero area")
    counts = np.bincount(seg.labels.ravel(), minlength=256)[: ade20k.N_CLASSES]
    return ObjectVector(MetricKind.MOR, counts.astype(np.float64) / total)


def morh(seg: SegmentationMap, hue: HueMap, t: float) -> ObjectVector:
    """Per-class pixel fraction restricted to the highlighted region hue <= t."""
    if (seg.width, seg.height) != (hue.width, hue.height):
        raise ValidationError("segmentation and hue map dimensions differ")
    if not 0 <= t <= HUE_MAX:
        raise ValidationError(f"threshold t={t} outside [0, {HUE_MAX:g}]")
    region = hue.cells <= t
    region_size = int(region.sum())
    if region_size == 0:
        raise EmptyHighlightRegionError(f"no pixel has hue <= {t}")
    counts = np.bincount(seg.labels[region].ravel(), minlength=256)[: ade20k.N_CLASSES]
    values = counts.astype(np.float64) / region_size
    values[counts == 0] = np.nan  # absent from the region -> missing
    return ObjectVector(MetricKind.MORH, values, threshold_t=float(t))


def moh(seg: SegmentationMap, hue: HueMap) -> ObjectVector:
    """Adjusted mean hue per present class: 150 - mean(hue over class pixels)."""
    if (seg.width, seg.height) != (hue.width, hue.height):
        raise ValidationError("segmentation and hue map dimensions differ")
    labels = seg.labels.ravel()
    hues = hue.cells.ravel()
    labeled = labels != ade20k.UNLABELED
    sums = np.bincount(labels[labeled], weights=hues[labeled], minlength=ade20k.N_CLASSES)
    counts = np.bincount(labels[labeled], minlength=ade20k.N_CLASSES)
    values = np.full(ade20k.N_CLASSES, np.nan)
    present = counts[: ade20k.N_CLASSES] > 0
    values[present] = HUE_MAX - (
        sums[: ade20k.N_CLASSES][present] / counts[: ade20k.N_CLASSES][present]
    )
    return ObjectVector(MetricKind.MOH_ADJUSTED, values)


def mean_over_images(vectors: Sequence[ObjectVector]) -> ObjectVector:
    """Per-class mean ignoring missing entries; all-missing stays missing."""
    if not vectors:
        raise ValidationError("mean_over_images needs at least one vector")
    kind = vectors[0].kind
    t = vectors[0].threshold_t
    for v in vectors:
        if v.kind != kind:
            raise ValidationError("cannot average vectors of mixed kinds")
        if v.threshold_t != t:
            raise ValidationError("cannot average region vectors with mixed thresholds")
    stack = np.stack([v.values for v in vectors])
    present = ~np.isnan(stack)
    counts = present.sum(axis=0)
    sums = np.where(present, stack, 0.0).sum(axis=0)
    out = np.full(ade20k.N_CLASSES, np.nan)
    nonzero = counts > 0
    out[nonzero] = sums[nonzero] / counts[nonzero]
    return ObjectVector(kind, out, threshold_t=t)


def top_k(vector: ObjectVector, k: int) -> list[tuple[int, str, float]]:
    """Descending ranking of present classes; ties resolved by class index."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    entries = [
        (i, ade20k.class_name(i), float(vector.values[i]))
        for i in range(ade20k.N_CLASSES)
        if not np.isnan(vector.values[i])
    ]
    entries.sort(key=lambda e: (-e[2], e[0]))
    return entries[:k]


def group_images(
    records: Iterable[ComparisonRecord], threshold: int = 3
) -> list[GroupLabel]:
    """Partition images into safe/unsafe/ambiguous from pairwise choices.

    An image is safe when chosen at least ``threshold`` times and rejected
    fewer; unsafe when rejected at least ``threshold`` times and chosen
    fewer. Everything else -- overlaps and under-exposed images -- lands in
    the explicit ambiguous bucket instead of being dropped silently.
    """
    wins: Counter[str] = Counter()
    losses: Counter[str] = Counter()
    seen: set[str] = set()
    for r in records:
        wins[r.chosen_image] += 1
        losses[r.rejected_image] += 1
        seen.add(r.left_image)
        seen.add(r.right_image)

    labels = []
    for image_id in sorted(seen):
        w, l = wins[image_id], losses[image_id]
        if w >= threshold and l < threshold:
            group = "safe"
        elif l >= threshold and w < threshold:
            group = "unsafe"
        else:
            group = "ambiguous"
        labels.append(GroupLabel(image_id, group))
    return labels


@dataclass(frozen=True)
class StratifiedSample:
    high: list[str]
    medium: list[str]
    low: list[str]
    pools: dict[str, list[str]]  # full qualifying membership per stratum


def _below_fraction(scores: np.ndarray) -> np.ndarray:
    """Fraction of scores strictly below each score (rank-based percentile)."""
    order = np.sort(scores)
    return np.searchsorted(order, scores, side="left") / scores.size


def stratify_by_score(
    scores: Mapping[str, tuple[float, float]],
    per_stratum: int = 100,
    seed: int | None = None,
) -> StratifiedSample:
    """Build high/medium/low image pools from dual model scores and sample them.

    An image is *high* when its rank percentile is in the top 20% under both
    scores, *low* when in the bottom 20% under both, *medium* when both fall
    within the 40-60% band; the 20-40% and 60-80% bands are excluded.
    Membership depends only on ranks, so any strictly increasing transform
    of the score lists leaves it unchanged. ``seed`` is required: sampling
    is never implicitly random.
    """
    if seed is None:
        raise ValidationError("stratify_by_score requires an explicit seed")
    if not scores:
        raise ValidationError("no scored images given")
    ids = sorted(scores)
    a = np.array([scores[i][0] for i in ids], dtype=np.float64)
    b = np.array([scores[i][1] for i in ids], dtype=np.float64)
    ra, rb = _below_fraction(a), _below_fraction(b)

    pools = {
        "high": [i for i, fa, fb in zip(ids, ra, rb) if fa >= 0.8 and fb >= 0.8],
        "medium": [
            i for i, fa, fb in zip(ids, ra, rb)
            if 0.4 <= fa < 0.6 and 0.4 <= fb < 0.6
        ],
        "low": [i for i, fa, fb in zip(ids, ra, rb) if fa < 0.2 and fb < 0.2],
    }

    rng = np.random.default_rng(seed)
    sampled = {}
    for stratum in ("high", "medium", "low"):
        pool = pools[stratum]
        if len(pool) < per_stratum:
            raise StratumUnderflowError(stratum, len(pool), per_stratum)
        picked = rng.choice(len(pool), size=per_stratum, replace=False)
        sampled[stratum] = [pool[j] for j in sorted(picked)]

    return StratifiedSample(
        high=sampled["high"], medium=sampled["medium"], low=sampled["low"], pools=pools
    )
