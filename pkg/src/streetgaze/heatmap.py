"""Fixation accumulation, rank-CDF normalization, and hue encoding.

Fixations deposit duration-weighted Gaussian splats into a per-pixel
accumulator. The raw field is normalized with the empirical cumulative
distribution over its own cells (ties share the max rank), giving attention
values in (0, 1], and finally mapped onto a 0-150 hue scale where low hue
means high attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

HUE_MAX = 150.0


@dataclass(frozen=True)
class AttentionAccumulator:
    width: int
    height: int
    cells: np.ndarray  # (height, width) float64, fixation-milliseconds

    def __post_init__(self):
        if self.cells.shape != (self.height, self.width):
            raise ValidationError("accumulator cells shape mismatch")


@dataclass(frozen=True)
class AttentionHeatmap:
    width: int
    height: int
    cells: np.ndarray  # (height, width) in (0, 1]

    def __post_init__(self):
        if self.cells.shape != (self.height, self.width):
            raise ValidationError("heatmap cells shape mismatch")


@dataclass(frozen=True)
class HueMap:
    width: int
    height: int
    cells: np.ndarray  # (height, width) in [0, 150]

    def __post_init__(self):
        if self.cells.shape != (self.height, self.width):
            raise ValidationError("hue map cells shape mismatch")
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() > HUE_MAX):
            raise ValidationError("hue values must lie in [0, 150]")


def default_sigma_px(geom, degrees: float = 0.5) -> float:
    """Splat width: pixels subtended by the device precision (0.5 deg)."""
    return geom.degrees_to_pixels(degrees)


def accumulate(fixations, width: int, height: int, sigma: float) -> AttentionAccumulator:
    """Deposit one truncated Gaussian splat per fixation, scaled by duration.

    The kernel is an isotropic Gaussian normalized by 2*pi*sigma^2 and cut
    off at a 3-sigma box, so each interior fixation deposits its duration in
    milliseconds to within ~0.6% truncation loss.
    """
    if width <= 0 or height <= 0:
        raise ValidationError("grid dimensions must be positive")
    if sigma <= 0:
        raise ValidationError("sigma must be positive")

    cells = np.zeros((height, width), dtype=np.float64)
    radius = int(math.ceil(3.0 * sigma))
    norm = 1.0 / (2.0 * math.pi * sigma * sigma)
    for fx in fixations:
        cx, cy = fx.cx_px, fx.cy_px
        x0 = max(0, int(math.floor(cx)) - radius)
        x1 = min(width - 1, int(math.ceil(cx)) + radius)
        y0 = max(0, int(math.floor(cy)) - radius)
        y1 = min(height - 1, int(math.ceil(cy)) + radius)
        if x0 > x1 or y0 > y1:
            continue
        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        gx = np.exp(-((xs - cx) ** 2) / (2.0 * sigma * sigma))
        gy = np.exp(-((ys - cy) ** 2) / (2.0 * sigma * sigma))
        cells[y0:y1 + 1, x0:x1 + 1] += (
            fx.duration_ms * norm * np.outer(gy, gx)
        )
    return AttentionAccumulator(width=width, height=height, cells=cells)


def rank_cdf(values: np.ndarray) -> np.ndarray:
    """Empirical CDF of an array against itself: count(<= v) / N per cell."""
    flat = values.ravel()
    n = flat.size
    if n == 0:
        raise ValidationError("cannot normalize an empty grid")
    uniq, counts = np.unique(flat, return_counts=True)
    cum = np.cumsum(counts)
    idx = np.searchsorted(uniq, flat)
    return (cum[idx] / n).reshape(values.shape)


def cdf_normalize(acc: AttentionAccumulator) -> AttentionHeatmap:
    """Normalize raw accumulation by its empirical CDF; ties share a rank."""
    return AttentionHeatmap(acc.width, acc.height, rank_cdf(acc.cells))


def hue_encode(h: AttentionHeatmap) -> HueMap:
    """Map attention onto hue: full attention -> hue 0, none -> hue 150."""
    return HueMap(h.width, h.height, HUE_MAX * (1.0 - h.cells))


def aggregate_participants(heatmaps) -> AttentionHeatmap:
    """Cellwise mean of per-participant heatmaps, re-rank-normalized.

    Re-applying the CDF keeps hue semantics identical whether a map came
    from one participant or many.
    """
    heatmaps = list(heatmaps)
    if not heatmaps:
        raise ValidationError("aggregate_participants needs at least one heatmap")
    w, h = heatmaps[0].width, heatmaps[0].height
    for hm in heatmaps:
        if (hm.width, hm.height) != (w, h):
            raise ValidationError(
                f"heatmap dimensions differ: {(hm.width, hm.height)} != {(w, h)}"
            )
    mean = np.mean([hm.cells for hm in heatmaps], axis=0)
    return AttentionHeatmap(w, h, rank_cdf(mean))
