"""Writers for the pipeline exchange formats.

Independent reimplementation of the documented formats so the sidecar has
no runtime dependency on the analysis package:

* attention heatmap: 16-bit single-channel PNG, stored = round(a * 65535),
  JSON sidecar {image_id, width, height, participants, sigma}
* hue visualization: 8-bit RGB from HSV, hue = 150 * (1 - a) degrees,
  saturation and value at maximum
* segmentation: 8-bit single-channel PNG, pixel = class index, 255 unlabeled

Raw saliency fields are standardized exactly like human heatmaps: empirical
rank CDF (ties share the max rank) onto (0, 1], then the hue formula.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

HUE_MAX = 150.0


def rank_cdf(field: np.ndarray) -> np.ndarray:
    flat = field.ravel()
    uniq, counts = np.unique(flat, return_counts=True)
    cum = np.cumsum(counts)
    return (cum[np.searchsorted(uniq, flat)] / flat.size).reshape(field.shape)


def write_heatmap(path, normalized: np.ndarray, image_id: str) -> None:
    stored = np.round(normalized * 65535).astype(np.uint16)
    Image.fromarray(stored).save(path, format="PNG")
    meta = {
        "image_id": image_id,
        "width": int(normalized.shape[1]),
        "height": int(normalized.shape[0]),
        "participants": 0,
        "sigma": 0.0,
    }
    Path(path).with_suffix(".json").write_text(
        json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_hue_visualization(path, normalized: np.ndarray) -> None:
    hue_deg = HUE_MAX * (1.0 - normalized)
    h = np.round(hue_deg / 360.0 * 255.0).astype(np.uint8)
    full = np.full_like(h, 255)
    hsv = Image.merge("HSV", [Image.fromarray(c) for c in (h, full, full)])
    hsv.convert("RGB").save(path, format="PNG")


def write_segmentation(path, labels: np.ndarray) -> None:
    Image.fromarray(labels.astype(np.uint8), mode="L").save(path, format="PNG")


def read_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def read_heatmap_image(path) -> np.ndarray:
    """Heatmap PNG back to floats in [0, 1] for perceptual scoring."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel heatmap PNG")
    return arr.astype(np.float64) / 65535.0
