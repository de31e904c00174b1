"""On-disk exchange formats shared by every pipeline stage.

* attention heatmap: 16-bit single-channel PNG, stored = round(a * 65535),
  with a JSON sidecar (image_id, dimensions, participant count, sigma)
* hue visualization: 8-bit RGB PNG from an HSV ramp, saturation and value
  pinned to maximum, hue = the computed 0-150 attention hue
* segmentation map: 8-bit single-channel PNG, pixel = class index, 255 =
  unlabeled
* metric table: CSV, one row per image, 150 value columns, missing blank
* comparison log / safety scores: JSON lines / CSV

The ``validate_*`` helpers return a list of human-readable diagnostics
(empty means the file conforms); writers and readers raise on violation.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import ade20k
from .errors import FormatError
from .heatmap import HUE_MAX, AttentionHeatmap, HueMap
from .metrics import ComparisonRecord, MetricKind, ObjectVector, SegmentationMap

HEATMAP_SCALE = 65535
HUE_PIL_MAX = int(round(HUE_MAX / 360.0 * 255.0))  # hue channel ceiling in PIL units


# -- attention heatmaps -------------------------------------------------------

def heatmap_sidecar_path(png_path) -> Path:
    return Path(png_path).with_suffix(".json")


def write_heatmap_png(path, heatmap: AttentionHeatmap, image_id: str,
                      participants: int, sigma: float) -> None:
    stored = np.round(heatmap.cells * HEATMAP_SCALE).astype(np.uint16)
    Image.fromarray(stored).save(path, format="PNG")
    meta = {
        "image_id": image_id,
        "width": heatmap.width,
        "height": heatmap.height,
        "participants": participants,
        "sigma": sigma,
    }
    heatmap_sidecar_path(path).write_text(
        json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_heatmap_png(path) -> tuple[AttentionHeatmap, dict]:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except Exception as exc:
        raise FormatError(f"{path}: unreadable PNG: {exc}") from exc
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected single-channel heatmap PNG")
    cells = arr.astype(np.float64) / HEATMAP_SCALE
    meta = {}
    sidecar = heatmap_sidecar_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    h, w = cells.shape
    return AttentionHeatmap(width=w, height=h, cells=cells), meta


def validate_heatmap_png(path) -> list[str]:
    diags = []
    try:
        with Image.open(path) as im:
            if im.mode not in ("I;16", "I"):
                diags.append(f"mode {im.mode}, expected 16-bit single channel")
            arr = np.asarray(im)
    except Exception as exc:
        return [f"unreadable PNG: {exc}"]
    if arr.ndim != 2:
        diags.append("not single-channel")
    elif arr.max(initial=0) > HEATMAP_SCALE:
        diags.append("stored value above 65535")
    sidecar = heatmap_sidecar_path(path)
    if not sidecar.exists():
        diags.append(f"missing sidecar metadata {sidecar.name}")
    else:
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
            for key in ("image_id", "width", "height", "participants", "sigma"):
                if key not in meta:
                    diags.append(f"sidecar missing field {key}")
            if arr.ndim == 2 and "width" in meta and "height" in meta:
                if (meta["width"], meta["height"]) != (arr.shape[1], arr.shape[0]):
                    diags.append("sidecar dimensions disagree with PNG")
        except (ValueError, OSError) as exc:
            diags.append(f"sidecar unreadable: {exc}")
    return diags


def hue_from_heatmap(heatmap: AttentionHeatmap) -> HueMap:
    return HueMap(heatmap.width, heatmap.height, HUE_MAX * (1.0 - heatmap.cells))


# -- hue visualization --------------------------------------------------------

def write_hue_png(path, hue: HueMap) -> None:
    """8-bit HSV-ramp rendering; red/yellow = attended, blue = ignored."""
    h = np.round(hue.cells / 360.0 * 255.0).astype(np.uint8)
    full = np.full_like(h, 255)
    hsv = Image.merge("HSV", [Image.fromarray(c) for c in (h, full, full)])
    hsv.convert("RGB").save(path, format="PNG")


def validate_hue_png(path) -> list[str]:
    diags = []
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                diags.append(f"mode {im.mode}, expected RGB")
            hsv = np.asarray(im.convert("HSV"))
    except Exception as exc:
        return [f"unreadable PNG: {exc}"]
    if hsv[:, :, 0].max(initial=0) > HUE_PIL_MAX:
        diags.append("hue channel exceeds the 0-150 degree range")
    if hsv[:, :, 1].min(initial=255) != 255 or hsv[:, :, 2].min(initial=255) != 255:
        diags.append("saturation/value not pinned to maximum")
    return diags


# -- segmentation maps --------------------------------------------------------

def write_segmentation_png(path, seg: SegmentationMap) -> None:
    Image.fromarray(seg.labels.astype(np.uint8), mode="L").save(path, format="PNG")


def read_segmentation_png(path) -> SegmentationMap:
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                raise FormatError(f"{path}: mode {im.mode}, expected 8-bit grayscale")
            arr = np.asarray(im)
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: unreadable PNG: {exc}") from exc
    bad = (arr >= ade20k.N_CLASSES) & (arr != ade20k.UNLABELED)
    if bad.any():
        raise FormatError(f"{path}: contains class indices >= {ade20k.N_CLASSES}")
    h, w = arr.shape
    return SegmentationMap(width=w, height=h, labels=arr.copy())


def validate_segmentation_png(path) -> list[str]:
    try:
        read_segmentation_png(path)
    except FormatError as exc:
        return [str(exc)]
    return []


# -- metric tables ------------------------------------------------------------

def write_metric_csv(path, rows, kind: MetricKind, threshold_t: float | None = None):
    """One row per image: image_id followed by the 150 per-class values."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        header = f"# kind={kind.value}"
        if threshold_t is not None:
            header += f" t={threshold_t:g}"
        fh.write(header + "\n")
        writer = csv.writer(fh)
        writer.writerow(["image_id"] + list(ade20k.CLASS_NAMES))
        for image_id, vector in rows:
            out = [image_id]
            for v in vector.values:
                out.append("" if np.isnan(v) else repr(float(v)))
            writer.writerow(out)


def read_metric_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# kind="):
            raise FormatError(f"{path}: missing kind header")
        parts = first[2:].split()
        kind = MetricKind(parts[0].split("=", 1)[1])
        t = None
        for p in parts[1:]:
            if p.startswith("t="):
                t = float(p.split("=", 1)[1])
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "image_id" or len(header) != 1 + ade20k.N_CLASSES:
            raise FormatError(f"{path}: bad column header")
        rows = []
        for row in reader:
            values = np.array(
                [np.nan if cell == "" else float(cell) for cell in row[1:]],
                dtype=np.float64,
            )
            rows.append((row[0], ObjectVector(kind, values, threshold_t=t)))
        return rows, kind, t


# -- comparison logs ----------------------------------------------------------

def serialize_comparison_log(records) -> str:
    out = []
    for r in records:
        out.append(json.dumps(
            {"pair_id": r.pair_id, "left": r.left_image, "right": r.right_image,
             "chosen": r.chosen, "session_id": r.session_id, "t_ms": r.t_ms},
            separators=(",", ":"),
        ))
    return "\n".join(out) + ("\n" if out else "")


def parse_comparison_log(stream) -> list[ComparisonRecord]:
    text = stream.decode("utf-8") if isinstance(stream, bytes) else stream
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            records.append(ComparisonRecord(
                pair_id=rec["pair_id"],
                left_image=rec["left"],
                right_image=rec["right"],
                chosen=rec["chosen"],
                session_id=rec["session_id"],
                t_ms=int(rec.get("t_ms", 0)),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"comparison log line {line_no}: {exc}") from exc
    return records


# -- safety scores ------------------------------------------------------------

def write_scores_csv(path, scores) -> None:
    """scores: mapping image_id -> (global_score, sweden_score)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "global", "sweden"])
        for image_id in sorted(scores):
            g, s = scores[image_id]
            writer.writerow([image_id, repr(float(g)), repr(float(s))])


def read_scores_csv(path) -> dict[str, tuple[float, float]]:
    scores = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "global", "sweden"]:
            raise FormatError(f"{path}: bad scores header {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                g, s = float(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise FormatError(f"{path}: line {line_no}: {exc}") from exc
            if not (1.0 <= g <= 9.0 and 1.0 <= s <= 9.0):
                raise FormatError(
                    f"{path}: line {line_no}: scores must lie in [1, 9]"
                )
            scores[row[0]] = (g, s)
    return scores


# -- sidecar score files ------------------------------------------------------

def validate_lpips_file(path) -> list[str]:
    from .similarity import ingest_lpips

    try:
        ingest_lpips(path)
    except (FormatError, ValueError) as exc:
        return [str(exc)]
    return []
