"""Eye-tracker stream ingestion and fixation classification.

Raw gaze logs arrive as UTF-8 JSON lines, one sample per line:

    {"session_id": "s1", "image_id": "img_003", "t_ms": 120, "x_px": 640.5,
     "y_px": 312.0, "valid": true}

Samples are standardized to a common rate, blink/invalid samples dropped,
and the remainder classified into fixations with a velocity-threshold
(I-VT) filter operating on angular velocity derived from screen geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import GazeParseError, ValidationError

# Velocity-threshold defaults; commonly used I-VT settings.
DEFAULT_VELOCITY_THRESHOLD_DEG_S = 30.0
DEFAULT_MIN_FIXATION_MS = 60.0

# Backward time jumps up to this size are clamped; anything larger is malformed.
MAX_CLOCK_REGRESSION_MS = 1


@dataclass(frozen=True)
class RawGazeSample:
    session_id: str
    image_id: str
    t_ms: int
    x_px: float
    y_px: float
    valid: bool


@dataclass(frozen=True)
class FixationEvent:
    session_id: str
    image_id: str
    cx_px: float
    cy_px: float
    start_ms: float
    duration_ms: float


@dataclass(frozen=True)
class ScreenGeometry:
    """Display geometry used to convert pixel motion into visual angle."""

    width_px: int
    height_px: int
    physical_width_mm: float
    viewing_distance_mm: float = 700.0

    def __post_init__(self):
        for name in ("width_px", "height_px", "physical_width_mm", "viewing_distance_mm"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"ScreenGeometry.{name} must be strictly positive")

    @property
    def pixel_pitch_mm(self) -> float:
        return self.physical_width_mm / self.width_px

    def degrees_to_pixels(self, degrees: float) -> float:
        """Pixels subtended by a visual angle at the viewing distance."""
        mm = self.viewing_distance_mm * math.tan(math.radians(degrees))
        return mm / self.pixel_pitch_mm


@dataclass(frozen=True)
class ParseDiagnostic:
    line_no: int
    reason: str
    raw: str = ""

    def __str__(self):
        return f"line {self.line_no}: {self.reason}"


_REQUIRED_FIELDS = ("session_id", "image_id", "t_ms", "x_px", "y_px", "valid")


def _sample_from_record(rec: dict) -> RawGazeSample:
    missing = [k for k in _REQUIRED_FIELDS if k not in rec]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    extra = [k for k in rec if k not in _REQUIRED_FIELDS]
    if extra:
        raise ValueError(f"unknown fields: {', '.join(sorted(extra))}")
    if not isinstance(rec["session_id"], str) or not isinstance(rec["image_id"], str):
        raise ValueError("session_id and image_id must be strings")
    if isinstance(rec["t_ms"], bool) or not isinstance(rec["t_ms"], int):
        raise ValueError("t_ms must be an integer")
    if rec["t_ms"] < 0:
        raise ValueError("t_ms must be non-negative")
    if not isinstance(rec["valid"], bool):
        raise ValueError("valid must be a boolean")
    x = float(rec["x_px"])
    y = float(rec["y_px"])
    if rec["valid"] and not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("valid sample with non-finite coordinates")
    return RawGazeSample(
        session_id=rec["session_id"],
        image_id=rec["image_id"],
        t_ms=rec["t_ms"],
        x_px=x,
        y_px=y,
        valid=rec["valid"],
    )


def parse_gaze_log(
    stream, strict: bool = False
) -> tuple[list[RawGazeSample], list[ParseDiagnostic]]:
    """Parse a line-delimited gaze log.

    ``stream`` may be bytes, str, or any iterable of lines. Returns samples
    in file order plus diagnostics for malformed lines. In strict mode any
    malformed line raises :class:`GazeParseError` listing the first ten
    offenders. Timestamps that regress by at most 1 ms within one
    (session, image) stream are clamped forward to the previous timestamp;
    larger regressions are malformed.
    """
    if isinstance(stream, bytes):
        lines = stream.decode("utf-8").splitlines()
    elif isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = [
            ln.decode("utf-8") if isinstance(ln, bytes) else ln for ln in stream
        ]

    samples: list[RawGazeSample] = []
    diagnostics: list[ParseDiagnostic] = []
    last_t: dict[tuple[str, str], int] = {}

    for line_no, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        try:
            rec = json.loads(text)
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            sample = _sample_from_record(rec)
        except ValueError as exc:
            diagnostics.append(ParseDiagnostic(line_no, str(exc), text[:200]))
            continue

        key = (sample.session_id, sample.image_id)
        prev = last_t.get(key)
        if prev is not None and sample.t_ms < prev:
            if prev - sample.t_ms <= MAX_CLOCK_REGRESSION_MS:
                sample = RawGazeSample(
                    sample.session_id, sample.image_id, prev,
                    sample.x_px, sample.y_px, sample.valid,
                )
            else:
                diagnostics.append(ParseDiagnostic(
                    line_no,
                    f"timestamp regressed by {prev - sample.t_ms} ms",
                    text[:200],
                ))
                continue
        last_t[key] = sample.t_ms
        samples.append(sample)

    if strict and diagnostics:
        shown = "; ".join(str(d) for d in diagnostics[:10])
        raise GazeParseError(
            f"{len(diagnostics)} malformed line(s): {shown}", diagnostics
        )
    return samples, diagnostics


def serialize_gaze_log(samples: Iterable[RawGazeSample]) -> str:
    """Inverse of :func:`parse_gaze_log` for valid records."""
    out = []
    for s in samples:
        out.append(json.dumps(
            {
                "session_id": s.session_id,
                "image_id": s.image_id,
                "t_ms": s.t_ms,
                "x_px": s.x_px,
                "y_px": s.y_px,
                "valid": s.valid,
            },
            separators=(",", ":"),
        ))
    return "\n".join(out) + ("\n" if out else "")


def serialize_fixations(fixations: Iterable[FixationEvent]) -> str:
    out = []
    for f in fixations:
        out.append(json.dumps(
            {
                "session_id": f.session_id,
                "image_id": f.image_id,
                "cx_px": f.cx_px,
                "cy_px": f.cy_px,
                "start_ms": f.start_ms,
                "duration_ms": f.duration_ms,
            },
            separators=(",", ":"),
        ))
    return "\n".join(out) + ("\n" if out else "")


def parse_fixations(stream) -> list[FixationEvent]:
    if isinstance(stream, bytes):
        text = stream.decode("utf-8")
    else:
        text = stream
    fixations = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            fixations.append(FixationEvent(
                session_id=rec["session_id"],
                image_id=rec["image_id"],
                cx_px=float(rec["cx_px"]),
                cy_px=float(rec["cy_px"]),
                start_ms=float(rec["start_ms"]),
                duration_ms=float(rec["duration_ms"]),
            ))
        except (ValueError, KeyError, TypeError) as exc:
            raise GazeParseError(f"fixation log line {line_no}: {exc}") from exc
    return fixations


def downsample(
    samples: Sequence[RawGazeSample], source_hz: float, target_hz: float
) -> list[RawGazeSample]:
    """Reduce a time-sorted stream to approximately ``target_hz``.

    Time is bucketed into 1/target_hz windows; within each bucket the first
    valid sample wins (the first sample at all if none is valid), so no gaze
    position is ever synthesized. Equal rates return the input unchanged.
    """
    if source_hz < target_hz:
        raise ValidationError(
            f"source_hz ({source_hz}) must be >= target_hz ({target_hz})"
        )
    if target_hz <= 0:
        raise ValidationError("target_hz must be positive")
    if source_hz == target_hz:
        return list(samples)

    kept: list[RawGazeSample] = []
    # (session, image, bucket) -> index into kept for possible valid upgrade
    current: dict[tuple[str, str, int], int] = {}
    for s in samples:
        bucket = int(s.t_ms * target_hz // 1000)
        key = (s.session_id, s.image_id, bucket)
        if key not in current:
            current[key] = len(kept)
            kept.append(s)
        elif s.valid and not kept[current[key]].valid:
            kept[current[key]] = s
    return kept


def filter_invalid(samples: Iterable[RawGazeSample]) -> list[RawGazeSample]:
    """Drop blink/invalid samples and any with non-finite coordinates."""
    return [
        s for s in samples
        if s.valid and math.isfinite(s.x_px) and math.isfinite(s.y_px)
    ]


def angular_velocity_deg_s(
    a: RawGazeSample, b: RawGazeSample, geom: ScreenGeometry
) -> float:
    """Angular velocity between two consecutive samples.

    Uses the small-angle approximation: displacement in mm over the viewing
    distance. Device precision (~0.5 deg) dominates the approximation error
    for on-screen displacements.
    """
    dt_ms = b.t_ms - a.t_ms
    dx = b.x_px - a.x_px
    dy = b.y_px - a.y_px
    dist_mm = math.hypot(dx, dy) * geom.pixel_pitch_mm
    angle_deg = math.degrees(dist_mm / geom.viewing_distance_mm)
    if dt_ms <= 0:
        return 0.0 if angle_deg == 0.0 else math.inf
    return angle_deg / (dt_ms / 1000.0)


def classify_fixations_ivt(
    samples: Sequence[RawGazeSample],
    geom: ScreenGeometry,
    velocity_threshold_deg_s: float = DEFAULT_VELOCITY_THRESHOLD_DEG_S,
    min_duration_ms: float = DEFAULT_MIN_FIXATION_MS,
) -> list[FixationEvent]:
    """Velocity-threshold fixation classification over one (session, image) stream.

    Consecutive samples joined by below-threshold angular velocity merge into
    one fixation; the centroid is the unweighted mean of member samples,
    clamped to the screen bounds, and groups shorter than ``min_duration_ms``
    are discarded. Fewer than two samples yield no fixations.
    """
    if len(samples) < 2:
        return []
    keys = {(s.session_id, s.image_id) for s in samples}
    if len(keys) != 1:
        raise ValidationError(
            "classify_fixations_ivt expects a single (session, image) stream"
        )

    fixations: list[FixationEvent] = []
    group: list[RawGazeSample] = [samples[0]]

    def flush(members: list[RawGazeSample]):
        duration = members[-1].t_ms - members[0].t_ms
        if duration <= 0 or duration < min_duration_ms:
            return
        cx = sum(m.x_px for m in members) / len(members)
        cy = sum(m.y_px for m in members) / len(members)
        fixations.append(FixationEvent(
            session_id=members[0].session_id,
            image_id=members[0].image_id,
            cx_px=min(max(cx, 0.0), float(geom.width_px)),
            cy_px=min(max(cy, 0.0), float(geom.height_px)),
            start_ms=float(members[0].t_ms),
            duration_ms=float(duration),
        ))

    for prev, cur in zip(samples, samples[1:]):
        if angular_velocity_deg_s(prev, cur, geom) < velocity_threshold_deg_s:
            group.append(cur)
        else:
            flush(group)
            group = [cur]
    flush(group)
    return fixations


def split_streams(
    samples: Iterable[RawGazeSample],
) -> dict[tuple[str, str], list[RawGazeSample]]:
    """Group samples by (session_id, image_id), preserving order."""
    streams: dict[tuple[str, str], list[RawGazeSample]] = {}
    for s in samples:
        streams.setdefault((s.session_id, s.image_id), []).append(s)
    return streams
