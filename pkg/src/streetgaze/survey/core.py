"""Study state, exposure-balanced pair scheduling, and the service operations.

The scheduler prefers the globally least-exposed images (exposure = times an
image has been served, across all sessions) and breaks ties with a keyed
hash of the study seed and a serve counter, so decisions are deterministic
given the seed yet uncorrelated with image ids. A session never sees the
same unordered pair twice. Uniform random pairing is available behind the
``scheduler`` config switch.
"""

from __future__ import annotations

import hashlib
import json
import time
import uuid
from dataclasses import dataclass, field

from ..errors import ValidationError
from ..gaze import serialize_gaze_log, RawGazeSample
from ..metrics import ComparisonRecord
from .store import EventLog


class NotFoundError(Exception):
    pass


class ConflictError(Exception):
    pass


class NoMorePairsError(Exception):
    pass


class BatchTooLargeError(Exception):
    pass


AGE_BANDS = ("under_18", "18_24", "25_34", "35_44", "45_54", "55_64", "65_plus")


@dataclass
class StudyConfig:
    images: list[str]
    strata: dict[str, str] = field(default_factory=dict)
    pairs_per_session: int = 10
    exposure_target: float | None = None
    seed: int = 0
    scheduler: str = "balanced"  # "balanced" | "uniform"
    pair_strata: str = "any"  # "any" | "same" | "distinct"
    gaze_batch_cap: int = 20000
    grace_ms: int = 60_000
    abandon_ttl_ms: int = 30 * 60_000
    snapshot_every: int = 1000

    def __post_init__(self):
        if not self.images:
            raise ValidationError("study manifest is empty")
        if len(set(self.images)) != len(self.images):
            raise ValidationError("manifest contains duplicate image ids")
        if self.pairs_per_session < 1:
            raise ValidationError("pairs_per_session must be >= 1")
        if self.scheduler not in ("balanced", "uniform"):
            raise ValidationError(f"unknown scheduler {self.scheduler!r}")
        if self.pair_strata not in ("any", "same", "distinct"):
            raise ValidationError(f"unknown pair_strata {self.pair_strata!r}")


@dataclass
class Session:
    session_id: str
    demographics: dict
    created_at_ms: int
    pairs_served: int = 0
    answered: int = 0
    state: str = "active"
    last_activity_ms: int = 0
    served_pairs: set = field(default_factory=set)  # frozenset({a, b})
    open_pairs: dict = field(default_factory=dict)  # pair_id -> (left, right)


@dataclass(frozen=True)
class PairAssignment:
    pair_id: str
    session_id: str
    left_image: str
    right_image: str
    served_at_ms: int


def _tiebreak(seed: int, counter: int, token: str) -> int:
    h = hashlib.blake2b(
        f"{seed}:{counter}:{token}".encode("utf-8"), digest_size=8
    )
    return int.from_bytes(h.digest(), "big")


class SurveyService:
    """All mutating operations append an event before acknowledging."""

    def __init__(self, config: StudyConfig, data_dir, clock=None, id_factory=None):
        self.config = config
        self.log = EventLog(data_dir)
        self.clock = clock or (lambda: int(time.time() * 1000))
        self.id_factory = id_factory or (lambda: uuid.uuid4().hex)
        self.sessions: dict[str, Session] = {}
        self.assignments: dict[str, PairAssignment] = {}
        self.choices: dict[tuple[str, str], ComparisonRecord] = {}
        self.exposure: dict[str, int] = {img: 0 for img in config.images}
        self.serve_counter = 0
        self._replay()

    # -- replay -----------------------------------------------------------

    def _replay(self) -> None:
        skip = 0
        snap = self.log.read_snapshot()
        if snap is not None:
            self._load_state(snap["state"])
            skip = snap["applied_events"]
        for event in self.log.read_events(skip=skip):
            self._apply(event)

    def _apply(self, e: dict) -> None:
        kind = e["type"]
        if kind == "session_created":
            self.sessions[e["session_id"]] = Session(
                session_id=e["session_id"],
                demographics=e["demographics"],
                created_at_ms=e["at_ms"],
                last_activity_ms=e["at_ms"],
            )
        elif kind == "pair_served":
            s = self.sessions[e["session_id"]]
            pa = PairAssignment(
                pair_id=e["pair_id"], session_id=e["session_id"],
                left_image=e["left"], right_image=e["right"],
                served_at_ms=e["at_ms"],
            )
            self.assignments[pa.pair_id] = pa
            s.pairs_served += 1
            s.served_pairs.add(frozenset((pa.left_image, pa.right_image)))
            s.open_pairs[pa.pair_id] = (pa.left_image, pa.right_image)
            s.last_activity_ms = e["at_ms"]
            self.exposure[pa.left_image] = self.exposure.get(pa.left_image, 0) + 1
            self.exposure[pa.right_image] = self.exposure.get(pa.right_image, 0) + 1
            self.serve_counter += 1
        elif kind == "choice":
            key = (e["session_id"], e["pair_id"])
            if key in self.choices:
                return  # duplicate append from a crash-retry; first one wins
            pa = self.assignments[e["pair_id"]]
            s = self.sessions[e["session_id"]]
            rec = ComparisonRecord(
                pair_id=pa.pair_id, left_image=pa.left_image,
                right_image=pa.right_image, chosen=e["chosen"],
                session_id=e["session_id"], t_ms=e["at_ms"],
            )
            self.choices[key] = rec
            s.open_pairs.pop(e["pair_id"], None)
            s.answered += 1
            s.last_activity_ms = e["at_ms"]
            if s.answered >= self.config.pairs_per_session and s.state == "active":
                s.state = "complete"
        elif kind == "session_abandoned":
            s = self.sessions.get(e["session_id"])
            if s is not None and s.state == "active":
                s.state = "abandoned"

    # -- snapshots ----------------------------------------------------------

    def _dump_state(self) -> dict:
        return {
            "sessions": [
                {
                    "session_id": s.session_id,
                    "demographics": s.demographics,
                    "created_at_ms": s.created_at_ms,
                    "pairs_served": s.pairs_served,
                    "answered": s.answered,
                    "state": s.state,
                    "last_activity_ms": s.last_activity_ms,
                    "served_pairs": sorted(sorted(p) for p in s.served_pairs),
                    "open_pairs": s.open_pairs,
                }
                for s in self.sessions.values()
            ],
            "assignments": [
                {"pair_id": a.pair_id, "session_id": a.session_id,
                 "left": a.left_image, "right": a.right_image,
                 "at_ms": a.served_at_ms}
                for a in self.assignments.values()
            ],
            "choices": [
                {"pair_id": r.pair_id, "session_id": r.session_id,
                 "left": r.left_image, "right": r.right_image,
                 "chosen": r.chosen, "at_ms": r.t_ms}
                for r in self.choices.values()
            ],
            "exposure": self.exposure,
            "serve_counter": self.serve_counter,
        }

    def _load_state(self, state: dict) -> None:
        for s in state["sessions"]:
            self.sessions[s["session_id"]] = Session(
                session_id=s["session_id"],
                demographics=s["demographics"],
                created_at_ms=s["created_at_ms"],
                pairs_served=s["pairs_served"],
                answered=s["answered"],
                state=s["state"],
                last_activity_ms=s["last_activity_ms"],
                served_pairs={frozenset(p) for p in s["served_pairs"]},
                open_pairs={k: tuple(v) for k, v in s["open_pairs"].items()},
            )
        for a in state["assignments"]:
            self.assignments[a["pair_id"]] = PairAssignment(
                pair_id=a["pair_id"], session_id=a["session_id"],
                left_image=a["left"], right_image=a["right"],
                served_at_ms=a["at_ms"],
            )
        for c in state["choices"]:
            self.choices[(c["session_id"], c["pair_id"])] = ComparisonRecord(
                pair_id=c["pair_id"], left_image=c["left"],
                right_image=c["right"], chosen=c["chosen"],
                session_id=c["session_id"], t_ms=c["at_ms"],
            )
        self.exposure.update(state["exposure"])
        self.serve_counter = state["serve_counter"]

    def snapshot(self) -> None:
        self.log.write_snapshot(self._dump_state())

    def _append(self, event: dict) -> None:
        self.log.append(event)
        self._apply(event)
        every = self.config.snapshot_every
        if every and self.log.event_count % every == 0:
            self.snapshot()

    # -- operations ---------------------------------------------------------

    def create_session(self, demographics: dict) -> Session:
        allowed = {"age_band", "gender"}
        extra = set(demographics) - allowed
        if extra:
            raise ValidationError(
                f"demographics rejects fields: {', '.join(sorted(extra))}"
            )
        if demographics.get("age_band") not in AGE_BANDS:
            raise ValidationError(
                f"age_band must be one of {', '.join(AGE_BANDS)}"
            )
        gender = demographics.get("gender")
        if gender is not None and (not isinstance(gender, str) or len(gender) > 40):
            raise ValidationError("gender must be a short free-text string")
        session_id = self.id_factory()
        self._append({
            "type": "session_created",
            "session_id": session_id,
            "demographics": {k: v for k, v in demographics.items() if v is not None},
            "at_ms": self.clock(),
        })
        return self.sessions[session_id]

    def _session(self, session_id: str) -> Session:
        s = self.sessions.get(session_id)
        if s is None:
            raise NotFoundError(f"unknown session {session_id}")
        return s

    def _partner_ok(self, a: str, b: str) -> bool:
        if self.config.pair_strata == "any" or not self.config.strata:
            return True
        sa = self.config.strata.get(a)
        sb = self.config.strata.get(b)
        if self.config.pair_strata == "same":
            return sa == sb
        return sa != sb

    def _pick_pair(self, session: Session) -> tuple[str, str]:
        counter = self.serve_counter
        if self.config.scheduler == "balanced":
            key = lambda img: (self.exposure[img], _tiebreak(self.config.seed, counter, img))
        else:
            key = lambda img: _tiebreak(self.config.seed, counter, img)
        ranked = sorted(self.config.images, key=key)
        for i, first in enumerate(ranked):
            for second in ranked[i + 1:]:
                if frozenset((first, second)) in session.served_pairs:
                    continue
                if not self._partner_ok(first, second):
                    continue
                if _tiebreak(self.config.seed, counter, "side") & 1:
                    return second, first
                return first, second
        raise NoMorePairsError("no unseen image pair remains for this session")

    def next_pair(self, session_id: str) -> PairAssignment:
        s = self._session(session_id)
        if s.state != "active" or s.pairs_served >= self.config.pairs_per_session:
            raise NoMorePairsError(
                f"session has been served {s.pairs_served} of "
                f"{self.config.pairs_per_session} pairs"
            )
        left, right = self._pick_pair(s)
        pair_id = self.id_factory()
        self._append({
            "type": "pair_served",
            "pair_id": pair_id,
            "session_id": session_id,
            "left": left,
            "right": right,
            "at_ms": self.clock(),
        })
        return self.assignments[pair_id]

    def record_choice(self, session_id: str, pair_id: str, chosen: str) -> ComparisonRecord:
        s = self._session(session_id)
        pa = self.assignments.get(pair_id)
        if pa is None or pa.session_id != session_id:
            raise NotFoundError(f"pair {pair_id} was not served to this session")
        if chosen not in ("left", "right"):
            raise ValidationError("chosen must be 'left' or 'right'")
        key = (session_id, pair_id)
        existing = self.choices.get(key)
        if existing is not None:
            if existing.chosen == chosen:
                return existing  # idempotent client retry after a crash
            raise ConflictError("pair already answered")
        self._append({
            "type": "choice",
            "pair_id": pair_id,
            "session_id": session_id,
            "chosen": chosen,
            "at_ms": self.clock(),
        })
        return self.choices[key]

    def record_gaze_batch(self, session_id: str, image_id: str, samples) -> int:
        s = self._session(session_id)
        now = self.clock()
        if s.state == "abandoned":
            raise NotFoundError("session abandoned")
        if s.state == "complete" and now - s.last_activity_ms > self.config.grace_ms:
            raise NotFoundError("session closed past the grace window")
        samples = list(samples)
        if len(samples) > self.config.gaze_batch_cap:
            raise BatchTooLargeError(
                f"batch of {len(samples)} exceeds cap {self.config.gaze_batch_cap}"
            )
        records = [
            RawGazeSample(
                session_id=session_id, image_id=image_id,
                t_ms=int(sm["t_ms"]), x_px=float(sm["x_px"]),
                y_px=float(sm["y_px"]), valid=bool(sm["valid"]),
            )
            for sm in samples
        ]
        text = serialize_gaze_log(records)
        if text:
            self.log.append_gaze(session_id, text.splitlines())
        return len(records)

    def sweep_abandoned(self) -> int:
        """Mark sessions without recent activity; returns how many flipped."""
        now = self.clock()
        flipped = 0
        for s in list(self.sessions.values()):
            if s.state == "active" and now - s.last_activity_ms > self.config.abandon_ttl_ms:
                self._append({
                    "type": "session_abandoned",
                    "session_id": s.session_id,
                    "at_ms": now,
                })
                flipped += 1
        return flipped

    # -- export -------------------------------------------------------------

    def comparison_records(self, include_abandoned: bool = False):
        records = []
        for (session_id, _), rec in sorted(self.choices.items()):
            if not include_abandoned and self.sessions[session_id].state == "abandoned":
                continue
            records.append(rec)
        return records

    def export_logs(self, destination, include_abandoned: bool = False) -> list[str]:
        """Write comparison log, per-session gaze logs, and the session manifest.

        The export is a consistent snapshot of acknowledged state: files are
        written to temporaries and renamed into place.
        """
        from pathlib import Path
        import os
        from ..formats import serialize_comparison_log

        dest = Path(destination)
        try:
            dest.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise IOError(f"cannot create export destination {dest}: {exc}") from exc

        written = []

        def emit(relpath: str, text: str):
            path = dest / relpath
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, path)
            written.append(relpath)

        emit("comparisons.jsonl",
             serialize_comparison_log(self.comparison_records(include_abandoned)))

        sessions_lines = []
        for s in sorted(self.sessions.values(), key=lambda s: s.created_at_ms):
            sessions_lines.append(json.dumps({
                "session_id": s.session_id,
                "demographics": s.demographics,
                "created_at_ms": s.created_at_ms,
                "pairs_served": s.pairs_served,
                "answered": s.answered,
                "state": s.state,
            }, separators=(",", ":"), sort_keys=True))
        emit("sessions.jsonl", "\n".join(sessions_lines) + ("\n" if sessions_lines else ""))

        gaze_dir = self.log.gaze_dir()
        gaze_files = sorted(gaze_dir.glob("*.jsonl"))
        any_gaze = False
        for gf in gaze_files:
            session_id = gf.stem
            s = self.sessions.get(session_id)
            if s is None:
                continue
            if not include_abandoned and s.state == "abandoned":
                continue
            emit(f"gaze/{gf.name}", gf.read_text(encoding="utf-8"))
            any_gaze = True
        if not any_gaze:
            (dest / "gaze").mkdir(exist_ok=True)
            emit("gaze/.keep", "")

        return written
