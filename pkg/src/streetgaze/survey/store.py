"""Append-only event log with fsync-before-ack and snapshot-accelerated replay.

Every state change is one JSON line in ``events.log``. Appends are flushed
and fsynced before the caller acknowledges anything to a client, so an
acknowledged record survives a hard kill. Restart replays the log (or a
snapshot plus the log tail) to rebuild identical in-memory state.

Raw gaze samples bypass the event log: they land in per-session files under
``gaze/`` already in the exchange format, also fsynced per batch.
"""

from __future__ import annotations

import json
import os
from pathlib import Path


class EventLog:
    def __init__(self, data_dir):
        self.dir = Path(data_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.path = self.dir / "events.log"
        self.snapshot_path = self.dir / "snapshot.json"
        self._fh = open(self.path, "a", encoding="utf-8")
        self._count = self._count_lines()

    def _count_lines(self) -> int:
        if not self.path.exists():
            return 0
        with open(self.path, "r", encoding="utf-8") as fh:
            return sum(1 for ln in fh if ln.strip())

    @property
    def event_count(self) -> int:
        return self._count

    def append(self, event: dict) -> None:
        """Durably append one event: write, flush, fsync, then return."""
        self._fh.write(json.dumps(event, separators=(",", ":"), sort_keys=True) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._count += 1

    def read_events(self, skip: int = 0):
        """Yield events in order, skipping the first ``skip`` lines.

        A torn final line (crash mid-write before the flush completed) is
        ignored; it was never acknowledged.
        """
        if not self.path.exists():
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(ln for ln in fh if ln.strip()):
                if i < skip:
                    continue
                try:
                    yield json.loads(line)
                except ValueError:
                    return

    def write_snapshot(self, state: dict) -> None:
        """Atomically persist a state snapshot tagged with the log offset."""
        payload = {"applied_events": self._count, "state": state}
        tmp = self.snapshot_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, separators=(",", ":"), sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.snapshot_path)

    def read_snapshot(self):
        if not self.snapshot_path.exists():
            return None
        try:
            return json.loads(self.snapshot_path.read_text(encoding="utf-8"))
        except ValueError:
            return None

    def gaze_dir(self) -> Path:
        d = self.dir / "gaze"
        d.mkdir(exist_ok=True)
        return d

    def append_gaze(self, session_id: str, lines: list[str]) -> None:
        path = self.gaze_dir() / f"{session_id}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def close(self) -> None:
        self._fh.close()
