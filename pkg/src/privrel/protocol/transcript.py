"""Run transcript: message and stage-timing events, written as JSON lines."""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import IO


class Transcript:
    def __init__(self, path: str | Path | None = None):
        self.events: list[dict] = []
        self._lock = threading.Lock()
        self._start = time.perf_counter()
        self._fh: IO[str] | None = open(path, "w") if path else None

    def record(self, party: str, event: str, **fields) -> dict:
        entry = {"t": round(time.perf_counter() - self._start, 6), "party": party, "event": event, **fields}
        with self._lock:
            self.events.append(entry)
            if self._fh:
                self._fh.write(json.dumps(entry, sort_keys=True) + "\n")
                self._fh.flush()
        return entry

    def stage(self, party: str, stage: str, seconds: float, **fields) -> dict:
        return self.record(party, "stage", stage=stage, seconds=round(seconds, 6), **fields)

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def stages(self) -> list[dict]:
        return [e for e in self.events if e["event"] == "stage"]

    def messages(self, party: str | None = None, direction: str | None = None) -> list[dict]:
        return [
            e
            for e in self.events
            if e["event"] in ("send", "recv")
            and (party is None or e["party"] == party)
            and (direction is None or e["event"] == direction)
        ]

    def timing_table(self) -> str:
        """Plain-text table of stage timings, one line per party action."""
        rows = [(e["party"], e["stage"], e["seconds"]) for e in self.stages()]
        if not rows:
            return "(no stages recorded)"
        w1 = max(len("party"), *(len(r[0]) for r in rows))
        w2 = max(len("action"), *(len(r[1]) for r in rows))
        lines = [f"{'party':<{w1}}  {'action':<{w2}}  seconds", f"{'-' * w1}  {'-' * w2}  -------"]
        lines += [f"{p:<{w1}}  {s:<{w2}}  {sec:8.3f}" for p, s, sec in rows]
        return "\n".join(lines)


def load_transcript(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
