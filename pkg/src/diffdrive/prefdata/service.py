"""Human-labeling HTTP service over the pending-pair queue.

API (JSON):
  GET  /pairs/next          -> {"pair": {...} | null, "remaining": int}
  POST /pairs/{id}/label    body {"choice": "A"|"B"|"skip", "rationale"?}
  GET  /stats               -> counts by judge type plus queue state

Claims are atomic: a served pair is not re-served until its claim expires.
A skip leaves the claim in place, so the pair returns to the pool only after
the timeout. Labeling an already-labeled pair yields 409.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .pairs import PendingPair, PreferencePair
from .store import append_records, load_pending, load_pref_dataset, resolve_pending


class LabelQueue:
    """Thread-safe claim/label state over the persisted journal and records."""

    def __init__(self, records_path, pending_path, claim_timeout: float = 120.0,
                 clock=time.monotonic, wall_clock=time.time):
        self.records_path = Path(records_path)
        self.pending_path = Path(pending_path)
        self.claim_timeout = claim_timeout
        self.clock = clock
        self.wall_clock = wall_clock
        self._lock = threading.Lock()
        self.pending: dict[str, PendingPair] = {
            p.pair_id: p for p in load_pending(self.pending_path)
        }
        self.claims: dict[str, float] = {}
        self.labeled: set[str] = set()
        if self.records_path.exists():
            for rec in load_pref_dataset(self.records_path):
                self.labeled.add(rec.pair_id)
        for pid in self.labeled:
            self.pending.pop(pid, None)

    def next_pair(self) -> PendingPair | None:
        with self._lock:
            now = self.clock()
            for pid, pair in self.pending.items():
                if self.claims.get(pid, -np.inf) > now:
                    continue
                self.claims[pid] = now + self.claim_timeout
                return pair
            return None

    def remaining(self) -> int:
        with self._lock:
            return len(self.pending)

    def label(self, pair_id: str, choice: str, rationale: str) -> tuple[int, dict]:
        with self._lock:
            if pair_id in self.labeled:
                return 409, {"error": "pair already labeled"}
            pair = self.pending.get(pair_id)
            if pair is None:
                return 404, {"error": "unknown pair id"}
            if choice == "skip":
                return 200, {"status": "skipped"}
            if choice not in ("A", "B"):
                return 422, {"error": f"choice must be A, B, or skip, got {choice!r}"}
            accepted, rejected = (
                (pair.future_a, pair.future_b) if choice == "A" else (pair.future_b, pair.future_a)
            )
            anchors = (
                (pair.anchor_a, pair.anchor_b) if choice == "A" else (pair.anchor_b, pair.anchor_a)
            )
            rec = PreferencePair(
                pair_id=pair.pair_id,
                scenario_id=pair.scenario_id,
                accepted_future=np.asarray(accepted),
                rejected_future=np.asarray(rejected),
                accepted_anchor=anchors[0],
                rejected_anchor=anchors[1],
                judge="human",
                rationale=rationale,
                timestamp=self.wall_clock(),
            )
            append_records(self.records_path, [rec])
            resolve_pending(self.pending_path, pair_id)
            self.labeled.add(pair_id)
            self.pending.pop(pair_id, None)
            self.claims.pop(pair_id, None)
            return 200, {"status": "labeled", "pair_id": pair_id}

    def stats(self) -> dict:
        with self._lock:
            by_judge: dict[str, int] = {}
            if self.records_path.exists():
                for rec in load_pref_dataset(self.records_path):
                    by_judge[rec.judge] = by_judge.get(rec.judge, 0) + 1
            now = self.clock()
            claimed = sum(1 for t in self.claims.values() if t > now)
            return {"by_judge": by_judge, "pending": len(self.pending), "claimed": claimed}


class LabelBody(BaseModel):
    choice: str
    rationale: str = ""


def _pair_payload(pair: PendingPair) -> dict:
    return {
        "pair_id": pair.pair_id,
        "scenario_id": pair.scenario_id,
        "futures": {"A": pair.future_a.tolist(), "B": pair.future_b.tolist()},
        "anchors": {"A": pair.anchor_a, "B": pair.anchor_b},
        "geometry": pair.geometry,
    }


def make_app(queue: LabelQueue, static_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="diffdrive labeler")

    @app.get("/pairs/next")
    def pairs_next():
        pair = queue.next_pair()
        return {
            "pair": _pair_payload(pair) if pair is not None else None,
            "remaining": queue.remaining(),
        }

    @app.post("/pairs/{pair_id}/label")
    def label(pair_id: str, body: LabelBody):
        status, doc = queue.label(pair_id, body.choice, body.rationale)
        return JSONResponse(status_code=status, content=doc)

    @app.get("/stats")
    def stats():
        return queue.stats()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app
