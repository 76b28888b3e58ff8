"""Append-only preference dataset persistence.

Records live in a JSONL file whose first line is a header; appends are
serialized through a sidecar file lock so concurrent judge workers interleave
safely. A corrupt trailing record is dropped with a warning on load. Pending
pairs use a separate journal of pending/resolved events, replayed on load.
"""

from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
from filelock import FileLock

from ..errors import LoadError
from .pairs import PendingPair, PreferencePair

PREFS_FORMAT = "diffdrive-prefs"
PREFS_VERSION = 1


def _lock(path: Path) -> FileLock:
    return FileLock(str(path) + ".lock")


def _record_to_doc(rec: PreferencePair) -> dict:
    return {
        "pair_id": rec.pair_id,
        "scenario_id": rec.scenario_id,
        "accepted": {"future": rec.accepted_future.tolist(), "anchor": rec.accepted_anchor},
        "rejected": {"future": rec.rejected_future.tolist(), "anchor": rec.rejected_anchor},
        "judge": rec.judge,
        "rationale": rec.rationale,
        "timestamp": rec.timestamp,
    }


def _doc_to_record(doc: dict) -> PreferencePair:
    return PreferencePair(
        pair_id=doc["pair_id"],
        scenario_id=doc["scenario_id"],
        accepted_future=np.array(doc["accepted"]["future"]),
        rejected_future=np.array(doc["rejected"]["future"]),
        accepted_anchor=int(doc["accepted"]["anchor"]),
        rejected_anchor=int(doc["rejected"]["anchor"]),
        judge=doc["judge"],
        rationale=doc.get("rationale", ""),
        timestamp=float(doc["timestamp"]),
    )


def append_records(path, records: list[PreferencePair]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _lock(path):
        new_file = not path.exists() or path.stat().st_size == 0
        with open(path, "a") as f:
            if new_file:
                f.write(json.dumps({"format": PREFS_FORMAT, "version": PREFS_VERSION}) + "\n")
            for rec in records:
                f.write(json.dumps(_record_to_doc(rec), sort_keys=True) + "\n")


def load_pref_dataset(path) -> list[PreferencePair]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise LoadError(f"cannot read preference dataset {path}: {e}") from e
    if not lines:
        raise LoadError(f"{path}: empty preference dataset")
    header = json.loads(lines[0])
    if header.get("format") != PREFS_FORMAT:
        raise LoadError(f"{path}: not a preference dataset")
    if header.get("version") != PREFS_VERSION:
        raise LoadError(f"{path}: unsupported version {header.get('version')}")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(_doc_to_record(json.loads(line)))
        except (json.JSONDecodeError, KeyError):
            warnings.warn(f"{path}: dropping corrupt record at line {i} (and any after it)")
            break
    return records


# -- pending journal -----------------------------------------------------------

def _pending_to_doc(p: PendingPair) -> dict:
    return {
        "event": "pending",
        "pair_id": p.pair_id,
        "scenario_id": p.scenario_id,
        "future_a": p.future_a.tolist(),
        "future_b": p.future_b.tolist(),
        "anchor_a": p.anchor_a,
        "anchor_b": p.anchor_b,
        "detail": p.detail,
        "geometry": p.geometry,
    }


def append_pending(path, pendings: list[PendingPair]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _lock(path):
        with open(path, "a") as f:
            for p in pendings:
                f.write(json.dumps(_pending_to_doc(p), sort_keys=True) + "\n")


def resolve_pending(path, pair_id: str) -> None:
    path = Path(path)
    with _lock(path):
        with open(path, "a") as f:
            f.write(json.dumps({"event": "resolved", "pair_id": pair_id}) + "\n")


def load_pending(path) -> list[PendingPair]:
    """Replay the journal: pending events minus resolved ones, in write order."""
    path = Path(path)
    if not path.exists():
        return []
    active: dict[str, PendingPair] = {}
    for i, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            warnings.warn(f"{path}: dropping corrupt journal line {i} (and any after it)")
            break
        if doc.get("event") == "resolved":
            active.pop(doc.get("pair_id"), None)
        elif doc.get("event") == "pending":
            active[doc["pair_id"]] = PendingPair(
                pair_id=doc["pair_id"],
                scenario_id=doc["scenario_id"],
                future_a=np.array(doc["future_a"]),
                future_b=np.array(doc["future_b"]),
                anchor_a=int(doc["anchor_a"]),
                anchor_b=int(doc["anchor_b"]),
                detail=doc.get("detail", ""),
                geometry=doc.get("geometry", {}),
            )
    return list(active.values())
