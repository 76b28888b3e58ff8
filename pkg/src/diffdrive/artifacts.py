"""Artifact provenance: content hashing, per-stage metadata, lookups.

Every stage writes meta/<stage>.json recording the resolved config hash, the
seed, input artifact hashes, and output file hashes, so the chain from a
benchmark report back to the raw config is reconstructable.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import MissingArtifactError
from .rng import stream_key


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def derive_seed(seed: int, salt: int) -> int:
    return stream_key(seed, salt) % (2**31)


def meta_path(workdir: Path, stage: str) -> Path:
    return Path(workdir) / "meta" / f"{stage}.json"


def write_meta(workdir: Path, stage: str, cfg_hash: str, seed: int,
               inputs: dict[str, str], outputs: dict[str, Path], extra: dict | None = None):
    doc = {
        "stage": stage,
        "config_hash": cfg_hash,
        "seed": seed,
        "inputs": inputs,
        "outputs": {str(Path(p).name): sha256_file(p) for _, p in outputs.items()},
        "output_paths": {k: str(p) for k, p in outputs.items()},
    }
    if extra:
        doc.update(extra)
    path = meta_path(workdir, stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return doc


def read_meta(workdir: Path, stage: str, needed_by: str) -> dict:
    path = meta_path(workdir, stage)
    if not path.exists():
        raise MissingArtifactError(
            f"stage '{needed_by}' needs artifacts from '{stage}'; run `diffdrive {stage}` first"
        )
    return json.loads(path.read_text())


def artifact_path(workdir: Path, stage: str, key: str, needed_by: str) -> Path:
    meta = read_meta(workdir, stage, needed_by)
    paths = meta.get("output_paths", {})
    if key not in paths:
        raise MissingArtifactError(
            f"stage '{stage}' did not record output {key!r}; re-run `diffdrive {stage}`"
        )
    p = Path(paths[key])
    if not p.exists():
        raise MissingArtifactError(
            f"artifact {p} from stage '{stage}' is missing; re-run `diffdrive {stage}`"
        )
    recorded = meta["outputs"].get(p.name)
    if recorded and sha256_file(p) != recorded:
        raise MissingArtifactError(
            f"artifact {p} does not match the hash recorded by stage '{stage}'; re-run it"
        )
    return p


def hash_directory(paths: list[Path]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths, key=lambda q: q.name):
        h.update(p.name.encode())
        h.update(bytes.fromhex(sha256_file(p)))
    return h.hexdigest()
