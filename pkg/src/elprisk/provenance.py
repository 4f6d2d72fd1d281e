"""Provenance block attached to every written artifact."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import platform
import subprocess
from datetime import datetime, timezone
from enum import Enum
from importlib import metadata
from pathlib import Path
from typing import Any, Mapping, Sequence

TIMESTAMP_KEY = "timestamp_utc"
_DEPENDENCIES = ("numpy",)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def input_digest(path: str | Path) -> str:
    """Content hash of an input; upstream JSON artifacts are hashed without their run timestamp."""
    if Path(path).suffix == ".json":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError, UnicodeDecodeError):
            doc = None
        if isinstance(doc, dict) and isinstance(doc.get("provenance"), dict):
            canonical = json.dumps(without_timestamp(doc), sort_keys=True, separators=(",", ":"))
            return hashlib.sha256(canonical.encode()).hexdigest()
    return file_sha256(path)


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def git_sha() -> str | None:
    try:
        res = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5, check=False,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    return res.stdout.strip() or None if res.returncode == 0 else None


def dependency_snapshot() -> dict:
    versions = {"python": platform.python_version()}
    for name in _DEPENDENCIES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    digest = hashlib.sha256(json.dumps(versions, sort_keys=True).encode()).hexdigest()[:16]
    return {"versions": versions, "id": digest}


def to_jsonable(obj: Any) -> Any:
    """Dataclasses, enums, tuples, sets and non-string keys made JSON-safe."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj) if not f.name.startswith("_")}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(to_jsonable(v) for v in obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if obj != obj else ("inf" if obj > 0 else "-inf")
    return obj


def provenance_block(
    inputs: Sequence[str | Path] = (),
    seeds: Mapping[str, int] | None = None,
    params: Any = None,
    command: str | None = None,
) -> dict:
    return {
        "code_version": {"package": package_version(), "git_sha": git_sha()},
        "dependencies": dependency_snapshot(),
        "seeds": dict(seeds or {}),
        "inputs": {str(p): input_digest(p) for p in inputs},
        "params": to_jsonable(params),
        "command": command,
        TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def without_timestamp(doc: Mapping) -> dict:
    """Copy of an artifact with the provenance timestamp removed, for reproducibility checks."""
    out = json.loads(json.dumps(doc))
    prov = out.get("provenance")
    if isinstance(prov, dict):
        prov.pop(TIMESTAMP_KEY, None)
    return out


def dumps(doc: Any) -> str:
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2, allow_nan=False, default=str)
