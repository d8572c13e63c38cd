"""Versioned text records shared by every artifact the package writes.

Records are JSON objects with sorted keys.  Floats are written with
Python's shortest round-trip repr, so a load followed by a dump reproduces
the file byte for byte.  No timestamps or host details are stored.
"""
from __future__ import annotations

import json
import math
from typing import Any, Mapping

from sphereforge import __version__
from sphereforge.errors import RecordError

FORMAT_VERSION = 1


def _check_finite(obj: Any, path: str = "$") -> None:
    if isinstance(obj, float) and not math.isfinite(obj):
        raise RecordError(f"non-finite value at {path}")
    if isinstance(obj, Mapping):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def wrap(kind: str, body: Mapping, *, config: Mapping | None = None, seed: int | None = None) -> dict:
    rec = {"format_version": FORMAT_VERSION, "kind": kind, "tool_version": __version__}
    rec.update(body)
    if config is not None:
        rec["config"] = dict(config)
    if seed is not None:
        rec["seed"] = int(seed)
    return rec


def dumps(record: Mapping) -> str:
    _check_finite(record)
    return json.dumps(record, sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads(text: str, kind: str | None = None) -> dict:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordError(f"not a valid record: {exc}") from exc
    if not isinstance(rec, dict):
        raise RecordError("record must be a JSON object")
    if rec.get("format_version") != FORMAT_VERSION:
        raise RecordError(f"unsupported format_version {rec.get('format_version')!r}")
    if kind is not None and rec.get("kind") != kind:
        raise RecordError(f"expected a {kind!r} record, found {rec.get('kind')!r}")
    return rec


def write(path, record: Mapping) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(record))


def read(path, kind: str | None = None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise RecordError(f"cannot read {path}: {exc}") from exc
    return loads(text, kind)


def require(rec: Mapping, *keys: str) -> None:
    missing = [k for k in keys if k not in rec]
    if missing:
        raise RecordError(f"record is missing field(s): {', '.join(missing)}")
