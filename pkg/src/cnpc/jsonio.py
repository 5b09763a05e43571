"""Canonical JSON emission and content digests.

Every file the package writes (models, circuits, predictors, manifests,
reports) goes through `dumps_canonical` so that identical in-memory objects
produce byte-identical files: keys sorted, floats printed with 17
significant digits (exact double round-trip).
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (lossless for doubles)."""
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite value not serializable: {x!r}")
    return format(float(x), ".17g")


def dumps_canonical(obj: Any) -> str:
    """Serialize to canonical JSON: sorted keys, .17g floats, no whitespace
    variation."""
    parts: list[str] = []
    _emit(obj, parts)
    return "".join(parts)


def _emit(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        keys = sorted(obj.keys())
        for i, k in enumerate(keys):
            if not isinstance(k, str):
                raise TypeError(f"non-string JSON key: {k!r}")
            if i:
                out.append(",")
            out.append(json.dumps(k, ensure_ascii=False))
            out.append(":")
            _emit(obj[k], out)
        out.append("}")
    else:
        raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def write_canonical(path: str | Path, obj: Any) -> str:
    """Write canonical JSON to `path`; returns the sha256 of the content."""
    text = dumps_canonical(obj)
    Path(path).write_text(text, encoding="utf-8")
    return sha256_hex(text)


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
