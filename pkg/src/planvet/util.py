"""Hashing, canonical serialization, and presentation rounding helpers."""

from __future__ import annotations

import hashlib
import json
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_text(text: str) -> str:
    return sha256_bytes(text.encode("utf-8"))


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj: Any) -> str:
    """Stable serialization: sorted keys, compact separators, no ASCII escaping."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def round4(value: float) -> float:
    """Presentation rounding: 4 decimal places, half-up.

    Applied only at serialization boundaries; internal arithmetic stays
    full precision. ``round()`` is unsuitable here (banker's rounding).
    """
    return float(Decimal(repr(float(value))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def present(obj: Any) -> Any:
    """Recursively apply presentation rounding to every float in a JSON-like tree."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return round4(obj)
    if isinstance(obj, dict):
        return {k: present(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [present(v) for v in obj]
    return obj


def write_json(path: Path | str, obj: Any, *, rounded: bool = True) -> None:
    """Write a deterministic JSON document (sorted keys, trailing newline)."""
    payload = present(obj) if rounded else obj
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path: Path | str) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
