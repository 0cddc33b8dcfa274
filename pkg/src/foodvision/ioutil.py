"""Small shared I/O helpers: canonical JSON and parameter hashing."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path


def dumps_canonical(obj) -> str:
    """Stable JSON text: fixed separators, preserved key order, newline end.

    Floats round-trip exactly through json (repr shortest form), so
    serialize -> parse -> serialize is byte-identical.
    """
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_canonical(obj), encoding="utf-8")


def read_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def params_digest(model) -> str:
    """SHA-256 over all named parameter buffers, order-sensitive."""
    h = hashlib.sha256()
    for name, p in model.parameters():
        h.update(name.encode("utf-8"))
        h.update(p.data.tobytes())
    return h.hexdigest()
