"""JSON/CSV helpers shared by the experiment harnesses and the CLI."""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np


def plain(obj):
    """Convert numpy scalars/arrays and dataclass-like objects to JSON types."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.generic):
        return plain(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "to_dict"):
        return plain(obj.to_dict())
    return obj


def digest(obj) -> str:
    """Stable short hash of a JSON-serialisable configuration."""
    text = json.dumps(plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def array_digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def dumps(obj) -> str:
    return json.dumps(plain(obj), indent=2, sort_keys=True)


def curve_csv(x, y, header=("lambda", "measure")) -> str:
    rows = [",".join(header)]
    rows += [f"{float(a)!r},{float(b)!r}" for a, b in zip(x, y)]
    return "\n".join(rows) + "\n"
