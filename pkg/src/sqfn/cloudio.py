"""Point clouds as CSV: ``x0,...,x{m-1},weight`` with digest comment lines."""

from __future__ import annotations

import io

import numpy as np

from .qm import AdrSet, QuasiMetricSpace
from .reports import array_digest


class DigestMismatch(ValueError):
    pass


def cloud_to_csv(E: AdrSet, config_digest: str = "") -> str:
    m = E.points.shape[1]
    buf = io.StringIO()
    buf.write(f"# data-digest: {array_digest(E.points, E.weights)}\n")
    if config_digest:
        buf.write(f"# config-digest: {config_digest}\n")
    buf.write(",".join([f"x{i}" for i in range(m)] + ["weight"]) + "\n")
    for p, w in zip(E.points, E.weights):
        buf.write(",".join(repr(float(v)) for v in p) + f",{float(w)!r}\n")
    return buf.getvalue()


def read_cloud_csv(text: str, dim: float = 1.0, adr_const: float = 1.0,
                   expect_config: str | None = None, name: str = "cloud") -> AdrSet:
    """Parse a cloud file; digest comments are checked when present."""
    meta = {}
    rows = []
    header = None
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            meta[key.strip()] = val.strip()
            continue
        if header is None:
            header = line.split(",")
            if header[-1] != "weight" or any(h != f"x{i}" for i, h in enumerate(header[:-1])):
                raise ValueError("cloud CSV header must be x0,...,x{m-1},weight")
            continue
        rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        raise ValueError("cloud CSV has no data")
    arr = np.array(rows)
    pts, w = arr[:, :-1], arr[:, -1]
    if "data-digest" in meta and meta["data-digest"] != array_digest(pts, w):
        raise DigestMismatch("cloud data digest mismatch")
    if expect_config is not None and meta.get("config-digest", expect_config) != expect_config:
        raise DigestMismatch("config digest mismatch: cloud was generated from another config")
    return AdrSet(pts, w, dim=dim, adr_const=adr_const,
                  space=QuasiMetricSpace.euclidean(pts.shape[1]), name=name,
                  meta={"config_digest": meta.get("config-digest", "")})
