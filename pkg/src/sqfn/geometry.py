"""Test geometries: straight pieces, circles, Lipschitz graphs and Cantor sets.

Graphs and curves are positive controls (uniformly rectifiable); the
four-corner Cantor iterates are ADR but purely unrectifiable in the limit and
serve as negative controls. Every generator returns an :class:`AdrSet` whose
total mass is known in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .qm import AdrSet, QuasiMetricSpace

KINDS = ("line", "segment", "circle", "lipschitz_graph", "cantor4", "composite")


@dataclass
class GeometrySpec:
    kind: str
    params: dict = field(default_factory=dict)
    resolution: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown geometry kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "params": _plain(self.params),
                "resolution": self.resolution, "seed": self.seed}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, GeometrySpec):
        return obj.to_dict()
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def generate(spec: GeometrySpec) -> AdrSet:
    if spec.kind != "cantor4" and spec.resolution < 16:
        raise ValueError("resolution must be at least 16")
    return _GENERATORS[spec.kind](spec)


def _embed(coords2, m):
    """Place planar coordinates in the first two axes of R^m."""
    pts = np.zeros((coords2.shape[0], m))
    pts[:, : coords2.shape[1]] = coords2
    return pts


def _line(spec):
    p = spec.params
    length = float(p.get("length", 2.0))
    m = int(p.get("ambient_dim", 2))
    n = spec.resolution
    # midpoints of n equal cells: the cloud is the midpoint rule for sigma
    t = -length / 2 + (np.arange(n) + 0.5) * (length / n)
    pts = _embed(np.column_stack([t, np.zeros(n)]), m)
    return AdrSet(pts, np.full(n, length / n), dim=1.0, adr_const=2.5,
                  space=QuasiMetricSpace.euclidean(m), labels=np.full(n, "line"),
                  name="line", meta={"length": length})


def _segment(spec):
    p = spec.params
    length = float(p.get("length", 1.0))
    start = float(p.get("start", 0.0))
    m = int(p.get("ambient_dim", 2))
    n = spec.resolution
    t = start + np.linspace(0.0, length, n)
    pts = _embed(np.column_stack([t, np.zeros(n)]), m)
    return AdrSet(pts, np.full(n, length / n), dim=1.0, adr_const=2.5,
                  space=QuasiMetricSpace.euclidean(m), labels=np.full(n, "segment"),
                  name="segment", meta={"length": length})


def _circle(spec):
    p = spec.params
    radius = float(p.get("radius", 1.0))
    cx, cy = p.get("center", (0.0, 0.0))
    n = spec.resolution
    ang = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
    return AdrSet(pts, np.full(n, 2 * np.pi * radius / n), dim=1.0, adr_const=3.3,
                  space=QuasiMetricSpace.euclidean(2), labels=np.full(n, "circle"),
                  name="circle", meta={"radius": radius})


def sawtooth(t, slope=1.0, period=0.25):
    """Triangle wave with slopes +-slope, vanishing at multiples of ``period``."""
    u = np.mod(t, period)
    return slope * np.minimum(u, period - u)


def _graph_profile(p):
    profile = p.get("profile", "sawtooth")
    if profile == "sawtooth":
        L = float(p.get("lipschitz", 1.0))
        P = float(p.get("period", 0.25))
        return L, (lambda t: sawtooth(t, L, P)), (lambda t: np.where(np.mod(t, P) < P / 2, L, -L))
    if profile == "sine":
        A = float(p.get("amplitude", 0.05))
        P = float(p.get("period", 0.5))
        w = 2 * np.pi / P
        return A * w, (lambda t: A * np.sin(w * t)), (lambda t: A * w * np.cos(w * t))
    if profile == "flat":
        return 0.0, (lambda t: np.zeros_like(t)), (lambda t: np.zeros_like(t))
    raise ValueError(f"unknown graph profile {profile!r}")


def lipschitz_violations(t, values, lipschitz, n_random=1000, seed=0):
    """Pairs of graph samples whose slope exceeds ``lipschitz``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    tol = 1e-9 * max(1.0, lipschitz)
    bad = int(np.sum(np.abs(np.diff(v)) > (lipschitz + tol) * np.abs(np.diff(t))))
    rng = np.random.default_rng(seed)
    i = rng.integers(0, t.size, n_random)
    j = rng.integers(0, t.size, n_random)
    keep = i != j
    i, j = i[keep], j[keep]
    bad += int(np.sum(np.abs(v[i] - v[j]) > (lipschitz + tol) * np.abs(t[i] - t[j])))
    return bad


def _lipschitz_graph(spec):
    p = spec.params
    a, b = (float(x) for x in p.get("interval", (-1.0, 1.0)))
    n = spec.resolution
    t = a + (np.arange(n) + 0.5) * ((b - a) / n)
    if p.get("profile") == "samples":
        values = np.asarray(p["values"], dtype=float)
        L = float(p["lipschitz"])
        if values.size != n:
            raise ValueError("graph samples must match the resolution")
        if lipschitz_violations(t, values, L, seed=spec.seed):
            raise ValueError("graph samples violate the declared Lipschitz constant")
        seg = np.hypot(np.diff(t), np.diff(values))
        speed = np.empty(n)
        speed[1:-1] = 0.5 * (seg[:-1] + seg[1:])
        speed[0], speed[-1] = seg[0], seg[-1]
        total = seg.sum() * n / (n - 1)
        slope = np.gradient(values, t)
    else:
        L, phi, dphi = _graph_profile(p)
        values = phi(t)
        if lipschitz_violations(t, values, L, seed=spec.seed):
            raise ValueError("profile violates its Lipschitz constant")
        slope = dphi(t)
        speed = np.sqrt(1 + slope ** 2)
        if p.get("profile", "sawtooth") in ("sawtooth", "flat"):
            total = math.sqrt(1 + L ** 2) * (b - a)
        else:
            total = quad(lambda s: math.sqrt(1 + float(dphi(np.array(s))) ** 2), a, b, limit=400)[0]
    weights = total * speed / speed.sum()
    if p.get("label_branches", False):
        labels = np.where(slope >= 0, "rise", "fall")
    else:
        labels = np.full(n, "graph")
    pts = np.column_stack([t, values])
    return AdrSet(pts, weights, dim=1.0, adr_const=float(p.get("adr_const", 4.0)),
                  space=QuasiMetricSpace.euclidean(2), labels=labels,
                  name=f"graph:{p.get('profile', 'sawtooth')}",
                  meta={"lipschitz": L, "arc_length": total})


def cantor_points(generation: int) -> np.ndarray:
    """Centres of the 4**g squares of the g-th four-corner Cantor iterate."""
    pts = np.array([[0.5, 0.5]])
    side = 1.0
    corners = np.array([[-1, -1], [1, -1], [-1, 1], [1, 1]], dtype=float)
    for _ in range(generation):
        child = side / 4
        offset = (side - child) / 2
        pts = (pts[:, None, :] + offset * corners[None, :, :]).reshape(-1, 2)
        side = child
    return pts


def _cantor4(spec):
    g = int(spec.params.get("generation", 3))
    if 4 ** g < 16:
        raise ValueError("resolution must be at least 16 (generation >= 2)")
    pts = cantor_points(g)
    n = pts.shape[0]
    # self-similar splitting: mass 1/4 per child per generation
    return AdrSet(pts, np.full(n, 4.0 ** -g), dim=1.0,
                  adr_const=float(spec.params.get("adr_const", 8.0)),
                  space=QuasiMetricSpace.euclidean(2), labels=None,
                  name=f"cantor4:g{g}", meta={"generation": g})


def _composite(spec):
    pieces = spec.params.get("pieces")
    if not pieces:
        raise ValueError("composite geometry needs 'pieces'")
    pts, wts, labels = [], [], []
    for k, piece in enumerate(pieces):
        if isinstance(piece, dict):
            piece = GeometrySpec(**piece)
        if piece.kind == "composite":
            raise ValueError("nested composites are not supported")
        sub = generate(piece)
        label = piece.params.get("label", f"piece{k}")
        pts.append(sub.points)
        wts.append(sub.weights)
        if piece.params.get("lipschitz_piece", True):
            labels.append(np.full(len(sub), label, dtype=object))
        else:
            labels.append(np.full(len(sub), "", dtype=object))
    lab = np.concatenate(labels).astype(str)
    return AdrSet(np.vstack(pts), np.concatenate(wts), dim=1.0,
                  adr_const=float(spec.params.get("adr_const", 6.0)),
                  space=QuasiMetricSpace.euclidean(2), labels=lab, name="composite")


_GENERATORS = {
    "line": _line,
    "segment": _segment,
    "circle": _circle,
    "lipschitz_graph": _lipschitz_graph,
    "cantor4": _cantor4,
    "composite": _composite,
}
