"""Quasi-metric spaces, ADR point clouds, regularized distance and ADR checks.

A set ``E`` of dimension ``d`` inside an ambient space of dimension ``m`` is
represented by a weighted point cloud: each sample carries the measure of the
piece of ``E`` it stands for. Balls are open, ``B(x, r) = {y : rho(x, y) < r}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import cdist

Distance = Callable[[np.ndarray, np.ndarray], np.ndarray]

_CHUNK = 1 << 22  # pair evaluations per brute-force block


def euclidean(x, y):
    """Euclidean distance, broadcasting over leading axes."""
    return np.sqrt(np.sum((np.asarray(x) - np.asarray(y)) ** 2, axis=-1))


@dataclass(frozen=True)
class QuasiMetricSpace:
    """Ambient space ``(X, rho, mu)``.

    ``sym_const`` and ``tri_const`` are the constants in
    ``rho(y, x) <= sym_const * rho(x, y)`` and
    ``rho(x, y) <= tri_const * max(rho(x, z), rho(z, y))``. The ambient measure
    is Lebesgue measure on axis-aligned boxes (``box_measure``).
    """

    ambient_dim: int
    quasi_distance: Distance = euclidean
    sym_const: float = 1.0
    tri_const: float = 2.0
    is_metric: bool = True

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be a positive integer")
        if self.sym_const < 1:
            raise ValueError("symmetry constant must be >= 1")
        if self.tri_const < 1:
            raise ValueError("invalid quasi-triangle constant")

    @classmethod
    def euclidean(cls, m: int) -> "QuasiMetricSpace":
        # |x-y| <= |x-z| + |z-y| <= 2 max(...), hence C_rho = 2
        return cls(ambient_dim=m)

    @property
    def is_euclidean(self) -> bool:
        return self.quasi_distance is euclidean

    def box_measure(self, side):
        return np.asarray(side, dtype=float) ** self.ambient_dim

    @cached_property
    def rho_sharp(self) -> Distance:
        return regularized_metric(self)


def regularized_metric(space: QuasiMetricSpace) -> Distance:
    """Symmetric quasi-distance equivalent to ``space.quasi_distance``.

    Metrics are returned unchanged; otherwise ``max(rho(x, y), rho(y, x))``.
    """
    rho = space.quasi_distance
    if space.is_metric and space.sym_const == 1.0:
        return rho

    def rho_sharp(x, y):
        return np.maximum(rho(x, y), rho(y, x))

    return rho_sharp


def alpha_rho(space: QuasiMetricSpace) -> float:
    """``1 / log2(C_rho)``; infinite for ultrametric-type constants."""
    c = space.tri_const
    if c < 1:
        raise ValueError("invalid quasi-triangle constant")
    if c == 1:
        return math.inf
    return 1.0 / math.log2(c)


def pairwise(rho: Distance, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance matrix ``rho(a_i, b_j)``."""
    if rho is euclidean:
        return cdist(a, b)
    return rho(a[:, None, :], b[None, :, :])


@dataclass(eq=False)
class AdrSet:
    """Weighted point cloud standing in for ``(E, rho|_E, sigma)``.

    ``parent_index`` maps each sample to its index in a larger cloud when the
    set was cut out of one (big pieces share indices with their parent).
    """

    points: np.ndarray
    weights: np.ndarray
    dim: float
    adr_const: float = 1.0
    space: QuasiMetricSpace | None = None
    labels: np.ndarray | None = None
    parent_index: np.ndarray | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise ValueError("empty ADR set")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise ValueError("weights and points differ in length")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise ValueError("non-finite coordinates or weights")
        if np.any(w < 0):
            raise ValueError("negative weight")
        if w.sum() <= 0:
            raise ValueError("total weight must be positive")
        self.points = np.ascontiguousarray(pts)
        self.weights = w
        if self.space is None:
            self.space = QuasiMetricSpace.euclidean(pts.shape[1])
        if self.space.ambient_dim != pts.shape[1]:
            raise ValueError("point dimension does not match the ambient space")
        if not (0 < self.dim < self.space.ambient_dim):
            raise ValueError("need 0 < d < m")
        if self.adr_const < 1:
            raise ValueError("ADR constant must be >= 1")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
        if self.parent_index is not None:
            self.parent_index = np.asarray(self.parent_index, dtype=np.intp)

    def __len__(self):
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.space.ambient_dim

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    @cached_property
    def diam(self) -> float:
        return diam(self)

    @cached_property
    def spacing(self) -> float:
        """Largest nearest-neighbour distance in the cloud."""
        if len(self) < 2:
            return 0.0
        if self.space.is_euclidean:
            d, _ = self.tree.query(self.points, k=2)
            return float(d[:, 1].max())
        best = np.full(len(self), np.inf)
        rho = self.space.rho_sharp
        for lo, blk in _blocks(len(self), len(self)):
            dm = pairwise(rho, self.points[lo:lo + blk], self.points)
            dm[np.arange(dm.shape[0]), np.arange(lo, lo + dm.shape[0])] = np.inf
            best[lo:lo + blk] = dm.min(axis=1)
        return float(best.max())

    def subset(self, index, name: str = "") -> "AdrSet":
        index = np.asarray(index, dtype=np.intp)
        parent = index if self.parent_index is None else self.parent_index[index]
        return AdrSet(
            points=self.points[index],
            weights=self.weights[index],
            dim=self.dim,
            adr_const=self.adr_const,
            space=self.space,
            labels=None if self.labels is None else self.labels[index],
            parent_index=parent,
            name=name or f"{self.name}[subset]",
        )

    def scaled(self, factor: float) -> "AdrSet":
        """Dilate the cloud by ``factor``; masses scale by ``factor**d``."""
        return AdrSet(
            points=self.points * factor,
            weights=self.weights * factor ** self.dim,
            dim=self.dim,
            adr_const=self.adr_const,
            space=self.space,
            labels=self.labels,
            parent_index=self.parent_index,
            name=f"{self.name}*{factor:g}",
            meta=dict(self.meta),
        )


def _blocks(n_rows, n_cols):
    step = max(1, _CHUNK // max(n_cols, 1))
    for lo in range(0, n_rows, step):
        yield lo, step


def delta_E(x, E: AdrSet) -> np.ndarray | float:
    """Regularized distance ``inf_y rho#(x, y)`` from ``x`` to the cloud."""
    if E is None or len(E) == 0:
        raise ValueError("empty ADR set")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if E.space.is_euclidean:
        d, _ = E.tree.query(xs)
    else:
        rho = E.space.rho_sharp
        d = np.empty(xs.shape[0])
        for lo, blk in _blocks(xs.shape[0], len(E)):
            d[lo:lo + blk] = pairwise(rho, xs[lo:lo + blk], E.points).min(axis=1)
    return float(d[0]) if single else d


def diam(E: AdrSet) -> float:
    """Exact diameter of the cloud."""
    n = len(E)
    if n < 2:
        raise ValueError("diameter needs at least two points")
    pts = E.points
    if E.space.is_euclidean and n > 64:
        try:
            hull = ConvexHull(pts)
            pts = pts[hull.vertices]
        except (QhullError, ValueError):
            pass  # degenerate (collinear, flat) clouds: use every point
    rho = E.space.rho_sharp
    best = 0.0
    for lo, blk in _blocks(pts.shape[0], pts.shape[0]):
        best = max(best, float(pairwise(rho, pts[lo:lo + blk], pts).max()))
    return best


@dataclass
class AdrReport:
    best_const: float
    worst_radius: float
    samples: int
    per_radius_ratios: list

    def to_dict(self):
        return {
            "best_const": self.best_const,
            "worst_radius": self.worst_radius,
            "samples": self.samples,
            "per_radius_ratios": self.per_radius_ratios,
        }


def default_radii(E: AdrSet, count: int = 24) -> np.ndarray:
    """Log-spaced radii from the sampling resolution up to ``diam(E)``."""
    top = E.diam
    if top <= 0:
        raise ValueError("degenerate cloud: diam = 0 (a space needs at least two points)")
    low = min(max(4.0 * E.spacing, 1e-3 * top), top)
    return np.geomspace(low, top, count)


def check_adr(E: AdrSet, radii=None, centers=None) -> AdrReport:
    """Measure the ADR constant of ``E`` over a grid of balls.

    For every centre ``x`` and radius ``r`` the ratio
    ``max(sigma(B)/r^d, r^d/(sigma(B)(1 + 4h/r)))`` is formed, ``h`` being the
    largest nearest-neighbour spacing; the slack only loosens the lower bound
    because small balls under-sample.
    """
    top = E.diam
    if top <= 0:
        raise ValueError("degenerate cloud: diam = 0 (a space needs at least two points)")
    radii = default_radii(E) if radii is None else np.asarray(radii, dtype=float).reshape(-1)
    if radii.size == 0 or np.any(radii <= 0) or np.any(radii > top * (1 + 1e-12)):
        raise ValueError("radius out of range")
    radii = np.sort(radii)
    if centers is None:
        n = len(E)
        centers = np.arange(n) if n <= 4096 else np.linspace(0, n - 1, 4096).astype(np.intp)
    centers = np.asarray(centers, dtype=np.intp)
    d = E.dim
    h = E.spacing
    slack = 1.0 + 4.0 * h / radii
    rd = radii ** d
    upper = np.full(radii.size, 0.0)
    lower = np.full(radii.size, 0.0)
    lo_up = np.full(radii.size, np.inf)
    rho = E.space.rho_sharp
    for lo, blk in _blocks(centers.size, len(E)):
        dm = pairwise(rho, E.points[centers[lo:lo + blk]], E.points)
        for k, r in enumerate(radii):
            mass = (dm < r) @ E.weights
            up = mass / rd[k]
            with np.errstate(divide="ignore"):
                low = np.where(mass > 0, rd[k] / (mass * slack[k]), np.inf)
            upper[k] = max(upper[k], up.max())
            lo_up[k] = min(lo_up[k], up.min())
            lower[k] = max(lower[k], low.max())
    per_radius = np.maximum(upper, lower)
    k_worst = int(np.argmax(per_radius))
    table = [
        {
            "radius": float(radii[k]),
            "max_upper": float(upper[k]),
            "min_upper": float(lo_up[k]),
            "max_lower": float(lower[k]),
            "const": float(per_radius[k]),
        }
        for k in range(radii.size)
    ]
    return AdrReport(
        best_const=max(1.0, float(per_radius[k_worst])),
        worst_radius=float(radii[k_worst]),
        samples=int(centers.size * radii.size),
        per_radius_ratios=table,
    )


def quasi_axiom_violations(space: QuasiMetricSpace, points, n_samples=10_000, seed=0):
    """Count violations of the three quasi-distance axioms on random samples."""
    rng = np.random.default_rng(seed)
    pts = np.asarray(points, dtype=float)
    i, j, k = (rng.integers(0, len(pts), n_samples) for _ in range(3))
    x, y, z = pts[i], pts[j], pts[k]
    rho = space.quasi_distance
    dxy, dyx = rho(x, y), rho(y, x)
    dxz, dzy = rho(x, z), rho(z, y)
    same = np.all(x == y, axis=-1)
    tol = 1e-12 * (1 + dxy)
    return {
        "coincidence": int(np.sum((dxy == 0) != same)),
        "symmetry": int(np.sum(dyx > space.sym_const * dxy + tol)),
        "triangle": int(np.sum(dxy > space.tri_const * np.maximum(dxz, dzy) + tol)),
        "samples": int(n_samples),
    }
