"""Dyadic cubes on a point cloud, Whitney cells off it, tents and cones.

Cubes follow a Christ-type construction. Nested greedy nets ``N_k`` (pairwise
separation ``> 2^-k``, scanned in cloud order) supply the centres; at the
finest generation every point joins its nearest net point, and a cube of
generation ``k`` is the union of the generation ``k+1`` cubes whose centres
have it as their nearest ``N_k`` point. Ties go to the lower net index.

The Whitney cover is a quadtree/octree of axis-aligned dyadic boxes: a box of
side ``s`` is kept when ``s <= dist(box, E) <= 6 s`` and split while it is too
close to ``E``, down to side ``eps_min``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.spatial import cKDTree

from .qm import AdrSet, QuasiMetricSpace, pairwise

log = logging.getLogger(__name__)

WHITNEY_UPPER = 6.0


@dataclass(eq=False)
class DyadicCube:
    id: int
    generation: int
    center_index: int
    members: np.ndarray
    side: float
    parent: int | None
    children: list = field(default_factory=list)
    mass: float = 0.0

    def __repr__(self):
        return (f"DyadicCube(id={self.id}, k={self.generation}, center={self.center_index}, "
                f"n={self.members.size}, mass={self.mass:.4g})")


def kappa_of(diameter: float) -> int:
    """Integer ``k`` with ``2^(-k-1) < diameter <= 2^(-k)``."""
    if not diameter > 0:
        raise ValueError("diameter must be positive")
    mant, exp = math.frexp(diameter)  # diameter = mant * 2**exp, mant in [0.5, 1)
    return -(exp - 1) if mant == 0.5 else -exp


@dataclass(eq=False)
class DyadicLattice:
    E: AdrSet
    cubes: list
    generations: dict
    kappa_E: int
    depth: int
    point_cube: np.ndarray  # (n_generations, N) cube id per point and generation
    C_out: float
    C_in: float
    c_ball: float
    C_out_measured: float
    truncated: bool = False
    preorder: np.ndarray | None = None
    subtree_end: np.ndarray | None = None

    @property
    def finest(self) -> int:
        return self.kappa_E + len(self.generations) - 1

    @property
    def root(self) -> DyadicCube:
        return self.cubes[self.generations[self.kappa_E][0]]

    def generation(self, k):
        return [self.cubes[i] for i in self.generations[k]]

    def owns(self, Q: DyadicCube) -> bool:
        return 0 <= Q.id < len(self.cubes) and self.cubes[Q.id] is Q

    def cube_of(self, point_index, k):
        return self.cubes[int(self.point_cube[k - self.kappa_E, point_index])]

    def is_descendant(self, a: int, b: int) -> bool:
        """True when cube ``a`` is ``b`` or lies inside it."""
        return self.preorder[b] <= self.preorder[a] < self.subtree_end[b]

    def descendant_mask(self, ids, Q: DyadicCube) -> np.ndarray:
        ids = np.asarray(ids)
        ok = ids >= 0
        pre = np.where(ok, self.preorder[np.where(ok, ids, 0)], -1)
        return ok & (pre >= self.preorder[Q.id]) & (pre < self.subtree_end[Q.id])

    def descendants(self, Q: DyadicCube, max_gap=None):
        out, frontier = [], [Q.id]
        gap = 0
        while frontier:
            out.extend(frontier)
            if max_gap is not None and gap >= max_gap:
                break
            frontier = [c for i in frontier for c in self.cubes[i].children]
            gap += 1
        return [self.cubes[i] for i in out]

    def to_json(self) -> dict:
        def node(i):
            q = self.cubes[i]
            return {"id": q.id, "generation": q.generation, "center_index": q.center_index,
                    "members": q.members.tolist(), "mass": q.mass,
                    "children": [node(c) for c in q.children]}
        return {"kappa_E": self.kappa_E, "depth": self.depth, "C_in": self.C_in,
                "C_out": self.C_out, "C_out_measured": self.C_out_measured,
                "c_ball": self.c_ball, "truncated": self.truncated, "root": node(self.root.id)}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


# --- nets ------------------------------------------------------------------------

def _nearest(points, net_pts, net_idx, rho):
    """Index (into ``net_idx``) of the nearest net point; ties -> lower net index."""
    if rho is None:
        k = min(2, len(net_idx))
        d, j = cKDTree(net_pts).query(points, k=k)
        if k == 1:
            return j
        d0, d1 = d[:, 0], d[:, 1]
        j0, j1 = j[:, 0], j[:, 1]
        tie = np.abs(d1 - d0) <= 1e-13 * np.maximum(d0, 1e-300)
        swap = tie & (net_idx[j1] < net_idx[j0])
        return np.where(swap, j1, j0)
    out = np.empty(points.shape[0], dtype=np.intp)
    step = max(1, (1 << 22) // max(1, len(net_idx)))
    for lo in range(0, points.shape[0], step):
        out[lo:lo + step] = np.argmin(pairwise(rho, points[lo:lo + step], net_pts), axis=1)
    return out


def _extend_net(points, net, sep, rho):
    """Greedily add points (in index order) lying farther than ``sep`` from the net."""
    n = points.shape[0]
    in_net = np.zeros(n, bool)
    in_net[net] = True
    if rho is None:
        d, _ = cKDTree(points[net]).query(points, distance_upper_bound=sep * (1 + 1e-12))
        candidates = np.flatnonzero((d > sep) & ~in_net)
        added = []
        grid = {}
        m = points.shape[1]
        offsets = list(product((-1, 0, 1), repeat=m))
        for i in candidates:
            p = points[i]
            key = tuple(np.floor(p / sep).astype(np.int64))
            clash = False
            for off in offsets:
                for q in grid.get(tuple(k + o for k, o in zip(key, off)), ()):
                    if np.sqrt(np.sum((points[q] - p) ** 2)) <= sep:
                        clash = True
                        break
                if clash:
                    break
            if not clash:
                added.append(i)
                grid.setdefault(key, []).append(i)
        return np.concatenate([net, np.asarray(added, dtype=np.intp)])
    current = list(net)
    for i in range(n):
        if in_net[i]:
            continue
        if not current or pairwise(rho, points[i:i + 1], points[current]).min() > sep:
            current.append(i)
    return np.asarray(current, dtype=np.intp)


def build_lattice(E: AdrSet, depth: int) -> DyadicLattice:
    """Dyadic cubes of generations ``kappa_E .. kappa_E + depth`` on ``E``."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    rho = None if E.space.is_euclidean else E.space.rho_sharp
    pts = E.points
    n = len(E)
    kappa = kappa_of(E.diam)
    nets = []
    net = np.zeros(0, dtype=np.intp)
    truncated = False
    for g in range(depth + 1):
        sep = 2.0 ** -(kappa + g)
        net = _extend_net(pts, net, sep, rho) if net.size else _extend_net(pts, np.array([0]), sep, rho)
        net = np.sort(net)
        nets.append(net)
        if net.size == n and g < depth:
            truncated = True
            log.warning("lattice truncated at generation %d: every cube is a singleton", kappa + g)
            break
    n_gen = len(nets)
    # finest generation: nearest net point
    owner = np.empty((n_gen, n), dtype=np.intp)  # index of the centre point
    fine = nets[-1]
    owner[-1] = fine[_nearest(pts, pts[fine], fine, rho)]
    # coarser: a child's centre picks its nearest coarser net point
    parent_centre = []
    for g in range(n_gen - 2, -1, -1):
        coarse, child_net = nets[g], nets[g + 1]
        pc = coarse[_nearest(pts[child_net], pts[coarse], coarse, rho)]
        pc[np.isin(child_net, coarse)] = child_net[np.isin(child_net, coarse)]
        lookup = dict(zip(child_net.tolist(), pc.tolist()))
        parent_centre.append(lookup)
        owner[g] = np.fromiter((lookup[c] for c in owner[g + 1]), dtype=np.intp, count=n)
    parent_centre.reverse()

    cubes, generations = [], {}
    point_cube = np.empty((n_gen, n), dtype=np.intp)
    id_of = []
    for g in range(n_gen):
        k = kappa + g
        centres = np.unique(owner[g])
        ids = {}
        order = np.argsort(owner[g], kind="stable")
        bounds = np.searchsorted(owner[g][order], centres)
        bounds = np.append(bounds, n)
        for t, c in enumerate(centres):
            members = np.sort(order[bounds[t]:bounds[t + 1]])
            q = DyadicCube(id=len(cubes), generation=k, center_index=int(c), members=members,
                           side=2.0 ** -k, parent=None, mass=float(E.weights[members].sum()))
            if g > 0:
                q.parent = id_of[g - 1][parent_centre[g - 1][int(c)]]
                cubes[q.parent].children.append(q.id)
            ids[int(c)] = q.id
            cubes.append(q)
        id_of.append(ids)
        generations[k] = [ids[int(c)] for c in centres]
        point_cube[g] = np.fromiter((ids[c] for c in owner[g].tolist()), dtype=np.intp, count=n)

    preorder = np.empty(len(cubes), dtype=np.intp)
    subtree_end = np.empty(len(cubes), dtype=np.intp)
    counter = 0
    stack = [(generations[kappa][0], False)]
    while stack:
        i, done = stack.pop()
        if done:
            subtree_end[i] = counter
            continue
        preorder[i] = counter
        counter += 1
        stack.append((i, True))
        stack.extend((c, False) for c in reversed(cubes[i].children))

    lat = DyadicLattice(E=E, cubes=cubes, generations=generations, kappa_E=kappa,
                        depth=n_gen - 1, point_cube=point_cube, C_out=2.0, C_in=0.0,
                        c_ball=0.0, C_out_measured=0.0, truncated=truncated,
                        preorder=preorder, subtree_end=subtree_end)
    _measure_constants(lat)
    return lat


def _measure_constants(lat: DyadicLattice):
    E = lat.E
    rho = E.space.rho_sharp
    c_out, c_in, c_ball = 0.0, math.inf, math.inf
    for k, ids in lat.generations.items():
        qs = [lat.cubes[i] for i in ids]
        centres = E.points[[q.center_index for q in qs]]
        side = 2.0 ** -k
        c_ball = min(c_ball, min(q.mass for q in qs) / side ** E.dim)
        step = max(1, (1 << 22) // len(E))
        for lo in range(0, len(qs), step):
            dm = pairwise(rho, centres[lo:lo + step], E.points)
            owner = lat.point_cube[k - lat.kappa_E]
            for t, q in enumerate(qs[lo:lo + step]):
                inside = owner == q.id
                c_out = max(c_out, dm[t, inside].max() / side)
                if not inside.all():
                    c_in = min(c_in, dm[t, ~inside].min() / side)
    lat.C_out_measured = float(c_out)
    if not (E.space.is_metric and E.space.sym_const == 1.0):
        # the 2 = sum of 2^-j bound needs the triangle inequality
        lat.C_out = float(c_out)
    lat.C_in = float(c_in) if math.isfinite(c_in) else 1.0
    lat.c_ball = float(c_ball)


# --- Whitney cover ---------------------------------------------------------------

@dataclass(eq=False)
class WhitneyCover:
    """Dyadic boxes in ``X \\ E`` plus their quadrature nodes.

    Per cell: lower corner ``lo``, ``side``, ``center``, ``measure``,
    ``dist`` (regularized distance at the centre) and ``gap`` (distance from
    the whole box to the cloud, the quantity the Whitney rule is applied to).
    Boxes with ``side > dist / 2`` carry ``2^m`` sub-box nodes, the rest one.
    """

    E: AdrSet
    space: QuasiMetricSpace
    lo: np.ndarray
    side: np.ndarray
    center: np.ndarray
    measure: np.ndarray
    dist: np.ndarray
    gap: np.ndarray
    truncation_radius: float
    eps_min: float
    node_center: np.ndarray
    node_measure: np.ndarray
    node_delta: np.ndarray
    node_cell: np.ndarray
    lattice: DyadicLattice | None = None
    assignment: np.ndarray | None = None
    c_assign: float = 8.0

    def __len__(self):
        return self.side.size

    @property
    def n_nodes(self):
        return self.node_measure.size

    def locate(self, x) -> np.ndarray:
        """Number of cells containing each point (0, 1, or more on overlap)."""
        x = np.atleast_2d(np.asarray(x, float))
        count = np.zeros(x.shape[0], dtype=np.intp)
        for s in np.unique(self.side):
            sel = self.side == s
            keys = {tuple(k) for k in np.rint(self.lo[sel] / s).astype(np.int64).tolist()}
            kx = np.floor(x / s).astype(np.int64)
            count += np.fromiter((tuple(k) in keys for k in kx.tolist()), dtype=np.intp,
                                 count=x.shape[0])
        return count

    def to_csv(self) -> str:
        m = self.center.shape[1]
        head = ",".join([f"c{i}" for i in range(m)] + ["side", "dist", "cube_id"])
        assign = self.assignment if self.assignment is not None else np.full(len(self), -1)
        rows = [head]
        for c, s, d, a in zip(self.center, self.side, self.dist, assign):
            rows.append(",".join([repr(float(v)) for v in c] + [repr(float(s)), repr(float(d)), str(int(a))]))
        return "\n".join(rows) + "\n"


def box_distance(E: AdrSet, lo: np.ndarray, side: float, centers=None, delta_c=None):
    """Exact Euclidean distance from each box ``[lo, lo + side)`` to the cloud."""
    if centers is None:
        centers = lo + side / 2
    if delta_c is None:
        delta_c, _ = E.tree.query(centers)
    half_diag = side * math.sqrt(lo.shape[1]) / 2
    out = np.empty(lo.shape[0])
    lists = E.tree.query_ball_point(centers, delta_c + half_diag + 1e-12 * side)
    lengths = np.fromiter((len(l) for l in lists), dtype=np.intp, count=len(lists))
    flat = np.fromiter((i for l in lists for i in l), dtype=np.intp, count=int(lengths.sum()))
    owner = np.repeat(np.arange(lo.shape[0]), lengths)
    p = E.points[flat]
    c = centers[owner]
    excess = np.maximum(np.abs(p - c) - side / 2, 0.0)
    d = np.sqrt(np.sum(excess ** 2, axis=1))
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    nonempty = lengths > 0
    out[:] = delta_c
    out[nonempty] = np.minimum.reduceat(d, starts[nonempty]) if flat.size else delta_c[nonempty]
    return out


def whitney_cover(X: QuasiMetricSpace, E: AdrSet, truncation_radius: float | None = None,
                  eps_min: float | None = None, lattice: DyadicLattice | None = None,
                  c_assign: float = 8.0) -> WhitneyCover:
    """Whitney cells of ``X \\ E`` within ``truncation_radius`` of ``E``."""
    if not X.is_euclidean or X is not E.space and X.ambient_dim != E.m:
        raise ValueError("Whitney cover is implemented for Euclidean ambient spaces")
    m = X.ambient_dim
    if m > 3:
        raise ValueError("Whitney cover supports ambient dimension <= 3")
    D = E.diam
    R = 4.0 * D if truncation_radius is None else float(truncation_radius)
    if R < D * (1 - 1e-12):
        raise ValueError("truncation_radius must be at least diam(E)")
    if eps_min is None:
        eps_min = 2.0 ** math.floor(math.log2(max(D, 1e-300) / 128))
    if not eps_min > 0:
        raise ValueError("eps_min must be positive")
    if eps_min >= R:
        raise ValueError("eps_min must be smaller than truncation_radius")

    s = 2.0 ** math.ceil(math.log2(R))
    lo_box = E.points.min(axis=0) - R
    hi_box = E.points.max(axis=0) + R
    axes = [np.arange(math.floor(a / s), math.ceil(b / s)) * s for a, b in zip(lo_box, hi_box)]
    lo = np.array(list(product(*axes)), dtype=float).reshape(-1, m)
    child_off = np.array(list(product((0, 1), repeat=m)), dtype=float)

    acc_lo, acc_side, acc_gap = [], [], []
    while lo.shape[0]:
        gap = box_distance(E, lo, s)
        keep = gap <= R
        lo, gap = lo[keep], gap[keep]
        accept = (gap >= s) & (gap <= WHITNEY_UPPER * s)
        acc_lo.append(lo[accept])
        acc_side.append(np.full(accept.sum(), s))
        acc_gap.append(gap[accept])
        near = gap < s
        if s / 2 < eps_min * (1 - 1e-12):
            break
        parents = lo[near]
        s = s / 2
        lo = (parents[:, None, :] + s * child_off[None, :, :]).reshape(-1, m)

    lo = np.vstack(acc_lo) if acc_lo else np.zeros((0, m))
    side = np.concatenate(acc_side) if acc_side else np.zeros(0)
    gap = np.concatenate(acc_gap) if acc_gap else np.zeros(0)
    center = lo + side[:, None] / 2
    dist, _ = E.tree.query(center) if len(side) else (np.zeros(0), None)
    measure = X.box_measure(side)

    split = side > dist / 2
    nodes_c, nodes_mu, nodes_cell = [center[~split]], [measure[~split]], [np.flatnonzero(~split)]
    if split.any():
        idx = np.flatnonzero(split)
        h = side[idx] / 2
        sub = lo[idx][:, None, :] + (child_off[None, :, :] + 0.5) * h[:, None, None]
        nodes_c.append(sub.reshape(-1, m))
        nodes_mu.append(np.repeat(X.box_measure(h), 2 ** m))
        nodes_cell.append(np.repeat(idx, 2 ** m))
    node_cell = np.concatenate(nodes_cell)
    order = np.argsort(node_cell, kind="stable")
    node_center = np.vstack(nodes_c)[order]
    node_measure = np.concatenate(nodes_mu)[order]
    node_cell = node_cell[order]
    node_delta, _ = E.tree.query(node_center) if node_cell.size else (np.zeros(0), None)

    cover = WhitneyCover(E=E, space=X, lo=lo, side=side, center=center, measure=measure,
                         dist=dist, gap=gap, truncation_radius=R, eps_min=float(eps_min),
                         node_center=node_center, node_measure=node_measure,
                         node_delta=np.asarray(node_delta), node_cell=node_cell,
                         c_assign=float(c_assign))
    if lattice is not None:
        assign_cells(cover, lattice, c_assign)
    return cover


def assign_cells(cover: WhitneyCover, lattice: DyadicLattice, c_assign: float = 8.0):
    """Attach each cell to the cube of matching side nearest to it (``U_Q``).

    The generation is the one with ``l(Q)`` closest to the cell side; the
    cube is the one containing the cloud point nearest the cell centre. Cells
    farther than ``c_assign * l(Q)`` from that cube stay unassigned (-1).
    """
    E = cover.E
    _, nearest = E.tree.query(cover.center)
    k = np.clip(np.rint(-np.log2(cover.side)).astype(int), lattice.kappa_E, lattice.finest)
    ids = lattice.point_cube[k - lattice.kappa_E, nearest]
    sides = 2.0 ** -k
    # distance from the box to the cube, bounded above by the box-to-point distance
    excess = np.maximum(np.abs(E.points[nearest] - cover.center) - cover.side[:, None] / 2, 0)
    d_upper = np.sqrt(np.sum(excess ** 2, axis=1))
    ok = d_upper <= c_assign * sides
    for i in np.flatnonzero(~ok):
        members = lattice.cubes[ids[i]].members
        ex = np.maximum(np.abs(E.points[members] - cover.center[i]) - cover.side[i] / 2, 0)
        ok[i] = np.sqrt(np.sum(ex ** 2, axis=1)).min() <= c_assign * sides[i]
    cover.assignment = np.where(ok, ids, -1)
    cover.lattice = lattice
    cover.c_assign = float(c_assign)
    return cover


@dataclass(eq=False)
class Tent:
    cube: DyadicCube
    cells: np.ndarray

    def node_mask(self, cover: WhitneyCover) -> np.ndarray:
        mask = np.zeros(len(cover), bool)
        mask[self.cells] = True
        return mask[cover.node_cell]


def tent(Q: DyadicCube, cover: WhitneyCover) -> Tent:
    """Cells assigned to ``Q`` or to any of its descendants."""
    lat = cover.lattice
    if lat is None or cover.assignment is None:
        raise ValueError("cover has no cube assignment")
    if not lat.owns(Q):
        raise ValueError("cube not in lattice")
    return Tent(Q, np.flatnonzero(lat.descendant_mask(cover.assignment, Q)))


def cone(x, kappa: float, cover: WhitneyCover) -> np.ndarray:
    """Cells whose centres ``y`` satisfy ``rho#(x, y) < (1 + kappa) delta_E(y)``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    x = np.asarray(x, float)
    d = np.sqrt(np.sum((cover.center - x) ** 2, axis=1))
    return np.flatnonzero(d < (1 + kappa) * cover.dist)


def cone_incidence(cover: WhitneyCover, kappa: float):
    """Sparse (points x cells) matrix of cone membership for every cloud point."""
    from scipy.sparse import csr_matrix

    if kappa <= 0:
        raise ValueError("kappa must be positive")
    E = cover.E
    radius = (1 + kappa) * cover.dist
    lists = E.tree.query_ball_point(cover.center, radius)
    lengths = np.fromiter((len(l) for l in lists), dtype=np.intp, count=len(lists))
    pts = np.fromiter((i for l in lists for i in l), dtype=np.intp, count=int(lengths.sum()))
    cells = np.repeat(np.arange(len(cover)), lengths)
    # query_ball_point is closed; the cone is open
    dd = np.sqrt(np.sum((E.points[pts] - cover.center[cells]) ** 2, axis=1))
    strict = dd < radius[cells]
    pts, cells = pts[strict], cells[strict]
    return csr_matrix((np.ones(pts.size), (pts, cells)), shape=(len(E), len(cover)))


# --- invariant checks ------------------------------------------------------------

def classify_cell(side: float, dist: float) -> str:
    """Whitney rule for one box: ``accept``, ``split`` (too close) or ``too_far``."""
    if dist < side:
        return "split"
    if dist > WHITNEY_UPPER * side:
        return "too_far"
    return "accept"


def cover_overlaps(cover: WhitneyCover) -> int:
    """Number of cells that coincide with or lie inside another cell."""
    sides = np.unique(cover.side)
    keys = {}
    for s in sides:
        sel = cover.side == s
        k = np.rint(cover.lo[sel] / s).astype(np.int64)
        keys[s] = {tuple(r) for r in k.tolist()}
    bad = 0
    for s in sides:
        sel = cover.side == s
        k = np.rint(cover.lo[sel] / s).astype(np.int64)
        bad += int(k.shape[0] - len(keys[s]))
        for big in sides[sides > s]:
            kb = np.floor(cover.lo[sel] / big + 1e-9).astype(np.int64)
            bad += sum(tuple(r) in keys[big] for r in kb.tolist())
    return bad


def lattice_violations(lat: DyadicLattice) -> dict:
    """Count failures of partition, nesting, mass and ball containment."""
    E = lat.E
    rho = E.space.rho_sharp
    out = {"partition": 0, "nesting": 0, "mass": 0, "outer_ball": 0, "inner_ball": 0}
    for k, ids in lat.generations.items():
        seen = np.zeros(len(E), dtype=np.intp)
        for i in ids:
            Q = lat.cubes[i]
            seen[Q.members] += 1
            if Q.mass <= 0 or abs(Q.mass - E.weights[Q.members].sum()) > 1e-12 * max(Q.mass, 1):
                out["mass"] += 1
            if Q.parent is not None:
                P = lat.cubes[Q.parent]
                if P.generation != k - 1 or not np.all(np.isin(Q.members, P.members)):
                    out["nesting"] += 1
            elif k != lat.kappa_E:
                out["nesting"] += 1
            if Q.children:
                kids = np.concatenate([lat.cubes[c].members for c in Q.children])
                if kids.size != Q.members.size or not np.array_equal(np.sort(kids), Q.members):
                    out["nesting"] += 1
            d = pairwise(rho, E.points[Q.center_index][None, :], E.points)[0]
            side = 2.0 ** -k
            if np.any(d[Q.members] > lat.C_out * side * (1 + 1e-12)):
                out["outer_ball"] += 1
            inner = np.flatnonzero(d < lat.C_in * side)
            if not np.all(np.isin(inner, Q.members)):
                out["inner_ball"] += 1
        out["partition"] += int(np.sum(seen != 1))
    return out
