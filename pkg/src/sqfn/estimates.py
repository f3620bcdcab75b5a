"""Experiment harnesses: square-function constants, local T(b) testing,
big-piece witnesses, weak-type and L^p/H^p sweeps.

Every routine measures constants on a finite configuration; none of them
evaluates a closed-form bound.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicCube, DyadicLattice, build_lattice, cone_incidence, whitney_cover
from .geometry import GeometrySpec, generate
from .kernels import KernelSpec
from .operators import (SurfaceFunction, _as_matrix, cone_square_function, node_densities,
                        square_energy_batch, tent_nodes, weight_exponent)
from .qm import AdrSet, alpha_rho, check_adr, pairwise
from .reports import digest

log = logging.getLogger(__name__)

_BATCH = 64


# --- test families ---------------------------------------------------------------

@dataclass
class TestFamily:
    """Named columns of test functions on a cloud."""

    __test__ = False  # not a pytest class

    names: list
    values: np.ndarray  # (N, nf)
    spec: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.names)


def cube_indicators(E: AdrSet, lattice: DyadicLattice, generations=None) -> TestFamily:
    gens = sorted(lattice.generations) if generations is None else list(generations)
    names, cols = [], []
    for k in gens:
        for Q in lattice.generation(k):
            v = np.zeros(len(E))
            v[Q.members] = 1.0
            names.append(f"cube:{Q.id}:k{k}")
            cols.append(v)
    return TestFamily(names, np.column_stack(cols), {"indicators": gens})


def random_signs(E: AdrSet, count: int, rng) -> TestFamily:
    vals = rng.choice([-1.0, 1.0], size=(len(E), count))
    return TestFamily([f"sign:{i}" for i in range(count)], vals, {"signs": count})


def smooth_bumps(E: AdrSet, count: int, rng) -> TestFamily:
    """Gaussian bumps at random cloud points, widths log-uniform in [4h, diam/4]."""
    lo, hi = 4 * E.spacing, E.diam / 4
    lo = min(lo, hi)
    centres = rng.integers(0, len(E), count)
    widths = np.exp(rng.uniform(math.log(lo), math.log(hi), count))
    dist = pairwise(E.space.rho_sharp, E.points, E.points[centres])
    vals = np.exp(-0.5 * (dist / widths) ** 2)
    return TestFamily([f"bump:{c}:{w:.3g}" for c, w in zip(centres, widths)], vals,
                      {"bumps": count})


def default_family(E, lattice, seed=0, n_signs=64, n_bumps=16, generations=None) -> TestFamily:
    rng = np.random.default_rng(seed)
    parts = [cube_indicators(E, lattice, generations)]
    if n_signs:
        parts.append(random_signs(E, n_signs, rng))
    if n_bumps:
        parts.append(smooth_bumps(E, n_bumps, rng))
    return TestFamily(sum((p.names for p in parts), []),
                      np.column_stack([p.values for p in parts]),
                      {k: v for p in parts for k, v in p.spec.items()} | {"seed": seed})


def _coerce_family(E, family) -> TestFamily:
    if isinstance(family, TestFamily):
        return family
    if isinstance(family, SurfaceFunction):
        family = [family]
    if isinstance(family, dict):
        return TestFamily(list(family), _as_matrix(E, [SurfaceFunction.on(E, v) if not
                                                       isinstance(v, SurfaceFunction) else v
                                                       for v in family.values()]))
    if isinstance(family, (list, tuple)):
        fs = [f if isinstance(f, SurfaceFunction) else SurfaceFunction.on(E, f) for f in family]
        return TestFamily([f"f{i}" for i in range(len(fs))], _as_matrix(E, fs), {"custom": len(fs)})
    F = _as_matrix(E, family)
    return TestFamily([f"f{i}" for i in range(F.shape[1])], F, {"custom": F.shape[1]})


# --- square-function constants ---------------------------------------------------

@dataclass
class SfeReport:
    best_ratio: float
    argmax: str
    family_spec: dict
    per_function: list
    config_hash: str
    n_cells: int = 0
    wall_time: float = 0.0

    def to_dict(self):
        return {"best_ratio": self.best_ratio, "argmax": self.argmax,
                "family_spec": self.family_spec, "per_function": self.per_function,
                "config_hash": self.config_hash, "n_cells": self.n_cells,
                "wall_time": self.wall_time}


def default_cover(E: AdrSet, depth=5, eps_min=None, lattice=None, truncation_radius=None):
    lattice = build_lattice(E, depth) if lattice is None else lattice
    cover = whitney_cover(E.space, E, truncation_radius, eps_min, lattice)
    return lattice, cover


def estimate_sfe_constant(E: AdrSet, theta: KernelSpec, family=None, seed: int = 0,
                          cover=None, lattice=None, depth: int = 5, eps_min=None,
                          n_signs: int = 64, n_bumps: int = 16) -> SfeReport:
    """Largest ``square_energy(f) / ||f||_2^2`` over a family of test functions."""
    t0 = time.perf_counter()
    if cover is None:
        lattice, cover = default_cover(E, depth, eps_min, lattice)
    elif lattice is None:
        lattice = cover.lattice
    if family is None:
        if lattice is None:
            lattice = build_lattice(E, depth)
        family = default_family(E, lattice, seed, n_signs, n_bumps)
    fam = _coerce_family(E, family)
    norms2 = (fam.values ** 2).T @ E.weights
    keep = np.flatnonzero(norms2 > 0)
    for i in np.flatnonzero(norms2 <= 0):
        log.warning("skipping zero-norm test function %s", fam.names[i])
    if keep.size == 0:
        raise ValueError("empty effective family: every test function has zero norm")
    energies = np.zeros(keep.size)
    tails = np.zeros(keep.size)
    for lo in range(0, keep.size, _BATCH):
        cols = keep[lo:lo + _BATCH]
        tot, tail, _ = square_energy_batch(E, theta, fam.values[:, cols], cover)
        energies[lo:lo + cols.size] = tot
        tails[lo:lo + cols.size] = tail
    ratios = energies / norms2[keep]
    best = int(np.argmax(ratios))
    rows = [{"name": fam.names[i], "norm2": float(norms2[i]), "energy": float(e),
             "ratio": float(r), "tail_bound": float(t)}
            for i, e, r, t in zip(keep, energies, ratios, tails)]
    config = {"E": E.name, "N": len(E), "theta": theta.name, "family": fam.spec, "seed": seed,
              "eps_min": cover.eps_min, "R": cover.truncation_radius}
    return SfeReport(best_ratio=float(ratios[best]), argmax=fam.names[keep[best]],
                     family_spec=fam.spec, per_function=rows, config_hash=digest(config),
                     n_cells=len(cover), wall_time=time.perf_counter() - t0)


def dilation_ratios(E: AdrSet, theta: KernelSpec, factors, depth=5, eps_min=None,
                    generations=None, seed=0):
    """Best cube-indicator ratio of ``E`` dilated by each factor.

    The lattice, cover and test functions are dilated along with the cloud,
    so homogeneous kernels should return the same ratio at every factor.
    """
    base_lat = build_lattice(E, depth)
    eps = eps_min or 2.0 ** math.floor(math.log2(E.diam / 128))
    out = []
    for c in factors:
        Ec = E.scaled(c)
        lat = build_lattice(Ec, depth)
        cov = whitney_cover(Ec.space, Ec, None, eps * c, lat)
        gens = None if generations is None else [k + (lat.kappa_E - base_lat.kappa_E)
                                                 for k in generations]
        rep = estimate_sfe_constant(Ec, theta, cube_indicators(Ec, lat, gens), seed, cov, lat)
        out.append(rep.best_ratio)
    return np.array(out)


# --- local T(b) ------------------------------------------------------------------

@dataclass
class TbFamily:
    """Testing functions ``b_Q`` keyed by cube id, with the claimed constants."""

    b: dict
    C0_claimed: float = 20.0
    c0_claimed: float = 0.25

    @classmethod
    def indicators(cls, E: AdrSet, lattice: DyadicLattice, **kw) -> "TbFamily":
        return cls({Q.id: SurfaceFunction.indicator(E, Q.members) for Q in lattice.cubes}, **kw)


@dataclass
class TbReport:
    C0_measured: float
    c0_measured: float
    passed: bool
    C0_claimed: float
    c0_claimed: float
    per_cube: list
    missing: list
    failing: list

    def to_dict(self):
        return {k: getattr(self, k) for k in ("C0_measured", "c0_measured", "passed", "C0_claimed",
                                              "c0_claimed", "per_cube", "missing", "failing")}


def _gap_limit(c0):
    return max(0, int(math.floor(math.log2(1 / c0) + 1e-9)))


def check_local_tb(E: AdrSet, theta: KernelSpec, fam: TbFamily, cover) -> TbReport:
    """Measure the three testing conditions for every cube of the cover's lattice.

    (1) ``||b_Q||^2 / sigma(Q)``; (2) the best ``|int_{Q~} b_Q| / sigma(Q~)`` over
    descendants ``Q~`` with ``l(Q~) >= c0 l(Q)``; (3) tent energy over
    ``sigma(Q)``. ``C0_measured`` is the smallest constant satisfying all
    three, ``c0_measured`` the largest ``2^-J`` for which (2) holds with
    ``C0_claimed`` on every cube.
    """
    lat = cover.lattice
    if lat is None:
        raise ValueError("cover has no cube assignment")
    missing = [Q.id for Q in lat.cubes if Q.id not in fam.b]
    J_claim = _gap_limit(fam.c0_claimed)
    J_search = max(J_claim, lat.depth)
    rows, failing = [], []
    worst = 0.0
    per_cube_best = {}
    for Q in lat.cubes:
        if Q.id in missing:
            continue
        b = fam.b[Q.id]
        sq = Q.mass
        cond1 = float(np.sum(b.values ** 2 * E.weights)) / sq
        # best descendant ratio reachable within each generation gap
        best_by_gap = []
        best = 0.0
        frontier = [Q.id]
        for gap in range(J_search + 1):
            for i in frontier:
                q = lat.cubes[i]
                if q.mass > 0:
                    best = max(best, abs(b.integral(q.members)) / q.mass)
            best_by_gap.append(best)
            frontier = [c for i in frontier for c in lat.cubes[i].children]
            if not frontier:
                best_by_gap += [best] * (J_search - gap)
                break
        per_cube_best[Q.id] = best_by_gap
        r2 = best_by_gap[min(J_claim, len(best_by_gap) - 1)]
        cond2 = math.inf if r2 == 0 else 1.0 / r2
        nodes = tent_nodes(Q, cover)
        support = np.flatnonzero(b.values != 0)
        if nodes.size and support.size:
            sub = E.subset(support)
            cond3 = float(node_densities(sub, theta, b.values[support], cover,
                                         nodes=nodes).sum()) / sq
        else:
            cond3 = 0.0
        need = max(cond1, cond2, cond3)
        worst = max(worst, need)
        if need > fam.C0_claimed:
            failing.append(Q.id)
        rows.append({"cube": Q.id, "generation": Q.generation, "sigma": sq, "cond1": cond1,
                     "cond2_C0": cond2, "cond3": cond3, "C0_needed": need})
    c0_measured = 0.0
    if not missing:
        for J in range(J_search + 1):
            ok = all(bb[min(J, len(bb) - 1)] >= 1.0 / fam.C0_claimed
                     for bb in per_cube_best.values())
            if ok:
                c0_measured = 2.0 ** -J
                break
    passed = not missing and not failing and worst <= fam.C0_claimed
    if missing:
        log.warning("local Tb family misses cubes %s", missing[:10])
    return TbReport(C0_measured=float(worst) if not missing else math.inf,
                    c0_measured=c0_measured, passed=bool(passed), C0_claimed=fam.C0_claimed,
                    c0_claimed=fam.c0_claimed, per_cube=rows, missing=missing, failing=failing)


# --- big pieces ------------------------------------------------------------------

@dataclass
class BpsfeWitness:
    """Per-cube big pieces ``E_Q`` with measured constants."""

    pieces: dict  # cube id -> AdrSet sharing indices with E
    eta: float
    C1: float = math.nan
    C2: float = math.nan
    eta_per_cube: dict = field(default_factory=dict)
    strategy: str = ""

    def to_dict(self):
        return {"eta": self.eta, "C1": self.C1, "C2": self.C2, "strategy": self.strategy,
                "eta_min": min(self.eta_per_cube.values(), default=math.nan)}


def _root_index(A: AdrSet) -> np.ndarray:
    return np.arange(len(A)) if A.parent_index is None else A.parent_index


def _align(E: AdrSet, E_Q: AdrSet) -> np.ndarray:
    """Positions in ``E`` of the samples of ``E_Q``."""
    if E_Q.parent_index is None:
        raise ValueError("E_Q not aligned with E")
    root_E = _root_index(E)
    lookup = {int(r): i for i, r in enumerate(root_E)}
    try:
        pos = np.fromiter((lookup[int(r)] for r in E_Q.parent_index), dtype=np.intp,
                          count=len(E_Q))
    except KeyError:
        raise ValueError("E_Q not aligned with E") from None
    if not np.allclose(E.points[pos], E_Q.points):
        raise ValueError("E_Q not aligned with E")
    return pos


def bq_from_bigpiece(Q: DyadicCube, E_Q: AdrSet, E: AdrSet) -> SurfaceFunction:
    """Indicator of the members of ``Q`` that belong to ``E_Q``."""
    pos = _align(E, E_Q)
    v = np.zeros(len(E))
    inside = np.zeros(len(E), bool)
    inside[pos] = True
    v[Q.members[inside[Q.members]]] = 1.0
    return SurfaceFunction(v, E.weights)


def _lipschitz_chain(points, L, angle):
    """Greedy subset forming a graph of slope <= L over direction ``angle``."""
    u = np.array([math.cos(angle), math.sin(angle)])
    v = np.array([-u[1], u[0]])
    t, s = points @ u, points @ v
    order = np.argsort(t, kind="stable")
    keep = [order[0]]
    for i in order[1:]:
        j = keep[-1]
        if t[i] > t[j] and abs(s[i] - s[j]) <= L * (t[i] - t[j]) * (1 + 1e-9):
            keep.append(i)
    return np.asarray(keep)


def big_pieces_witness(E: AdrSet, lattice: DyadicLattice, strategy: str = "labels",
                       lipschitz: float = 1.0, n_angles: int = 8, measure: bool = True,
                       max_sfe_pieces: int = 4, eps_min=None, seed=0) -> BpsfeWitness:
    """Construct ``E_Q`` for every cube.

    ``full``: ``E_Q = E``. ``labels``: the labelled piece carrying most of
    ``sigma(Q)`` (graph branches, composite pieces). ``half``: ``E`` minus the
    upper half of ``Q`` along the first axis. ``lipschitz``: a greedy graph of
    slope ``<= lipschitz`` through the members of ``Q`` in the best of
    ``n_angles`` directions. With ``measure`` the ADR constant (``C1``) and the
    square-function constant (``C2``, on up to ``max_sfe_pieces`` distinct
    pieces) are measured.
    """
    pieces, cache = {}, {}
    for Q in lattice.cubes:
        if strategy == "full":
            idx = np.arange(len(E))
        elif strategy == "labels":
            if E.labels is None:
                continue  # no declared pieces: eta = 0 on every cube
            lab = E.labels[Q.members]
            valid = lab != ""
            if not valid.any():
                continue
            names, inv = np.unique(lab[valid], return_inverse=True)
            mass = np.bincount(inv, weights=E.weights[Q.members][valid])
            idx = np.flatnonzero(E.labels == names[int(np.argmax(mass))])
        elif strategy == "half":
            mem = Q.members[np.argsort(E.points[Q.members, 0], kind="stable")]
            drop = mem[(mem.size + 1) // 2:] if mem.size > 1 else mem[:0]
            mask = np.ones(len(E), bool)
            mask[drop] = False
            idx = np.flatnonzero(mask)
        elif strategy == "lipschitz":
            pts = E.points[Q.members]
            best = None
            for a in np.arange(n_angles) * math.pi / n_angles:
                ch = _lipschitz_chain(pts, lipschitz, a)
                if best is None or E.weights[Q.members[ch]].sum() > E.weights[Q.members[best]].sum():
                    best = ch
            idx = np.sort(Q.members[best])
        else:
            raise ValueError(f"unknown witness strategy {strategy!r}")
        key = idx.tobytes()
        if key not in cache:
            cache[key] = E.subset(idx, name=f"{E.name}:piece{len(cache)}")
        pieces[Q.id] = cache[key]
    eta_q = {}
    for Q in lattice.cubes:
        if Q.id not in pieces:
            eta_q[Q.id] = 0.0
            continue
        pos = _align(E, pieces[Q.id])
        inside = np.zeros(len(E), bool)
        inside[pos] = True
        eta_q[Q.id] = float(E.weights[Q.members[inside[Q.members]]].sum() / Q.mass)
    wit = BpsfeWitness(pieces, eta=min(eta_q.values()), eta_per_cube=eta_q, strategy=strategy)
    if measure:
        distinct = list({id(p): p for p in pieces.values()}.values())
        c1 = []
        for p in distinct:
            if len(p) >= 2 and p.diam > 0:
                c1.append(check_adr(p, centers=np.linspace(0, len(p) - 1, min(len(p), 512))
                                    .astype(np.intp)).best_const)
        wit.C1 = max(c1) if c1 else math.inf
        distinct.sort(key=lambda p: -p.total_mass)
        c2 = []
        for p in distinct[:max_sfe_pieces]:
            if len(p) < 16 or p.diam <= 0:
                continue
            c2.append(_piece_sfe(p, eps_min, seed))
        wit.C2 = max(c2) if c2 else math.nan
    return wit


def _piece_sfe(piece: AdrSet, eps_min, seed, theta=None):
    from .kernels import kernel_by_name

    theta = theta or kernel_by_name("riesz-grad", piece.m)
    depth = 4
    lat = build_lattice(piece, depth)
    cov = whitney_cover(piece.space, piece, None, eps_min, lat)
    fam = default_family(piece, lat, seed, n_signs=8, n_bumps=8)
    return estimate_sfe_constant(piece, theta, fam, seed, cov, lat).best_ratio


def comparability_split(Q: DyadicCube, E: AdrSet, E_Q: AdrSet, C_A: float, cover,
                        theta: KernelSpec, b: SurfaceFunction | None = None) -> dict:
    """Split the tent energy of ``b_Q`` by comparability of ``delta_E`` and ``delta_{E_Q}``.

    A cell is in ``A`` when ``delta_E / C_A <= delta_{E_Q} <= C_A delta_E`` at
    its centre. Also returns the geometric integral of
    ``delta_{E_Q}^-2u delta_E^(2u-(m-d))`` over cells with
    ``delta_{E_Q} > C_A delta_E`` (``carleson_lhs``) and its mirror with the
    roles of the two distances exchanged over ``delta_{E_Q} < delta_E / C_A``.
    """
    if not C_A > 1:
        raise ValueError("C_A must exceed 1")
    b = bq_from_bigpiece(Q, E_Q, E) if b is None else b
    nodes = tent_nodes(Q, cover)
    out = {"cube": Q.id, "sigma_Q": Q.mass, "C_A": C_A, "n_nodes": int(nodes.size)}
    if nodes.size == 0:
        out.update(I_A=0.0, I_notA=0.0, tent_energy=0.0, carleson_lhs=0.0,
                   carleson_companion=0.0, n_A=0, n_notA=0)
        return out
    cells = cover.node_cell[nodes]
    dE_cell = cover.dist
    dQ_cell, _ = E_Q.tree.query(cover.center)
    in_A_cell = (dQ_cell >= dE_cell / C_A) & (dQ_cell <= C_A * dE_cell)
    in_A = in_A_cell[cells]
    support = np.flatnonzero(b.values != 0)
    if support.size:
        dens = node_densities(E.subset(support), theta, b.values[support], cover,
                              nodes=nodes)[:, 0]
    else:
        dens = np.zeros(nodes.size)
    u = theta.decay_exp
    w = weight_exponent(theta, E.m, E.dim)
    dE = cover.node_delta[nodes]
    dQ, _ = E_Q.tree.query(cover.node_center[nodes])
    mu = cover.node_measure[nodes]
    far = (dQ_cell > C_A * dE_cell)[cells]
    near = (dQ_cell < dE_cell / C_A)[cells]
    out.update(
        I_A=float(dens[in_A].sum()),
        I_notA=float(dens[~in_A].sum()),
        tent_energy=float(dens.sum()),
        carleson_lhs=float(np.sum(dQ[far] ** (-2 * u) * dE[far] ** w * mu[far])),
        carleson_companion=float(np.sum(dE[near] ** (-2 * u) * dQ[near] ** w * mu[near])),
        n_A=int(np.unique(cells[in_A]).size),
        n_notA=int(np.unique(cells[~in_A]).size),
    )
    return out


def comparability_sensitivity(Q, E, E_Q, cover, theta, values=(4.0, 8.0, 16.0)):
    return [comparability_split(Q, E, E_Q, c, cover, theta) for c in values]


# --- weak type, L^p and H^p ------------------------------------------------------

@dataclass
class DistributionCurve:
    lambdas: np.ndarray
    measures: np.ndarray
    fitted_exponent: float
    C_o: float = math.nan
    sigma_ball: float = math.nan
    ball: dict = field(default_factory=dict)

    def to_dict(self):
        return {"lambdas": self.lambdas.tolist(), "measures": self.measures.tolist(),
                "fitted_exponent": self.fitted_exponent, "C_o": self.C_o,
                "sigma_ball": self.sigma_ball, "ball": self.ball}

    def to_csv(self) -> str:
        from .reports import curve_csv

        return curve_csv(self.lambdas, self.measures)


def surface_ball(E: AdrSet, center, r) -> np.ndarray:
    """Indices of the open ball ``{y in E: rho#(z, y) < r}``."""
    z = E.points[int(center)] if np.ndim(center) == 0 else np.asarray(center, float)
    dist = pairwise(E.space.rho_sharp, z[None, :], E.points)[0]
    return np.flatnonzero(dist < r)


def fit_decay(lambdas, measures, middle=0.8):
    """Minus the least-squares slope of log measure against log lambda.

    Only the middle ``middle`` fraction of the grid enters the fit, and zero
    measures (beyond the data) are dropped.
    """
    lambdas = np.asarray(lambdas, float)
    measures = np.asarray(measures, float)
    n = lambdas.size
    cut = int(round(n * (1 - middle) / 2))
    sel = np.zeros(n, bool)
    sel[cut:n - cut] = True
    sel &= measures > 0
    if sel.sum() < 2:
        return math.nan
    slope = np.polyfit(np.log(lambdas[sel]), np.log(measures[sel]), 1)[0]
    return float(-slope)


def weak_lp_indicator_test(E: AdrSet, theta: KernelSpec, kappa: float, p: float,
                           surface_balls, lambda_grid=None, cover=None, n_lambda: int = 32,
                           eps_min=None) -> list:
    """Distribution of the cone square function of ``1_Delta`` for each ball.

    The cone functional uses the weight ``delta^(2 upsilon - m)``; for each
    ball the super-level measures ``sigma{S > lambda}`` are tabulated and the
    decay exponent is fitted. Without a grid, ``n_lambda`` geometric levels run
    from the RMS of ``S`` over ``Delta`` to its maximum, the range where the
    decay is driven by the ball rather than by the far field.
    """
    if cover is None:
        _, cover = default_cover(E, 3, eps_min)
    A = cone_incidence(cover, kappa)
    balls, cols = [], []
    for center, r in surface_balls:
        idx = surface_ball(E, center, r)
        if idx.size == 0:
            raise ValueError("empty surface ball")
        v = np.zeros(len(E))
        v[idx] = 1.0
        balls.append((int(center) if np.ndim(center) == 0 else list(center), float(r), idx))
        cols.append(v)
    fields = cone_square_function(E, theta, np.column_stack(cols), kappa, cover, q=2.0,
                                  weight_power=2 * theta.decay_exp - E.m, incidence=A)
    out = []
    for k, (c, r, idx) in enumerate(balls):
        S = fields.values[:, k]
        sig = float(E.weights[idx].sum())
        if lambda_grid is None:
            lo = math.sqrt(float(np.sum(S[idx] ** 2 * E.weights[idx]) / sig))
            hi = float(S.max())
            lam = np.geomspace(max(lo, 1e-300), max(hi, lo * (1 + 1e-9)), n_lambda)
        else:
            lam = np.asarray(lambda_grid, float)
            if np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
                raise ValueError("lambda grid must be positive and increasing")
        order = np.argsort(S)
        cum = np.concatenate([[0.0], np.cumsum(E.weights[order][::-1])])[::-1]
        pos = np.searchsorted(S[order], lam, side="right")
        measures = cum[pos]
        C_o = float(np.max(lam ** p * measures) / sig)
        out.append(DistributionCurve(lam, measures, fit_decay(lam, measures), C_o, sig,
                                     {"center": c, "radius": r, "size": int(idx.size)}))
    return out


def lp_norm(values, weights, p):
    return float(np.sum(np.abs(values) ** p * weights) ** (1 / p))


def atomic_range(E: AdrSet, theta: KernelSpec):
    gamma = min(alpha_rho(E.space), theta.hoelder_exp)
    return E.dim / (E.dim + gamma), gamma


def make_atoms(E: AdrSet, p: float, count: int, rng, r_range=None):
    """Random (p, inf)-atoms: +-1 on the two halves of a ball cut by a random
    hyperplane, then mean zero and sup-normalised to ``sigma(B)^(-1/p)``."""
    lo, hi = (4 * E.spacing, E.diam / 4) if r_range is None else r_range
    atoms, meta = [], []
    while len(atoms) < count:
        c = int(rng.integers(len(E)))
        r = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        idx = surface_ball(E, c, r)
        if idx.size < 2:
            continue
        # + on one side of a random hyperplane through the centre, - on the other
        u = rng.normal(size=E.m)
        s = np.where((E.points[idx] - E.points[c]) @ u >= 0, 1.0, -1.0)
        if np.all(s == s[0]):
            continue
        w = E.weights[idx]
        s = s - (s @ w) / w.sum()
        sigma_b = float(w.sum())
        s *= sigma_b ** (-1 / p) / np.abs(s).max()
        a = np.zeros(len(E))
        a[idx] = s
        atoms.append(a)
        meta.append({"center": c, "radius": r, "sigma": sigma_b,
                     "mean": float(a @ E.weights)})
    return np.column_stack(atoms), meta


def atomic_hp_test(E: AdrSet, theta: KernelSpec, kappa: float, p: float, atoms: int = 32,
                   seed: int = 0, cover=None, eps_min=None) -> dict:
    """Sup over random atoms of ``||S a||_{L^p}`` for the cone square function."""
    p_lo, gamma = atomic_range(E, theta)
    if not (p_lo < p <= 1):
        raise ValueError(f"p = {p} outside the atomic range ({p_lo:g}, 1] "
                         f"(gamma = min(alpha_rho, alpha) = {gamma:g})")
    if cover is None:
        _, cover = default_cover(E, 3, eps_min)
    rng = np.random.default_rng(seed)
    A, meta = make_atoms(E, p, atoms, rng)
    fields = cone_square_function(E, theta, A, kappa, cover, q=2.0)
    vals = np.array([lp_norm(fields.values[:, k], E.weights, p) for k in range(A.shape[1])])
    return {"p": p, "range": [p_lo, 1.0], "gamma": gamma, "sup": float(vals.max()),
            "mean": float(vals.mean()), "values": vals.tolist(), "atoms": meta,
            "max_mean_residual": float(max(abs(m["mean"]) for m in meta)), "seed": seed}


def lp_sweep(E: AdrSet, theta: KernelSpec, kappa: float, p_list, family=None, seed: int = 0,
             cover=None, lattice=None, eps_min=None, atoms: int = 32) -> dict:
    """``sup_f ||S f||_p / ||f||_p`` for each ``p``; ``p <= 1`` goes to the atomic test."""
    if cover is None:
        lattice, cover = default_cover(E, 4, eps_min, lattice)
    lattice = lattice or cover.lattice
    if family is None:
        family = default_family(E, lattice, seed, n_signs=16, n_bumps=16)
    fam = _coerce_family(E, family)
    fields = None
    table = {}
    for p in p_list:
        p = float(p)
        if p <= 1:
            rep = atomic_hp_test(E, theta, kappa, p, atoms, seed, cover)
            table[p] = {"route": "atomic", "ratio": rep["sup"], "report": rep}
            continue
        if fields is None:
            fields = cone_square_function(E, theta, fam.values, kappa, cover, q=2.0)
        best, arg = 0.0, None
        for k in range(fam.values.shape[1]):
            fn = lp_norm(fam.values[:, k], E.weights, p)
            if fn == 0:
                continue
            r = lp_norm(fields.values[:, k], E.weights, p) / fn
            if r > best:
                best, arg = r, fam.names[k]
        table[p] = {"route": "lp", "ratio": best, "argmax": arg}
    return table


# --- pipelines -------------------------------------------------------------------

def bpsfe_pipeline(E: AdrSet, theta: KernelSpec, witness: BpsfeWitness, cover,
                   eta_claimed: float | None = None, C0_claimed=20.0, c0_claimed=0.25,
                   seed=0) -> dict:
    """Big pieces -> testing functions -> local T(b) -> square-function constant."""
    lat = cover.lattice
    eta_claimed = witness.eta if eta_claimed is None else eta_claimed
    b, flagged = {}, []
    for Q in lat.cubes:
        piece = witness.pieces.get(Q.id)
        if piece is None:
            flagged.append(Q.id)
            b[Q.id] = SurfaceFunction(np.zeros(len(E)), E.weights)
            continue
        b[Q.id] = bq_from_bigpiece(Q, piece, E)
        if witness.eta_per_cube.get(Q.id, 0.0) < eta_claimed * (1 - 1e-12):
            flagged.append(Q.id)
    tb = check_local_tb(E, theta, TbFamily(b, C0_claimed, c0_claimed), cover)
    sfe = estimate_sfe_constant(E, theta, None, seed, cover, lat)
    return {"eta": eta_claimed, "eta_measured": witness.eta, "C1": witness.C1, "C2": witness.C2,
            "C0": tb.C0_measured, "c0": tb.c0_measured, "tb_passed": tb.passed,
            "C": sfe.best_ratio, "flagged_cubes": flagged, "failures": len(flagged) + len(tb.failing),
            "tb_failing": tb.failing, "strategy": witness.strategy}


def resolution_sweep(kind: str, generations=(2, 3, 4), seed: int = 0, theta=None,
                     n_signs=64, n_bumps=16, params=None, resolution=2048) -> list:
    """``best_ratio`` as generations of structure and test functions are added.

    Generation ``g`` uses lattice depth ``2 g``. The cover resolves each set
    down to twice its finest structural scale: the squares of side ``4^-g``
    for the ``cantor4`` iterate, and for sets that do not change with ``g``
    (graphs, curves) the finest level of the sweep, ``2 * 4^-max(g)``.
    """
    from .kernels import kernel_by_name

    theta = theta or kernel_by_name("riesz-grad", 2)
    out = []
    for g in generations:
        if kind == "cantor4":
            E = generate(GeometrySpec("cantor4", {"generation": g} | dict(params or {})))
        else:
            E = generate(GeometrySpec(kind, dict(params or {}), resolution))
        eps = 2.0 * 4.0 ** -(g if kind == "cantor4" else max(generations))
        lat = build_lattice(E, 2 * g)
        cov = whitney_cover(E.space, E, None, eps, lat)
        rep = estimate_sfe_constant(E, theta, None, seed, cov, lat, n_signs=n_signs,
                                    n_bumps=n_bumps)
        out.append({"generation": g, "eps_min": eps, "best_ratio": rep.best_ratio,
                    "argmax": rep.argmax, "n_cells": len(cov), "N": len(E)})
    return out
