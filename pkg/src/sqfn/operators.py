"""Quadrature for integral operators on a cloud and their square functions.

``Theta_E f(x) = sum_j theta(x, y_j) f(y_j) w_j`` is evaluated at the
quadrature nodes of a Whitney cover; energies are midpoint sums of
``|Theta_E f|^2 delta_E^(2 upsilon - (m - d))`` over the nodes.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .backend import MIN_SEPARATION, SingularityError
from .dyadic import DyadicCube, WhitneyCover, cone, cone_incidence, tent
from .kernels import HomogeneousKernel, KernelSpec
from .qm import AdrSet, delta_E

log = logging.getLogger(__name__)

# pairs per chunk when a kernel has to be evaluated through Python callables
_GENERIC_PAIRS = 1 << 20


@dataclass(eq=False)
class SurfaceFunction:
    """Values on the cloud together with the quadrature weights."""

    values: np.ndarray
    weights: np.ndarray
    _norms: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.values.shape != self.weights.shape:
            raise ValueError("function length does not match the cloud")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("function values must be finite")

    @classmethod
    def on(cls, E: AdrSet, values) -> "SurfaceFunction":
        values = np.broadcast_to(np.asarray(values, float), (len(E),)).copy()
        return cls(values, E.weights)

    @classmethod
    def indicator(cls, E: AdrSet, index) -> "SurfaceFunction":
        v = np.zeros(len(E))
        v[index] = 1.0
        return cls(v, E.weights)

    def __len__(self):
        return self.values.size

    def norm(self, p=2.0) -> float:
        p = float(p)
        if p not in self._norms:
            a = np.abs(self.values)
            if math.isinf(p):
                val = float(a.max(initial=0.0))
            else:
                val = float(np.sum(a ** p * self.weights) ** (1 / p))
            self._norms[p] = val
        return self._norms[p]

    @property
    def p_norms(self) -> dict:
        return dict(self._norms)

    def integral(self, index=None) -> float:
        if index is None:
            return float(self.values @ self.weights)
        return float(self.values[index] @ self.weights[index])

    def scaled(self, c) -> "SurfaceFunction":
        return SurfaceFunction(c * self.values, self.weights)

    def __add__(self, other):
        return SurfaceFunction(self.values + other.values, self.weights)


@dataclass
class EnergyBreakdown:
    total: float
    per_cell: np.ndarray | None
    truncation_tail_bound: float
    weight_exponent: float
    n_cells: int = 0
    n_nodes: int = 0
    wall_time: float = 0.0

    def to_dict(self, with_cells=False):
        out = {"total": self.total, "truncation_tail_bound": self.truncation_tail_bound,
               "weight_exponent": self.weight_exponent, "n_cells": self.n_cells,
               "n_nodes": self.n_nodes, "wall_time": self.wall_time}
        if with_cells and self.per_cell is not None:
            out["per_cell"] = self.per_cell.tolist()
        return out


def weight_exponent(theta: KernelSpec, m: int, d: float) -> float:
    return 2 * theta.decay_exp - (m - d)


def _as_matrix(E: AdrSet, f) -> np.ndarray:
    """Stack one or several functions as an (N, nf) array of values."""
    if isinstance(f, SurfaceFunction):
        F = f.values[:, None]
    elif isinstance(f, (list, tuple)) and f and isinstance(f[0], SurfaceFunction):
        F = np.column_stack([g.values for g in f])
    else:
        F = np.asarray(f, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
    if F.shape[0] != len(E):
        raise ValueError("function length does not match the cloud")
    return F


def _check_off_E(E: AdrSet, x):
    dist = delta_E(x, E)
    if np.any(np.asarray(dist) <= MIN_SEPARATION):
        raise SingularityError("singularity: evaluation point lies on E")


def theta_matrix_apply(E: AdrSet, theta: KernelSpec, F: np.ndarray, X: np.ndarray,
                       impl=None) -> np.ndarray:
    """``Theta_E`` of each column of ``F`` at each row of ``X``; shape (nt, comps, nf)."""
    X = np.atleast_2d(np.asarray(X, float))
    F = _as_matrix(E, F)
    C = F * E.weights[:, None]
    fast = theta.fast
    if fast is not None and fast[0] in ("riesz", "riesz_grad"):
        return backend.riesz_apply(X, E.points, C, fast[1], fast[2],
                                   gradient=fast[0] == "riesz_grad", impl=impl)
    _check_off_E(E, X)
    comps = theta.components
    nt, N = X.shape[0], len(E)
    out = np.zeros((nt, comps, F.shape[1]))
    step = max(1, _GENERIC_PAIRS // N)
    for lo in range(0, nt, step):
        xs = X[lo:lo + step]
        xr = np.repeat(xs, N, axis=0)
        yr = np.tile(E.points, (xs.shape[0], 1))
        vals = np.asarray(theta.evaluate(xr, yr), float).reshape(xs.shape[0], N, comps)
        out[lo:lo + step] = np.einsum("tnc,nf->tcf", vals, C)
    return out


def apply_theta(E: AdrSet, theta: KernelSpec, f: SurfaceFunction, x):
    """``Theta_E f`` at one point (scalar or vector) or at rows of an array."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    _check_off_E(E, np.atleast_2d(x))
    out = theta_matrix_apply(E, theta, _as_matrix(E, f), np.atleast_2d(x))[:, :, 0]
    if theta.components == 1:
        out = out[:, 0]
    return out[0] if single else out


def apply_T(Sigma: AdrSet, K: HomogeneousKernel, f: SurfaceFunction, x):
    """``T f(x) = sum_j K(x - y_j) f(y_j) w_j`` for a convolution kernel."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    _check_off_E(Sigma, X)
    F = _as_matrix(Sigma, f)
    if K.fast is not None and K.fast[0] == "riesz":
        out = backend.riesz_apply(X, Sigma.points, F * Sigma.weights[:, None],
                                  K.fast[1], K.fast[2])[:, 0, 0]
    else:
        out = np.array([K.evaluate(xi - Sigma.points) @ (F[:, 0] * Sigma.weights) for xi in X])
    return float(out[0]) if single else out


def truncation_tail_bound(E: AdrSet, theta: KernelSpec, F: np.ndarray, R: float) -> np.ndarray:
    """Upper bound for the energy beyond distance ``R`` from ``E``.

    Uses ``|Theta f(x)| <= C ||f||_1 delta^-(d+upsilon)`` and the volume bound
    ``|{delta < t}| <= c_m (t + diam)^m``.
    """
    m, d = E.m, E.dim
    C = float(theta.meta.get("decay_bound", theta.decay_const))
    l1 = np.abs(F).T @ E.weights
    c_m = math.pi ** (m / 2) / math.gamma(m / 2 + 1)
    return (C * l1) ** 2 * c_m * (1 + E.diam / R) ** m * (m + d) / d * R ** -d


def node_field(E: AdrSet, theta: KernelSpec, F: np.ndarray, cover: WhitneyCover,
               nodes=None) -> np.ndarray:
    """``Theta_E F`` at the cover's quadrature nodes (or a subset of them)."""
    X = cover.node_center if nodes is None else cover.node_center[nodes]
    return theta_matrix_apply(E, theta, F, X)


def node_densities(E, theta, F, cover: WhitneyCover, q=2.0, weight_power=None, nodes=None,
                   field_values=None):
    """``|Theta F|^q delta^w mu`` at nodes; ``w`` defaults to the energy exponent."""
    if cover is None:
        raise ValueError("missing Whitney cover")
    if weight_power is None:
        weight_power = weight_exponent(theta, E.m, E.dim)
    vals = node_field(E, theta, F, cover, nodes) if field_values is None else field_values
    mag2 = np.sum(vals * vals, axis=1)  # (n, nf)
    mag = mag2 if q == 2 else mag2 ** (q / 2)
    sel = slice(None) if nodes is None else nodes
    w = cover.node_delta[sel] ** weight_power * cover.node_measure[sel]
    return mag * w[:, None]


def per_cell(cover: WhitneyCover, dens: np.ndarray, nodes=None) -> np.ndarray:
    """Sum node densities over the cells they belong to; shape (n_cells, nf)."""
    cells = cover.node_cell if nodes is None else cover.node_cell[nodes]
    out = np.zeros((len(cover), dens.shape[1]))
    np.add.at(out, cells, dens)
    return out


def square_energy_batch(E, theta, F, cover: WhitneyCover, keep_cells=False):
    """Energies of every column of ``F``; returns (totals, tail bounds, per-cell or None)."""
    if cover is None:
        raise ValueError("missing Whitney cover")
    if cover.E is not E and len(cover.E) != len(E):
        raise ValueError("cover was built for a different set")
    dens = node_densities(E, theta, F, cover)
    totals = dens.sum(axis=0)
    tails = truncation_tail_bound(E, theta, F, cover.truncation_radius)
    cells = per_cell(cover, dens) if keep_cells else None
    return totals, tails, cells


def square_energy(E: AdrSet, theta: KernelSpec, f: SurfaceFunction, cover: WhitneyCover,
                  keep_cells: bool = True) -> EnergyBreakdown:
    t0 = time.perf_counter()
    totals, tails, cells = square_energy_batch(E, theta, _as_matrix(E, f), cover, keep_cells)
    return EnergyBreakdown(total=float(totals[0]),
                           per_cell=None if cells is None else cells[:, 0],
                           truncation_tail_bound=float(tails[0]),
                           weight_exponent=weight_exponent(theta, E.m, E.dim),
                           n_cells=len(cover), n_nodes=cover.n_nodes,
                           wall_time=time.perf_counter() - t0)


def tent_nodes(Q: DyadicCube, cover: WhitneyCover) -> np.ndarray:
    return np.flatnonzero(tent(Q, cover).node_mask(cover))


def tent_energy(Q: DyadicCube, b: SurfaceFunction, theta: KernelSpec, cover: WhitneyCover,
                E: AdrSet | None = None) -> float:
    """Energy of ``Theta b`` restricted to the tent over ``Q``."""
    E = cover.E if E is None else E
    nodes = tent_nodes(Q, cover)
    if nodes.size == 0:
        return 0.0
    F = _as_matrix(E, b)
    support = np.flatnonzero(np.any(F != 0, axis=1))
    if support.size == 0:
        return 0.0
    sub = E.subset(support)
    dens = node_densities(sub, theta, F[support], cover, nodes=nodes)
    return float(dens.sum())


def cone_functional(x, f: SurfaceFunction, theta: KernelSpec, kappa: float, q: float,
                    cover: WhitneyCover, E: AdrSet | None = None, with_flag: bool = False):
    """``(sum over cone cells of |Theta f|^q delta^(q upsilon - m) mu)^(1/q)``."""
    if not q > 0:
        raise ValueError("q must be positive")
    E = cover.E if E is None else E
    cells = cone(x, kappa, cover)
    if cells.size == 0:
        return (0.0, True) if with_flag else 0.0
    mask = np.zeros(len(cover), bool)
    mask[cells] = True
    nodes = np.flatnonzero(mask[cover.node_cell])
    dens = node_densities(E, theta, _as_matrix(E, f), cover, q=q,
                          weight_power=q * theta.decay_exp - E.m, nodes=nodes)
    val = float(dens.sum() ** (1 / q))
    return (val, False) if with_flag else val


@dataclass
class ConeFields:
    """Cone functionals of several functions at every cloud point."""

    values: np.ndarray  # (N, nf)
    empty: np.ndarray  # (N,) points whose cone holds no cell
    kappa: float
    q: float


def cone_square_function(E: AdrSet, theta: KernelSpec, F, kappa: float, cover: WhitneyCover,
                         q: float = 2.0, weight_power=None, incidence=None) -> ConeFields:
    """Cone functional at every cloud point for every column of ``F``.

    ``weight_power`` defaults to ``q upsilon - m``; the weak-type test passes
    ``2 upsilon - m`` explicitly.
    """
    F = _as_matrix(E, F)
    if weight_power is None:
        weight_power = q * theta.decay_exp - E.m
    A = cone_incidence(cover, kappa) if incidence is None else incidence
    dens = node_densities(E, theta, F, cover, q=q, weight_power=weight_power)
    cells = per_cell(cover, dens)
    sums = np.asarray(A @ cells)
    empty = np.asarray(A.getnnz(axis=1) == 0)
    return ConeFields(values=np.maximum(sums, 0.0) ** (1 / q), empty=empty, kappa=kappa, q=q)
