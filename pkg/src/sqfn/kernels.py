"""Kernels and empirical verification of their size and smoothness axioms.

Two kinds of objects live here. A :class:`HomogeneousKernel` is a function
``K`` on ``R^m \\ {0}`` (odd, homogeneous of degree ``-n``); the operator it
defines is the convolution ``T f(x) = int K(x - y) f(y) dsigma(y)``. A
:class:`KernelSpec` is a general two-point kernel ``theta(x, y)`` carrying
the constants of the decay bound
``|theta(x, y)| <= C / rho(x, y)^(d + upsilon)`` and of the Hoelder bound
``|theta(x, y) - theta(x, y~)| <= C rho(y, y~)^alpha / rho(x, y)^(d + upsilon + alpha)``
(for ``rho(y, y~) <= rho(x, y) / 2``).
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .backend import MIN_SEPARATION, SingularityError


@dataclass(frozen=True)
class HomogeneousKernel:
    evaluate: Callable[[np.ndarray], np.ndarray]
    ambient_dim: int
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    fast: tuple | None = None
    smoothness_order: int = 2

    @property
    def n(self) -> int:
        return self.ambient_dim - 1

    @property
    def homogeneity_degree(self) -> int:
        return -self.n

    def __call__(self, z):
        return self.evaluate(np.asarray(z, dtype=float))


@dataclass(frozen=True)
class KernelSpec:
    """Two-point kernel ``theta(x, y)`` with declared axiom constants.

    ``evaluate(x, y)`` takes arrays of shape (k, m) and returns shape (k,) or
    (k, components). ``fast`` names a compiled routine for convolution kernels.
    """

    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    decay_const: float
    hoelder_exp: float = 1.0
    decay_exp: float = 1.0
    target_dim: float = 1.0
    components: int = 1
    name: str = "custom"
    fast: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 < self.hoelder_exp <= 1:
            raise ValueError("Hoelder exponent must lie in (0, 1]")
        if self.decay_const <= 0:
            raise ValueError("decay constant must be positive")

    def __call__(self, x, y):
        return self.evaluate(np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(y, float)))


def _norm(z):
    r = np.sqrt(np.sum(z * z, axis=-1))
    if np.any(r <= MIN_SEPARATION):
        raise SingularityError("singularity: kernel evaluated at the origin")
    return r


def riesz_kernel(j: int, n: int) -> HomogeneousKernel:
    """Riesz kernel ``z_j / |z|^(n+1)`` on ``R^(n+1)``; ``j`` is 1-based."""
    if not 1 <= j <= n + 1:
        raise ValueError("need 1 <= j <= n + 1")
    jj = j - 1

    def evaluate(z):
        r = _norm(z)
        return z[..., jj] / r ** (n + 1)

    def gradient(z):
        r = _norm(z)
        g = -(n + 1) * (z[..., jj] / r ** (n + 3))[..., None] * z
        g[..., jj] += 1.0 / r ** (n + 1)
        return g

    return HomogeneousKernel(evaluate, n + 1, gradient, name=f"riesz:{j}", fast=("riesz", jj, n))


def riesz_grad_constant(n: int) -> float:
    """Constant valid for both axioms of the gradient of a Riesz kernel.

    ``|grad K_j(z)| <= n / |z|^(n+1)`` and the Hessian has operator norm at most
    ``(n+1)(n+6) / |z|^(n+2)``; on the segment from ``x-y`` to ``x-y~`` the
    norm is at least ``|x-y|/2``, which costs ``2^(n+2)``.
    """
    return float(max(n, (n + 1) * (n + 6) * 2 ** (n + 2)))


def convolution_spec(K: HomogeneousKernel, target_dim=None, decay_exp=0.0,
                     decay_const=None) -> KernelSpec:
    """``theta(x, y) = K(x - y)``, the kernel of ``T`` itself."""
    d = K.n if target_dim is None else target_dim

    def evaluate(x, y):
        return K.evaluate(np.asarray(x) - np.asarray(y))

    return KernelSpec(evaluate, decay_const or 1.0, 1.0, decay_exp, d, 1,
                      name=K.name, fast=K.fast)


def gradient_kernel(K: HomogeneousKernel, hoelder_exp=1.0, decay_const=None) -> KernelSpec:
    """``theta(x, y) = (grad K)(x - y)``, vector valued with ``m`` components.

    Each component is homogeneous of degree ``-(n+1)``; with ``d = n`` that is
    decay exponent ``upsilon = 1``.
    """
    if K.gradient is None:
        raise ValueError("kernel has no gradient")
    n, m = K.n, K.ambient_dim
    if decay_const is None:
        decay_const = riesz_grad_constant(n) if K.fast else 1.0
    fast = None
    if K.fast is not None and K.fast[0] == "riesz":
        fast = ("riesz_grad", K.fast[1], K.fast[2])

    def evaluate(x, y):
        return K.gradient(np.asarray(x) - np.asarray(y))

    meta = {"decay_bound": float(n)} if fast is not None else {}
    return KernelSpec(evaluate, float(decay_const), hoelder_exp, 1.0, float(n), m,
                      name=f"grad({K.name})", fast=fast, meta=meta)


def finite_difference_gradient(K: HomogeneousKernel, z, h):
    z = np.atleast_2d(np.asarray(z, float))
    out = np.empty_like(z)
    for i in range(z.shape[1]):
        e = np.zeros(z.shape[1])
        e[i] = h
        out[:, i] = (K.evaluate(z + e) - K.evaluate(z - e)) / (2 * h)
    return out


# --- expression sub-language for custom kernels ---------------------------------

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}
_UNARY = {ast.USub: np.negative, ast.UAdd: np.positive}


def compile_expression(expr: str, m: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``expr`` into a vectorized function of ``z`` in ``R^m``.

    Allowed: numbers, coordinates ``x1 .. xm`` of ``z``, ``r`` (= |z|),
    ``norm(...)`` (absolute value), ``+ - * / ^ **`` and parentheses.
    """
    tree = ast.parse(expr.replace("^", "**"), mode="eval")
    names = {f"x{i + 1}" for i in range(m)} | {"r"}

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return check(node.left) and check(node.right)
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return check(node.operand)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return True
        if isinstance(node, ast.Name) and node.id in names:
            return True
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id == "norm" and len(node.args) == 1 and not node.keywords):
            return check(node.args[0])
        raise ValueError(f"unsupported element in kernel expression: {ast.dump(node)}")

    check(tree)

    def run(node, env):
        if isinstance(node, ast.Expression):
            return run(node.body, env)
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](run(node.left, env), run(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](run(node.operand, env))
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        return np.abs(run(node.args[0], env))

    def f(z):
        z = np.asarray(z, float)
        env = {f"x{i + 1}": z[..., i] for i in range(m)}
        env["r"] = _norm(z)
        with np.errstate(divide="raise", invalid="raise"):
            return np.broadcast_to(run(tree, env), z.shape[:-1]).astype(float)

    return f


def custom_kernel(expr: str, m: int, decay_const: float, decay_exp: float = 1.0,
                  hoelder_exp: float = 1.0, target_dim: float | None = None) -> KernelSpec:
    """Scalar convolution kernel ``theta(x, y) = expr(x - y)``."""
    f = compile_expression(expr, m)

    def evaluate(x, y):
        return f(np.asarray(x) - np.asarray(y))

    return KernelSpec(evaluate, decay_const, hoelder_exp, decay_exp,
                      float(m - 1 if target_dim is None else target_dim), 1,
                      name=f"custom:{expr}", meta={"expr": expr})


def kernel_by_name(name: str, m: int = 2, **params) -> KernelSpec:
    """Built-in kernels: ``riesz:j``, ``riesz-grad`` (param ``j``), ``custom``."""
    n = m - 1
    if name.startswith("riesz:"):
        K = riesz_kernel(int(name.split(":", 1)[1]), n)
        return convolution_spec(K, decay_const=1.0)
    if name == "riesz-grad":
        K = riesz_kernel(int(params.get("j", m)), n)
        return gradient_kernel(K, hoelder_exp=float(params.get("hoelder_exp", 1.0)),
                               decay_const=params.get("decay_const"))
    if name == "custom":
        if "expr" not in params:
            raise ValueError("custom kernel needs an expression (kernel.expr)")
        return custom_kernel(params["expr"], m, float(params.get("decay_const", 1.0)),
                             float(params.get("decay_exp", 1.0)),
                             float(params.get("hoelder_exp", 1.0)),
                             params.get("target_dim"))
    raise ValueError(f"unknown kernel {name!r}")


# --- axiom verification ----------------------------------------------------------

@dataclass
class KernelAxiomReport:
    decay_const_needed: float
    hoelder_const_needed: float
    empirical_const: float
    declared_const: float
    passed: bool
    worst_decay: dict
    worst_hoelder: dict
    samples: int

    def to_dict(self):
        return dict(self.__dict__)


def _sample_configurations(samples, m, rng, scale_range=(1e-2, 1e2)):
    x = rng.normal(size=(samples, m))
    direction = rng.normal(size=(samples, m))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    dist = np.exp(rng.uniform(*np.log(scale_range), size=samples))
    y = x + dist[:, None] * direction
    # perturbation of y inside the half-distance window, including y~ = y
    frac = rng.uniform(0.0, 0.5, size=samples)
    frac[:: max(1, samples // 10)] = 0.0
    pert = rng.normal(size=(samples, m))
    pert /= np.linalg.norm(pert, axis=1, keepdims=True)
    y2 = y + (frac * dist)[:, None] * pert
    return x, y, y2


def verify_kernel_axioms(theta: KernelSpec, samples: int = 10_000, seed: int = 0,
                         m: int | None = None, rho=None) -> KernelAxiomReport:
    """Smallest empirical constant validating the decay and Hoelder bounds.

    Configurations are drawn across four decades of ``rho(x, y)``; ``passed``
    compares the empirical constant with ``theta.decay_const``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    m = m or int(round(theta.target_dim)) + 1
    rho = rho or (lambda a, b: np.linalg.norm(a - b, axis=-1))
    x, y, y2 = _sample_configurations(samples, m, rng)
    d, ups, alpha = theta.target_dim, theta.decay_exp, theta.hoelder_exp

    def mag(v):
        v = np.asarray(v, float)
        return np.abs(v) if v.ndim == 1 else np.linalg.norm(v, axis=-1)

    dxy = rho(x, y)
    dyy = rho(y, y2)
    t1 = np.asarray(theta.evaluate(x, y), float)
    t2 = np.asarray(theta.evaluate(x, y2), float)
    decay = mag(t1) * dxy ** (d + ups)
    diff = mag(t1 - t2)
    with np.errstate(divide="ignore", invalid="ignore"):
        hold = np.where(dyy > 0, diff * dxy ** (d + ups + alpha) / dyy ** alpha, 0.0)
    kd, kh = int(np.argmax(decay)), int(np.argmax(hold))
    emp = float(max(decay[kd], hold[kh]))
    return KernelAxiomReport(
        decay_const_needed=float(decay[kd]),
        hoelder_const_needed=float(hold[kh]),
        empirical_const=emp,
        declared_const=float(theta.decay_const),
        passed=bool(emp <= theta.decay_const),
        worst_decay={"rho": float(dxy[kd]), "value": float(decay[kd])},
        worst_hoelder={"rho": float(dxy[kh]), "rho_tilde": float(dyy[kh]), "value": float(hold[kh])},
        samples=int(samples),
    )
