"""Selection of the pairwise-kernel backend.

The compiled extension ``sqfn._core`` is used when it imports; otherwise the
numpy module ``sqfn._pycore`` takes over. Setting ``SQFN_BACKEND=python``
forces the fallback. Both expose the same four routines.
"""

import logging
import os

import numpy as np

from . import _pycore

log = logging.getLogger(__name__)

MIN_SEPARATION = 1e-12

# targets per chunk are sized so one (m, chunk, n_sources) block stays near this
_BLOCK_BYTES = 32 * 2**20
# fused loops win over block assembly + BLAS when few functions are applied
_FUSED_MAX_FUNCTIONS = 4

_core = None
if os.environ.get("SQFN_BACKEND", "").lower() != "python":
    try:
        from . import _core
    except ImportError:  # pragma: no cover - depends on the build
        _core = None

NAME = "cython" if _core is not None else "python"
_threads = os.cpu_count() or 1


def set_threads(n):
    global _threads
    _threads = max(1, int(n))


def get_threads():
    return _threads


def module(name=None):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    name = name or NAME
    if name == "python":
        return _pycore
    if _core is None:
        raise RuntimeError("compiled backend not available")
    return _core


class SingularityError(ValueError):
    """Kernel evaluated at (numerically) coincident points."""


def _chunk_rows(n_sources, m):
    per_row = max(1, n_sources * max(m, 1) * 8)
    return max(1, _BLOCK_BYTES // per_row)


def riesz_apply(targets, sources, coeffs, j, n, gradient=False, impl=None):
    """Apply ``K_j`` (or its gradient) to ``coeffs`` at every target.

    Returns an array of shape (n_targets, n_components, n_functions) where the
    component axis has length 1 for the scalar kernel and ``m`` for the
    gradient.
    """
    mod = module(impl)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    sources = np.ascontiguousarray(sources, dtype=np.float64)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    nt, m = targets.shape
    nf = coeffs.shape[1]
    comps = m if gradient else 1
    out = np.zeros((nt, comps, nf))
    if nt == 0 or sources.shape[0] == 0:
        return out
    bad = 0
    if nf <= _FUSED_MAX_FUNCTIONS:
        if gradient:
            bad = mod.riesz_grad_apply(targets, sources, coeffs, j, float(n), out,
                                       MIN_SEPARATION, _threads)
        else:
            flat = np.zeros((nt, nf))
            bad = mod.riesz_apply(targets, sources, coeffs, j, float(n), flat,
                                  MIN_SEPARATION, _threads)
            out[:, 0, :] = flat
    else:
        step = _chunk_rows(sources.shape[0], comps)
        for lo in range(0, nt, step):
            t = targets[lo:lo + step]
            if gradient:
                block = np.empty((m, t.shape[0], sources.shape[0]))
                bad += mod.riesz_grad_block(t, sources, j, float(n), block,
                                            MIN_SEPARATION, _threads)
                for c in range(m):
                    out[lo:lo + step, c, :] = block[c] @ coeffs
            else:
                block = np.empty((t.shape[0], sources.shape[0]))
                bad += mod.riesz_block(t, sources, j, float(n), block,
                                       MIN_SEPARATION, _threads)
                out[lo:lo + step, 0, :] = block @ coeffs
    if bad:
        raise SingularityError(
            f"singularity: {bad} target/source pairs closer than {MIN_SEPARATION:g}")
    return out
