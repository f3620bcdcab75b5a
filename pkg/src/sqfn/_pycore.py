"""Pure numpy versions of the routines in ``_core.pyx``.

Signatures and return values match the compiled module exactly so that
``sqfn.backend`` can swap one for the other. ``nthreads`` is accepted and
ignored.
"""

import numpy as np


def _pair_geometry(targets, sources):
    diff = targets[:, None, :] - sources[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    return diff, r2


def _inv_pow(r2, half_exp):
    if half_exp == 1.0:
        return 1.0 / r2
    return r2 ** (-half_exp)


def riesz_block(targets, sources, j, n, out, min_sep, nthreads=1):
    diff, r2 = _pair_geometry(targets, sources)
    bad = r2 <= min_sep * min_sep
    r2 = np.where(bad, 1.0, r2)
    out[...] = np.where(bad, 0.0, diff[..., j] * _inv_pow(r2, 0.5 * (n + 1.0)))
    return int(bad.sum())


def riesz_apply(targets, sources, coeffs, j, n, out, min_sep, nthreads=1):
    block = np.empty((targets.shape[0], sources.shape[0]))
    bad = riesz_block(targets, sources, j, n, block, min_sep)
    out += block @ coeffs
    return bad


def riesz_grad_block(targets, sources, j, n, out, min_sep, nthreads=1):
    diff, r2 = _pair_geometry(targets, sources)
    bad = r2 <= min_sep * min_sep
    r2 = np.where(bad, 1.0, r2)
    inv = _inv_pow(r2, 0.5 * (n + 1.0))
    cross = (n + 1.0) * diff[..., j] * inv / r2
    for c in range(targets.shape[1]):
        out[c] = -cross * diff[..., c]
    out[j] += inv
    out[:, bad] = 0.0
    return int(bad.sum())


def riesz_grad_apply(targets, sources, coeffs, j, n, out, min_sep, nthreads=1):
    m = targets.shape[1]
    block = np.empty((m, targets.shape[0], sources.shape[0]))
    bad = riesz_grad_block(targets, sources, j, n, block, min_sep)
    for c in range(m):
        out[:, c, :] += block[c] @ coeffs
    return bad
