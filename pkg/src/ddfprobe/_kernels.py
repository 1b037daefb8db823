"""Fused elementwise kernels for the optimizer hot loop.

``adam_update`` does one pass over memory instead of the ten numpy
ufunc passes of :func:`adam_update_reference`; both perform the same
IEEE operations in the same order, so their results are bitwise equal.
"""

import numba
import numpy as np


def adam_update_reference(p, g, m, v, tmp, b1, b2, scale, eps):
    m *= b1
    m += g
    np.multiply(g, g, out=tmp)
    v *= b2
    v += tmp
    np.sqrt(v, out=tmp)
    tmp += eps
    np.divide(m, tmp, out=tmp)
    tmp *= scale
    p -= tmp


@numba.njit(cache=True, nogil=True)
def _adam_flat(p, g, m, v, b1, b2, scale, eps):
    for i in range(p.size):
        mi = b1 * m[i] + g[i]
        vi = b2 * v[i] + g[i] * g[i]
        m[i] = mi
        v[i] = vi
        p[i] -= (mi / (np.sqrt(vi) + eps)) * scale


def adam_update(p, g, m, v, tmp, b1, b2, scale, eps):
    """In-place Adam moment and parameter update on contiguous float64 arrays."""
    _adam_flat(p.reshape(-1), np.ascontiguousarray(g).reshape(-1), m.reshape(-1), v.reshape(-1),
               b1, b2, scale, eps)
