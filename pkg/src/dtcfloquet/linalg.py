"""Small dense matrix kernels used by the Floquet machinery.

``expm_small`` is a scaling-and-squaring Taylor exponential specialised for
the 3x3 propagators of the fluctuation equations.  The series is truncated
adaptively once the next term falls below double precision relative to the
partial sum, so short Trotter steps cost only a handful of products.
"""

import math

import numpy as np
from numba import njit

_THETA = 0.5
_EPS = 2.0**-54


@njit(cache=True)
def _norm1(a):
    n = a.shape[0]
    best = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(a[i, j])
        if s > best:
            best = s
    return best


@njit(cache=True)
def _matmul_into(a, b, out):
    n = a.shape[0]
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += a[i, k] * b[k, j]
            out[i, j] = s


@njit(cache=True)
def expm_small(a):
    """exp(a) for a small real square matrix, accurate to ~1e-15 relative."""
    n = a.shape[0]
    nrm = _norm1(a)
    s = 0
    if nrm > _THETA:
        s = int(math.ceil(math.log2(nrm / _THETA)))
    scale = 2.0**-s
    x = a * scale
    result = np.eye(n)
    term = np.eye(n)
    tmp = np.empty((n, n))
    for k in range(1, 40):
        _matmul_into(term, x, tmp)
        for i in range(n):
            for j in range(n):
                term[i, j] = tmp[i, j] / k
        result += term
        if _norm1(term) <= _EPS * _norm1(result):
            break
    for _ in range(s):
        _matmul_into(result, result, tmp)
        result[:, :] = tmp
    return result


@njit(cache=True)
def ordered_product(mats, dt):
    """Time-ordered product ``exp(M[n-1] dt) ... exp(M[1] dt) exp(M[0] dt)``."""
    n = mats.shape[1]
    phi = np.eye(n)
    tmp = np.empty((n, n))
    for j in range(mats.shape[0]):
        step = expm_small(mats[j] * dt)
        _matmul_into(step, phi, tmp)
        phi[:, :] = tmp
    return phi
