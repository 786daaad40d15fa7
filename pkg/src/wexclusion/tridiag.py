"""Tridiagonal and cyclic tridiagonal linear solves.

Row ``i`` of the cyclic system reads::

    lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i]

with indices mod ``n``. The cyclic case is reduced to two banded solves by a
rank-one (Sherman-Morrison) correction of the corner entries.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

__all__ = ["solve_tridiagonal", "solve_cyclic_tridiagonal", "cyclic_to_dense"]


def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve a non-cyclic tridiagonal system.

    ``lower[0]`` and ``upper[-1]`` are ignored. ``rhs`` may be 1-D or 2-D
    (one column per right-hand side).
    """
    diag = np.asarray(diag, dtype=float)
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = np.asarray(upper, dtype=float)[:-1]
    ab[1] = diag
    ab[2, :-1] = np.asarray(lower, dtype=float)[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def cyclic_to_dense(lower, diag, upper) -> np.ndarray:
    diag = np.asarray(diag, dtype=float)
    n = diag.shape[0]
    a = np.diag(diag).astype(float)
    idx = np.arange(n)
    np.add.at(a, (idx, (idx - 1) % n), lower)
    np.add.at(a, (idx, (idx + 1) % n), upper)
    return a


def solve_cyclic_tridiagonal(lower, diag, upper, rhs):
    """Solve a cyclic tridiagonal system in O(n).

    Parameters
    ----------
    lower, diag, upper : array_like, shape (n,)
        ``lower[0]`` is the corner entry ``A[0, n-1]`` and ``upper[n-1]`` the
        corner entry ``A[n-1, 0]``.
    rhs : array_like, shape (n,) or (n, k)

    Returns
    -------
    ndarray
        Solution with the shape of ``rhs``.
    """
    lower = np.asarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[0]
    if rhs.shape[0] != n or lower.shape[0] != n or upper.shape[0] != n:
        raise ValueError("lower, diag, upper and rhs must share the leading dimension")
    if n <= 2:
        return np.linalg.solve(cyclic_to_dense(lower, diag, upper), rhs)

    gamma = -diag[0]
    alpha = lower[0]    # A[0, n-1]
    beta = upper[n - 1]  # A[n-1, 0]
    d = diag.copy()
    d[0] -= gamma
    d[n - 1] -= alpha * beta / gamma

    two_d = rhs.ndim == 2
    cols = rhs if two_d else rhs[:, None]
    u = np.zeros((n, 1))
    u[0, 0] = gamma
    u[n - 1, 0] = beta
    sol = solve_tridiagonal(lower, d, upper, np.hstack([cols, u]))
    y, q = sol[:, :-1], sol[:, -1]
    # v = e_0 + (alpha / gamma) e_{n-1}
    vy = y[0] + (alpha / gamma) * y[n - 1]
    vq = q[0] + (alpha / gamma) * q[n - 1]
    x = y - np.outer(q, vy / (1.0 + vq))
    return x if two_d else x[:, 0]
