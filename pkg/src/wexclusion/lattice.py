"""Conductances and the cyclic random-walk generator built from them.

For a grid of ``n`` points the walk jumps across bond ``(x, x+1)`` at rate
``n**2 * xi[x]`` with ``xi[x] = 1 / (n * (W((x+1)/n) - W(x/n)))``. Large
increments of ``W`` (atoms) make slow bonds.

Inner products over the grid are normalized by ``1/n`` unless stated
otherwise, so that they approximate integrals over the torus.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh, expm

from .tridiag import solve_tridiagonal
from .wfun import WSpec, eval_w, eval_w_left

__all__ = [
    "Conductances",
    "LatticeOperator",
    "SpectralDecomp",
    "SpectrumCapError",
    "build_conductances",
    "build_operator",
    "apply_generator",
    "solve_resolvent",
    "spectrum",
    "dirichlet_form",
    "poincare_check",
    "green_formula",
    "green_dirichlet",
    "green_error",
]

DENSE_EIG_CAP = 4096


class SpectrumCapError(RuntimeError):
    """Dense eigensolve requested above the configured size cap."""


@dataclass(frozen=True)
class Conductances:
    n: int
    xi: np.ndarray
    w: WSpec

    def __post_init__(self):
        self.xi.setflags(write=False)


def build_conductances(w: WSpec, n: int) -> Conductances:
    """``xi[x] = 1 / (n * (W((x+1)/n) - W(x/n)))`` for ``0 <= x < n``.

    The last bond uses ``(1 - 1/n, 1]``, i.e. ``W(1) = W(1) - W(0)``.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"need at least 2 sites, got n={n}")
    nodes = eval_w(w, np.arange(n + 1) / n)
    nodes[n] = w.total
    dw = np.diff(nodes)
    if np.any(dw <= 0.0):
        raise ValueError("W increments must be strictly positive")
    return Conductances(n, 1.0 / (n * dw), w)


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigenpairs of ``-L_N``, eigenvalues ascending, orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(eq=False)
class LatticeOperator:
    """The generator ``L_N`` of the walk with conductances on the discrete torus.

    ``(L_N h)(x) = n^2 xi[x] (h[x+1] - h[x]) + n^2 xi[x-1] (h[x-1] - h[x])``.
    """

    conductances: Conductances
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    @property
    def n(self) -> int:
        return self.conductances.n

    @property
    def xi(self) -> np.ndarray:
        return self.conductances.xi

    @property
    def w(self) -> WSpec:
        return self.conductances.w

    @property
    def bond_rates(self) -> np.ndarray:
        """``n^2 xi``; entry ``x`` is the off-diagonal on bond ``(x, x+1)``."""
        return self.n * self.n * self.xi

    def diagonal(self) -> np.ndarray:
        c = self.bond_rates
        return -(c + np.roll(c, 1))

    def dense(self) -> np.ndarray:
        n = self.n
        c = self.bond_rates
        a = np.zeros((n, n))
        idx = np.arange(n)
        nxt = (idx + 1) % n
        np.add.at(a, (idx, nxt), c)
        np.add.at(a, (nxt, idx), c)
        a[idx, idx] = self.diagonal()
        return a

    def norm(self) -> float:
        """Cheap upper bound on the spectral norm (max absolute row sum)."""
        return float(2.0 * np.max(np.abs(self.diagonal())))

    def semigroup(self, t: float) -> np.ndarray:
        """Dense ``exp(t L_N)``; row ``x`` is the law at time ``t`` of the walk started at ``x``."""
        return expm(t * self.dense())

    def _resolvent_factor(self, lam: float):
        """Cached Cholesky factor of the corner-free part of ``lam - L_N``."""
        key = float(lam)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        n = self.n
        c = self.bond_rates
        diag = lam - self.diagonal()
        off = -c  # A[x, x+1] for x < n-1; A[n-1, 0] = A[0, n-1] = -c[n-1]
        gamma = -diag[0]
        corner = off[n - 1]
        d = diag.copy()
        d[0] -= gamma
        d[n - 1] -= corner * corner / gamma
        ab = np.zeros((2, n))
        ab[0, 1:] = off[:-1]
        ab[1] = d
        chol = cholesky_banded(ab, lower=False, check_finite=False)
        z = np.zeros(n)
        z[0] = gamma
        z[n - 1] = corner
        q = cho_solve_banded((chol, False), z, check_finite=False)
        scale = corner / gamma
        vq = q[0] + scale * q[n - 1]
        entry = (chol, q, scale, vq)
        with self._lock:
            self._cache.setdefault(key, entry)
        return entry


def build_operator(w: WSpec, n: int) -> LatticeOperator:
    return LatticeOperator(build_conductances(w, n))


def _check_len(op: LatticeOperator, h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape[0] != op.n:
        raise ValueError(f"vector of length {h.shape[0]} does not match n={op.n}")
    return h


def apply_generator(op: LatticeOperator, h) -> np.ndarray:
    h = _check_len(op, h)
    c = op.bond_rates
    flux = c * (np.roll(h, -1) - h)  # flux[x] across bond (x, x+1)
    return flux - np.roll(flux, 1)


def solve_resolvent(op: LatticeOperator, lam: float, h) -> np.ndarray:
    """Solve ``lam * g - L_N g = h`` for ``g``.

    Uses a cached banded Cholesky factorization plus a rank-one corner
    correction; ``h`` may have extra trailing columns.
    """
    if not lam > 0.0:
        raise ValueError(f"resolvent parameter must be > 0, got {lam!r}")
    h = _check_len(op, h)
    if op.n <= 2:
        return np.linalg.solve(lam * np.eye(op.n) - op.dense(), h)
    chol, q, scale, vq = op._resolvent_factor(lam)
    y = cho_solve_banded((chol, False), h, check_finite=False)
    vy = y[0] + scale * y[op.n - 1]
    if y.ndim == 1:
        return y - q * (vy / (1.0 + vq))
    return y - np.outer(q, vy / (1.0 + vq))


def spectrum(op: LatticeOperator, cap: int = DENSE_EIG_CAP) -> SpectralDecomp:
    if op.n > cap:
        raise SpectrumCapError(f"dense eigensolve capped at n={cap}, got n={op.n}")
    vals, vecs = eigh(-op.dense())
    # fix signs: first eigenvector positive, others with positive leading nonzero entry
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j]) > 1e-12))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return SpectralDecomp(vals, vecs)


def dirichlet_form(op: LatticeOperator, h) -> float:
    """``(1/n) sum_x xi[x] (n (h[x+1] - h[x]))^2``."""
    h = _check_len(op, h)
    grad = op.n * (np.roll(h, -1) - h)
    return float(np.dot(op.xi, grad * grad) / op.n)


def poincare_check(op: LatticeOperator, h) -> tuple[float, float]:
    """Both sides of ``mean(h^2) <= W(1) * D(h) + mean(h)^2``."""
    h = _check_len(op, h)
    lhs = float(np.mean(h * h))
    rhs = op.w.total * dirichlet_form(op, h) + float(np.mean(h)) ** 2
    return lhs, rhs


def green_formula(w: WSpec, x, y, left: bool = False):
    """Green's function of ``(d/dx)(d/dW)`` on ``[0, 1]`` with zero boundary values.

    ``G(x, y) = -W(y) (W(1) - W(x)) / W(1)`` for ``y <= x`` and
    ``-(W(1) - W(y)) W(x) / W(1)`` for ``x <= y``. It satisfies
    ``(d/dx)(d/dW) G(., y) = +delta_y``. With ``left=True`` the left limit in
    ``x`` is returned.
    """
    x = np.asarray(x, dtype=float)
    total = w.total
    wx = eval_w_left(w, x) if left else eval_w(w, x)
    wx = np.where(x >= 1.0, total if not left else wx, wx)
    wx = np.where(x <= 0.0, 0.0, wx)
    wy = 0.0 if y <= 0.0 else (total if y >= 1.0 else eval_w(w, y))
    # a left limit at x == y approaches from the x < y side
    right = (y < x) if left else (y <= x)
    g = np.where(right, -wy * (total - wx) / total, -(total - wy) * wx / total)
    return g if g.ndim else float(g)


def green_dirichlet(op: LatticeOperator, y_index: int) -> np.ndarray:
    """Discrete Green's function on the interval, killed at sites 0 and n.

    Solves ``L_D u = n e_y`` on interior sites ``1..n-1`` where ``L_D`` is the
    conductance generator with ``u[0] = u[n] = 0``; returns ``u`` on
    ``0..n``. The point source of mass one is ``n e_y`` under the ``1/n``
    normalization, and the positive sign matches :func:`green_formula`.
    """
    n = op.n
    if not 0 < y_index < n:
        raise ValueError(f"source index must be interior (0 < y < {n}), got {y_index}")
    c = op.bond_rates
    m = n - 1
    # interior site s = 1..n-1 couples to s-1 via c[s-1] and to s+1 via c[s]
    diag = -(c[:m] + c[1:n])
    upper = np.empty(m)
    lower = np.empty(m)
    upper[:-1] = c[1:m]
    lower[1:] = c[1:m]
    rhs = np.zeros(m)
    rhs[y_index - 1] = n
    u = np.zeros(n + 1)
    if m == 1:
        u[1] = rhs[0] / diag[0]
    else:
        u[1:n] = solve_tridiagonal(lower, diag, upper, rhs)
    return u


def green_error(op: LatticeOperator, y_index: int) -> tuple[float, float]:
    """Sup-norm distance on ``[0, 1)`` between the step interpolant and ``G``.

    Node ``x`` represents the cell ``[x/n, (x+1)/n)``. ``G(., y)`` is monotone
    on each cell, so the sup over a cell is attained at its endpoints (the
    right one as a left limit). Returns ``(max_err, max_err * n)``.
    """
    n = op.n
    u = green_dirichlet(op, y_index)
    y = y_index / n
    starts = np.arange(n) / n
    ends = np.arange(1, n + 1) / n
    g0 = green_formula(op.w, starts, y)
    g1 = green_formula(op.w, ends, y, left=True)
    err = np.maximum(np.abs(u[:n] - g0), np.abs(u[:n] - g1))
    e = float(err.max())
    return e, e * n
