"""Solver for ``d/dt rho = L_W Phi(rho)`` on the conductance grid.

The spatial operator is the random-walk generator applied to ``Phi(rho)``,
so the solver and the particle system share one discrete geometry. Backward
Euler with full Newton is the default time stepper; forward Euler and the
second-order TR-BDF2 scheme are available for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import LatticeOperator, apply_generator, solve_resolvent
from .tridiag import solve_cyclic_tridiagonal

__all__ = [
    "PhiSpec",
    "DensityProfile",
    "SolverConfig",
    "Trajectory",
    "NewtonError",
    "CFLError",
    "RangeError",
    "rhs",
    "step",
    "evolve",
    "mass",
    "lyapunov",
    "energy",
    "explicit_dt_limit",
    "weak_residual",
    "resolvent_form",
    "contraction_check",
]

RANGE_TOL = 1e-9


class NewtonError(RuntimeError):
    """Newton iteration failed; ``trace`` holds the residual history."""

    def __init__(self, message: str, trace: Sequence[float]):
        super().__init__(f"{message}; residual trace: " + ", ".join(f"{r:.3e}" for r in trace))
        self.trace = list(trace)


class CFLError(ValueError):
    pass


class RangeError(ValueError):
    pass


@dataclass(frozen=True)
class PhiSpec:
    """Strictly increasing nonlinearity on ``[l, r]`` with ``1/B <= Phi' <= B``."""

    l: float
    r: float
    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    B: float
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"

    def __post_init__(self):
        if not self.l < self.r:
            raise ValueError(f"need l < r, got [{self.l}, {self.r}]")
        grid = np.linspace(self.l, self.r, 10_000)
        d = np.asarray(self.dphi(grid), dtype=float)
        lo, hi = float(d.min()), float(d.max())
        if not (lo > 0.0 and 1.0 / self.B <= lo * (1 + 1e-12) and hi <= self.B * (1 + 1e-12)):
            raise ValueError(
                f"Phi' ranges over [{lo:.6g}, {hi:.6g}], not inside [1/B, B] with B={self.B:.6g}"
            )

    @classmethod
    def quadratic(cls, a: float) -> "PhiSpec":
        """``Phi(u) = u + a u^2`` on ``[0, 1]``; needs ``a > -1/2``."""
        if not a > -0.5:
            raise ValueError(f"Phi(u) = u + a u^2 is increasing on [0, 1] only for a > -1/2, got {a}")
        d0, d1 = 1.0, 1.0 + 2.0 * a
        big = max(max(d0, d1), 1.0 / min(d0, d1))
        return cls(
            0.0, 1.0,
            phi=lambda u: u + a * u * u,
            dphi=lambda u: 1.0 + 2.0 * a * u,
            B=big,
            antiderivative=lambda u: 0.5 * u * u + (a / 3.0) * u * u * u,
            name=f"quadratic(a={a!r})",
        )

    @classmethod
    def table(cls, u, values, l: float | None = None, r: float | None = None) -> "PhiSpec":
        """Piecewise-linear ``Phi`` through the points ``(u, values)``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(values, dtype=float)
        if u.ndim != 1 or u.shape != v.shape or u.size < 2 or np.any(np.diff(u) <= 0):
            raise ValueError("Phi table needs strictly increasing abscissae and matching values")
        slopes = np.diff(v) / np.diff(u)
        if np.any(slopes <= 0):
            raise ValueError("Phi table must be strictly increasing")
        big = max(float(slopes.max()), 1.0 / float(slopes.min()))

        def dphi(x):
            k = np.clip(np.searchsorted(u, x, side="right") - 1, 0, slopes.size - 1)
            return slopes[k]

        return cls(u[0] if l is None else l, u[-1] if r is None else r,
                   phi=lambda x: np.interp(x, u, v), dphi=dphi, B=big, name="table")

    def H(self, rho):
        """Antiderivative ``int_l^rho Phi``; Gauss-Legendre if none was given."""
        rho = np.asarray(rho, dtype=float)
        if self.antiderivative is not None:
            return self.antiderivative(rho)
        nodes, weights = np.polynomial.legendre.leggauss(16)
        half = 0.5 * (rho - self.l)
        pts = self.l + half[..., None] * (nodes + 1.0)
        return half * np.sum(weights * self.phi(pts), axis=-1)


@dataclass
class DensityProfile:
    values: np.ndarray
    t: float = 0.0

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping controls.

    ``scheme`` is ``"implicit"`` (backward Euler), ``"explicit"`` (forward
    Euler) or ``"trbdf2"``. For the explicit scheme ``dt=None`` picks
    ``cfl`` times the stability limit.
    """

    scheme: str = "implicit"
    dt: float | None = 1e-4
    cfl: float = 0.9
    newton_tol: float = 1e-12
    max_newton: int = 50

    def __post_init__(self):
        if self.scheme not in ("implicit", "explicit", "trbdf2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.dt is None and self.scheme != "explicit":
            raise ValueError("implicit schemes need an explicit dt")
        if not 0.0 < self.cfl <= 0.9:
            raise ValueError(f"CFL safety factor must lie in (0, 0.9], got {self.cfl}")


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # shape (len(times), n)
    newton_iterations: list[int] = field(default_factory=list)


def _check_range(phi: PhiSpec, rho: np.ndarray, what: str = "density"):
    lo, hi = float(rho.min()), float(rho.max())
    if lo < phi.l - RANGE_TOL or hi > phi.r + RANGE_TOL:
        raise RangeError(f"{what} leaves [{phi.l}, {phi.r}]: min={lo:.12g}, max={hi:.12g}")


def _values(rho) -> np.ndarray:
    return np.asarray(rho.values if isinstance(rho, DensityProfile) else rho, dtype=float)


def rhs(op: LatticeOperator, phi: PhiSpec, rho) -> np.ndarray:
    """``L_N Phi(rho)`` in conservation form."""
    r = _values(rho)
    if r.shape[0] != op.n:
        raise ValueError(f"profile of length {r.shape[0]} does not match n={op.n}")
    _check_range(phi, r)
    return apply_generator(op, phi.phi(r))


def explicit_dt_limit(op: LatticeOperator, phi: PhiSpec) -> float:
    """``1 / (2 N^2 max_x (xi_x + xi_{x-1}) B)``."""
    xi = op.xi
    return 1.0 / (2.0 * op.n ** 2 * float(np.max(xi + np.roll(xi, 1))) * phi.B)


def _implicit_solve(op: LatticeOperator, phi: PhiSpec, b: np.ndarray, theta_dt: float,
                    guess: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, int]:
    """Newton for ``rho - theta_dt * L_N Phi(rho) = b``."""
    c = op.bond_rates
    c_prev = np.roll(c, 1)
    rho = guess.copy()
    # residual floor from cancellation in theta_dt * L_N Phi
    floor = 64 * np.finfo(float).eps * (1.0 + theta_dt * op.norm()) * max(1.0, float(np.abs(b).max()))
    trace = []
    for it in range(1, cfg.max_newton + 1):
        F = rho - b - theta_dt * apply_generator(op, phi.phi(rho))
        res = float(np.abs(F).max())
        trace.append(res)
        if res <= cfg.newton_tol:
            return rho, it - 1
        d = phi.dphi(rho)
        diag = 1.0 + theta_dt * (c + c_prev) * d
        upper = -theta_dt * c * np.roll(d, -1)
        lower = -theta_dt * c_prev * np.roll(d, 1)
        delta = solve_cyclic_tridiagonal(lower, diag, upper, -F)
        rho = rho + delta
        if float(np.abs(delta).max()) <= floor and res <= 1e3 * floor:
            return rho, it
    raise NewtonError(f"Newton did not reach {cfg.newton_tol:g} in {cfg.max_newton} iterations", trace)


_GAMMA = 2.0 - math.sqrt(2.0)


def _advance_values(op, phi, r, dt, cfg) -> tuple[np.ndarray, int]:
    if cfg.scheme == "explicit":
        limit = explicit_dt_limit(op, phi)
        if dt > cfg.cfl * limit * (1 + 1e-12):
            raise CFLError(
                f"explicit dt={dt:.6g} exceeds CFL bound {cfg.cfl} * "
                f"(2 N^2 max(xi_x + xi_(x-1)) B)^-1 = {cfg.cfl * limit:.6g}"
            )
        return r + dt * apply_generator(op, phi.phi(r)), 0
    if cfg.scheme == "implicit":
        return _implicit_solve(op, phi, r, dt, r, cfg)
    g = _GAMMA
    half = 0.5 * g * dt
    stage, it1 = _implicit_solve(op, phi, r + half * apply_generator(op, phi.phi(r)), half, r, cfg)
    w = (1.0 - g) / (2.0 - g)
    b = (stage - (1.0 - g) ** 2 * r) / (g * (2.0 - g))
    new, it2 = _implicit_solve(op, phi, b, w * dt, stage, cfg)
    return new, it1 + it2


def step(op: LatticeOperator, phi: PhiSpec, rho: DensityProfile, cfg: SolverConfig,
         dt: float | None = None) -> DensityProfile:
    """One time step of size ``dt`` (default ``cfg.dt``)."""
    r = _values(rho)
    _check_range(phi, r)
    if dt is None:
        dt = cfg.dt if cfg.dt is not None else cfg.cfl * explicit_dt_limit(op, phi)
    new, _ = _advance_values(op, phi, r, dt, cfg)
    _check_range(phi, new, "updated density (maximum principle)")
    return DensityProfile(new, rho.t + dt if isinstance(rho, DensityProfile) else dt)


def evolve(op: LatticeOperator, phi: PhiSpec, gamma, times: Sequence[float],
           cfg: SolverConfig) -> Trajectory:
    """Integrate from ``t = 0`` and record the profile at each of ``times``.

    Each interval between consecutive snapshot times is split into the
    fewest equal sub-steps no longer than the configured ``dt``.
    """
    r = _values(gamma).copy()
    if r.shape[0] != op.n:
        raise ValueError(f"initial profile of length {r.shape[0]} does not match n={op.n}")
    _check_range(phi, r, "initial profile")
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("snapshot times must be non-negative and increasing")
    dt_max = cfg.dt if cfg.dt is not None else cfg.cfl * explicit_dt_limit(op, phi)
    out = np.empty((times.size, op.n))
    iters: list[int] = []
    t = 0.0
    for j, target in enumerate(times):
        span = target - t
        if span > 0:
            m = max(1, math.ceil(span / dt_max - 1e-9))
            h = span / m
            for _ in range(m):
                r, it = _advance_values(op, phi, r, h, cfg)
                iters.append(it)
            _check_range(phi, r, f"density at t={target:g} (maximum principle)")
            t = target
        out[j] = r
    return Trajectory(times, out, iters)


def mass(rho) -> float:
    return float(np.mean(_values(rho)))


def lyapunov(phi: PhiSpec, rho) -> float:
    """``(1/N) sum_x H(rho_x)`` with ``H' = Phi``."""
    r = _values(rho)
    _check_range(phi, r)
    return float(np.mean(phi.H(r)))


def energy(op: LatticeOperator, phi: PhiSpec, rho) -> float:
    """``N sum_x xi_x (Phi(rho_{x+1}) - Phi(rho_x))^2``, the dissipation rate of :func:`lyapunov`."""
    r = _values(rho)
    _check_range(phi, r)
    p = phi.phi(r)
    d = np.roll(p, -1) - p
    return float(op.n * np.dot(op.xi, d * d))


def weak_residual(op: LatticeOperator, phi: PhiSpec, times, values, h, lam: float) -> float:
    """Defect in the weak formulation tested against ``G_lambda h``.

    ``|<rho_T - rho_0, g> - int_0^T <Phi(rho_s), L g> ds|`` with
    ``g = G_lambda h``, so that ``L g = lambda g - h``. The integrand is
    evaluated as ``<L Phi(rho_s), g>`` (``L`` is symmetric), which vanishes
    exactly on constant profiles. The time integral uses the trapezoidal
    rule over the snapshots.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    h = np.asarray(h, dtype=float)
    if values.ndim != 2 or values.shape[0] != times.size or values.shape[1] != op.n:
        raise ValueError(f"trajectory of shape {values.shape} does not match {times.size} times x n={op.n}")
    if h.shape != (op.n,):
        raise ValueError(f"test function of shape {h.shape}, expected ({op.n},)")
    g = solve_resolvent(op, lam, h)
    n = op.n
    lhs = float(np.dot(values[-1] - values[0], g)) / n
    flux = np.array([apply_generator(op, p) for p in phi.phi(values)])
    integrand = flux @ g / n
    rhs_int = float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times)))
    return abs(lhs - rhs_int)


def resolvent_form(op: LatticeOperator, lam: float, d) -> float:
    """``<d, G_lambda d>`` with the ``1/N`` inner product."""
    d = np.asarray(d, dtype=float)
    return float(np.dot(d, solve_resolvent(op, lam, d)) / op.n)


def contraction_check(op: LatticeOperator, phi: PhiSpec, gamma1, gamma2, lam: float,
                      t: float, cfg: SolverConfig) -> tuple[float, float]:
    """Evolve two initial profiles to ``t`` and compare their resolvent distance.

    Returns ``(<d_t, G d_t>, <d_0, G d_0> exp(B lam t / 2))`` with
    ``d = rho^1 - rho^2``.
    """
    g1 = _values(gamma1)
    g2 = _values(gamma2)
    r1 = evolve(op, phi, g1, [t], cfg).values[-1]
    r2 = evolve(op, phi, g2, [t], cfg).values[-1]
    lhs = resolvent_form(op, lam, r1 - r2)
    bound = resolvent_form(op, lam, g1 - g2) * math.exp(phi.B * lam * t / 2.0)
    return lhs, bound
