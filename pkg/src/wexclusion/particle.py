"""Exclusion process with conductances, speeded up by ``n**2``.

Across bond ``(x, x+1)`` the occupations are exchanged at rate
``n^2 xi[x] (1 + a (eta(x-1) + eta(x+2)))``. Events are drawn exactly
(continuous-time Markov chain) from a binary sum tree over bond rates; only
bonds ``x-2 .. x+2`` are refreshed after an exchange at ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp

from . import _backend
from .lattice import build_conductances
from .rng import PURPOSE_DYNAMICS, PURPOSE_INIT, numpy_generator, stream_key
from .wfun import WSpec

__all__ = [
    "Configuration",
    "ProcessParams",
    "RateIndex",
    "exchange_rate",
    "sample_initial",
    "advance",
    "empirical_pair",
    "coarse_density",
    "coarse_profile",
    "brute_force_generator",
    "bernoulli_measure",
    "dirichlet_form_particles",
    "run_replica",
]

Profile = Union[Callable[[np.ndarray], np.ndarray], Sequence[float], np.ndarray, float]


@dataclass
class Configuration:
    """Occupancies ``eta`` on the discrete torus with a cached particle count."""

    occupancy: np.ndarray
    particle_count: int = field(init=False)

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if occ.ndim != 1 or np.any(occ > 1):
            raise ValueError("occupancy must be a 0/1 vector")
        self.occupancy = occ
        self.particle_count = int(occ.sum())

    @property
    def n(self) -> int:
        return int(self.occupancy.shape[0])

    @classmethod
    def full(cls, n: int) -> "Configuration":
        return cls(np.ones(n, dtype=np.uint8))

    @classmethod
    def empty(cls, n: int) -> "Configuration":
        return cls(np.zeros(n, dtype=np.uint8))

    def copy(self) -> "Configuration":
        return Configuration(self.occupancy.copy())


@dataclass(frozen=True)
class ProcessParams:
    """Rate asymmetry ``a``, conductance function, grid size and master seed."""

    a: float
    wspec: WSpec
    n: int
    seed: int = 0

    def __post_init__(self):
        if not self.a > -0.5:
            raise ValueError(
                f"a must be > -1/2 so every exchange rate is positive, got a={self.a!r}"
            )
        if self.n < 2:
            raise ValueError(f"need at least 2 sites, got n={self.n}")

    @property
    def time_scale(self) -> float:
        return float(self.n) ** 2

    @cached_property
    def xi(self) -> np.ndarray:
        return build_conductances(self.wspec, self.n).xi


def exchange_rate(params: ProcessParams, eta: Configuration, x: int) -> float:
    """``xi[x] * c_{x,x+1}(eta)``, before the diffusive speed-up."""
    n = params.n
    occ = eta.occupancy
    c = 1.0 + params.a * (int(occ[(x - 1) % n]) + int(occ[(x + 2) % n]))
    return float(params.xi[x % n] * c)


def _profile_values(profile: Profile, n: int) -> np.ndarray:
    u = np.arange(n) / n
    if callable(profile):
        vals = np.asarray(profile(u), dtype=float)
        vals = np.broadcast_to(vals, (n,)).astype(float)
    elif np.isscalar(profile):
        vals = np.full(n, float(profile))
    else:
        vals = np.asarray(profile, dtype=float)
        if vals.shape != (n,):
            raise ValueError(f"profile table has shape {vals.shape}, expected ({n},)")
    if np.any(vals < 0.0) or np.any(vals > 1.0):
        raise ValueError("initial profile must take values in [0, 1]")
    return vals


def sample_initial(profile: Profile, n: int, seed: int, replica: int = 0) -> Configuration:
    """Product Bernoulli configuration with ``P(eta(x) = 1) = profile(x/n)``."""
    vals = _profile_values(profile, n)
    rng = numpy_generator(seed, replica, PURPOSE_INIT)
    return Configuration((rng.random(n) < vals).astype(np.uint8))


class RateIndex:
    """Sum tree of bond rates plus the chain's clock and random stream.

    Leaf ``x`` holds ``n^2 xi[x] c_{x,x+1}(eta)`` if ``eta(x) != eta(x+1)``
    and zero otherwise; the root holds the total rate.
    """

    def __init__(self, params: ProcessParams, eta: Configuration, replica: int = 0,
                 backend: str | None = None):
        if eta.n != params.n:
            raise ValueError(f"configuration has {eta.n} sites, params say {params.n}")
        self.params = params
        self.kernel = _backend.get_kernel(backend)
        self.size = 1 << max(1, (params.n - 1).bit_length())
        self.tree = np.zeros(2 * self.size)
        self.xi = np.ascontiguousarray(params.xi, dtype=float)
        self.n2 = float(params.n) ** 2
        self.state = stream_key(params.seed, replica, PURPOSE_DYNAMICS)
        self.time = 0.0
        self.pending = -1.0
        self.events = 0
        self.since_rebuild = 0
        self.kernel.rebuild(eta.occupancy, self.xi, float(params.a), self.n2, self.tree, self.size)

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def leaf_rates(self) -> np.ndarray:
        return self.tree[self.size:self.size + self.params.n].copy()

    def recompute(self, eta: Configuration) -> np.ndarray:
        """Leaf rates recomputed from scratch (for coherence checks)."""
        occ = eta.occupancy.astype(np.int64)
        nxt = np.roll(occ, -1)
        c = 1.0 + self.params.a * (np.roll(occ, 1) + np.roll(occ, -2)).astype(float)
        return np.where(occ != nxt, self.n2 * self.xi * c, 0.0)

    def coherence_error(self, eta: Configuration) -> float:
        """Relative mismatch between the stored root and a fresh leaf sum."""
        fresh = float(np.sum(self.recompute(eta)))
        if fresh == 0.0:
            return abs(self.total_rate)
        return abs(self.total_rate - fresh) / fresh


def advance(params: ProcessParams, eta: Configuration, clock: RateIndex, t_target: float,
            max_events: int = -1) -> Configuration:
    """Run the chain from ``clock.time`` to ``t_target`` in place.

    The pending exponential waiting time is carried across calls, so the
    trajectory does not depend on where it is stopped and resumed.
    """
    if t_target < clock.time:
        raise ValueError(f"t_target={t_target} precedes current time {clock.time}")
    (clock.time, clock.pending, clock.state, clock.events,
     clock.since_rebuild) = clock.kernel.run_events(
        eta.occupancy, clock.xi, float(params.a), clock.n2, clock.tree, clock.size,
        clock.state, clock.time, clock.pending, float(t_target), clock.events,
        clock.since_rebuild, max_events,
    )
    return eta


def empirical_pair(eta: Configuration, h) -> float:
    """``<pi^N, H> = (1/N) sum_x H(x/N) eta(x)``."""
    h = np.asarray(h, dtype=float)
    if h.shape[0] != eta.n:
        raise ValueError(f"test function of length {h.shape[0]} for {eta.n} sites")
    return float(np.dot(h, eta.occupancy) / eta.n)


def coarse_density(eta: Configuration, x: int, box: int) -> float:
    """Particle density on the box ``{x, ..., x + box - 1}`` (mod N)."""
    n = eta.n
    if not 1 <= box <= n:
        raise ValueError(f"box size must lie in [1, {n}], got {box}")
    idx = (x + np.arange(box)) % n
    return float(eta.occupancy[idx].sum() / box)


def coarse_profile(occupancy: np.ndarray, box: int) -> np.ndarray:
    """:func:`coarse_density` at every site; works on stacked rows too."""
    occ = np.asarray(occupancy, dtype=float)
    n = occ.shape[-1]
    if not 1 <= box <= n:
        raise ValueError(f"box size must lie in [1, {n}], got {box}")
    ext = np.concatenate([occ, occ[..., :box]], axis=-1)
    cs = np.concatenate([np.zeros(occ.shape[:-1] + (1,)), np.cumsum(ext, axis=-1)], axis=-1)
    return (cs[..., box:box + n] - cs[..., :n]) / box


MAX_BRUTE_N = 12


def _states(n: int) -> np.ndarray:
    """Row ``s`` is the occupancy with ``eta(x) = bit x of s``."""
    s = np.arange(1 << n)
    return ((s[:, None] >> np.arange(n)) & 1).astype(np.int64)


def brute_force_generator(params: ProcessParams) -> sp.csr_array:
    """Full ``2^N x 2^N`` rate matrix of ``L_N`` (not speeded up).

    State ``s`` encodes ``eta(x)`` as bit ``x``. Exchanges of equal
    occupations are identities and do not appear.
    """
    n = params.n
    if n > MAX_BRUTE_N:
        raise ValueError(f"brute-force generator limited to n <= {MAX_BRUTE_N}, got {n}")
    eta = _states(n)
    s = np.arange(1 << n)
    rows, cols, vals = [], [], []
    for x in range(n):
        xp1 = (x + 1) % n
        active = eta[:, x] != eta[:, xp1]
        c = 1.0 + params.a * (eta[:, (x - 1) % n] + eta[:, (x + 2) % n])
        target = s ^ ((1 << x) | (1 << xp1))
        rows.append(s[active])
        cols.append(target[active])
        vals.append(params.xi[x] * c[active])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    q = sp.coo_array((vals, (rows, cols)), shape=(1 << n, 1 << n)).tocsr()
    out = np.asarray(q.sum(axis=1)).ravel()
    q = q - sp.diags_array(out)
    return sp.csr_array(q)


def bernoulli_measure(n: int, alpha: float) -> np.ndarray:
    """Probabilities of the product Bernoulli(alpha) measure on all ``2^n`` states."""
    k = _states(n).sum(axis=1)
    return alpha ** k * (1.0 - alpha) ** (n - k)


def dirichlet_form_particles(params: ProcessParams, f, alpha: float) -> float:
    """``I(f) = sum_x (1/2) xi_x E_alpha[c_{x,x+1} (sqrt f(sigma eta) - sqrt f(eta))^2]``.

    ``f`` is a density with respect to Bernoulli(alpha), given on all states.
    """
    n = params.n
    if n > MAX_BRUTE_N:
        raise ValueError(f"exact Dirichlet form limited to n <= {MAX_BRUTE_N}, got {n}")
    f = np.asarray(f, dtype=float)
    nu = bernoulli_measure(n, alpha)
    if f.shape != nu.shape:
        raise ValueError(f"density must have {nu.size} entries, got {f.shape}")
    if np.any(f < 0.0) or not math.isclose(float(np.dot(f, nu)), 1.0, rel_tol=0, abs_tol=1e-10):
        raise ValueError("f must be non-negative with integral one under Bernoulli(alpha)")
    root = np.sqrt(f)
    eta = _states(n)
    s = np.arange(1 << n)
    total = 0.0
    for x in range(n):
        xp1 = (x + 1) % n
        c = 1.0 + params.a * (eta[:, (x - 1) % n] + eta[:, (x + 2) % n])
        swapped = s ^ ((1 << x) | (1 << xp1))
        diff = np.where(eta[:, x] != eta[:, xp1], root[swapped] - root, 0.0)
        total += 0.5 * params.xi[x] * float(np.sum(nu * c * diff * diff))
    return total


def run_replica(params: ProcessParams, profile: Profile, times: Sequence[float],
                replica: int, backend: str | None = None) -> np.ndarray:
    """Occupancy snapshots, shape ``(len(times), n)``, for one replica."""
    eta = sample_initial(profile, params.n, params.seed, replica)
    clock = RateIndex(params, eta, replica=replica, backend=backend)
    out = np.empty((len(times), params.n), dtype=np.uint8)
    for j, t in enumerate(times):
        advance(params, eta, clock, float(t))
        out[j] = eta.occupancy
    return out
