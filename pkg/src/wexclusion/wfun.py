"""Periodic strictly increasing cadlag conductance functions.

A :class:`WSpec` is a positive drift plus finitely many atoms on the unit
torus. ``W(0) = 0`` and ``W(u + 1) - W(u) = W(1)`` for all ``u``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "WSpec",
    "WSpecError",
    "eval_w",
    "eval_w_left",
    "increment",
    "sample_jump_spec",
    "separate_atoms_from_grid",
    "wspec_to_dict",
    "wspec_from_dict",
    "dumps_wspec",
    "loads_wspec",
]


class WSpecError(ValueError):
    """Raised when a conductance function is not strictly increasing or malformed."""


@dataclass(frozen=True)
class WSpec:
    """Drift plus atoms on ``[0, 1)``.

    Parameters
    ----------
    drift : float
        Slope of the absolutely continuous part. Must be strictly positive.
    atoms : tuple of (location, weight)
        Locations strictly increasing in ``[0, 1)``, weights strictly positive.
    meta : dict
        Sampler provenance (``seed``, ``alpha``, ``n_atoms``, ...); not used
        in evaluation.

    Notes
    -----
    ``W(0) = 0``. An atom at location ``0`` is the jump at the integers, so
    ``W(1-) = W(1) - weight``.
    """

    drift: float
    atoms: tuple[tuple[float, float], ...] = ()
    meta: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        drift = float(self.drift)
        if not (math.isfinite(drift) and drift > 0.0):
            raise WSpecError(
                f"drift must be > 0 so that W is strictly increasing, got {self.drift!r}"
            )
        atoms = tuple((float(u), float(w)) for u, w in self.atoms)
        prev = -math.inf
        for u, w in atoms:
            if not (0.0 <= u < 1.0):
                raise WSpecError(f"atom location {u!r} outside [0, 1)")
            if not (math.isfinite(w) and w > 0.0):
                raise WSpecError(f"atom weight {w!r} must be > 0 (W strictly increasing)")
            if u <= prev:
                raise WSpecError("atom locations must be strictly increasing")
            prev = u
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "atoms", atoms)

    @property
    def locations(self) -> np.ndarray:
        return np.array([u for u, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    @property
    def total(self) -> float:
        """``W(1) - W(0)``."""
        return self.drift + math.fsum(w for _, w in self.atoms)

    @classmethod
    def identity(cls) -> "WSpec":
        return cls(1.0)

    def __call__(self, u):
        return eval_w(self, u)


def eval_w(w: WSpec, u):
    """Evaluate ``W(u)``; right-continuous, periodic extension to all reals.

    >>> eval_w(WSpec(1.0, ((0.5, 1.0),)), 0.5)
    1.5
    """
    u = np.asarray(u, dtype=float)
    k = np.floor(u)
    frac = u - k
    val = w.drift * frac + k * w.total
    for loc, wt in w.atoms:
        # an atom at 0 jumps at the integers and is already in k * total
        if loc > 0.0:
            val = val + wt * (frac >= loc)
    return val if val.ndim else float(val)


def eval_w_left(w: WSpec, u):
    """Left limit ``W(u-)``."""
    u = np.asarray(u, dtype=float)
    frac = u - np.floor(u)
    val = np.asarray(eval_w(w, u), dtype=float)
    for loc, wt in w.atoms:
        val = val - wt * (frac == loc)
    return val if val.ndim else float(val)


def increment(w: WSpec, a: float, b: float) -> float:
    """``W(b) - W(a)``, the mass of the half-open interval ``(a, b]``."""
    if not a < b:
        raise ValueError(f"increment needs a < b, got a={a!r}, b={b!r}")
    return float(eval_w(w, b) - eval_w(w, a))


def sample_jump_spec(
    alpha: float,
    n_atoms: int,
    min_weight: float,
    seed: int,
    drift: float = 1e-3,
) -> WSpec:
    """Finite-atom stand-in for a stable subordinator.

    Weights are iid Pareto(alpha) truncated below at ``min_weight`` and then
    normalized to sum to one; locations are iid uniform on ``[0, 1)``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise ValueError(f"n_atoms must be a positive integer, got {n_atoms!r}")
    if not min_weight > 0.0:
        raise ValueError(f"min_weight must be > 0, got {min_weight!r}")
    if not drift > 0.0:
        raise ValueError(f"drift must be > 0, got {drift!r}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x57]))
    locs = rng.random(n_atoms)
    # inverse cdf of P(X > x) = (x / min_weight)^(-alpha), x >= min_weight
    raw = min_weight * (1.0 - rng.random(n_atoms)) ** (-1.0 / alpha)
    weights = raw / raw.sum()
    order = np.argsort(locs, kind="stable")
    locs, weights = locs[order], weights[order]
    if np.any(np.diff(locs) <= 0.0):  # pragma: no cover - probability zero
        raise WSpecError("sampled coincident atom locations; change the seed")
    meta = {"seed": int(seed), "alpha": float(alpha), "n_atoms": int(n_atoms),
            "min_weight": float(min_weight)}
    return WSpec(drift, tuple(zip(locs.tolist(), weights.tolist())), meta=meta)


def separate_atoms_from_grid(w: WSpec, n: int) -> WSpec:
    """Shift atoms sitting exactly on a grid point ``x/n`` by ``1e-12/n`` to the right.

    Every grid that contains the point then puts the atom on the bond
    starting there, so results are comparable across ``n``.
    """
    eps = 1e-12 / n
    moved = []
    changed = False
    for u, wt in w.atoms:
        if abs(u * n - round(u * n)) < 1e-9:
            logger.info("atom at %r coincides with grid 1/%d; jittered by %.3g", u, n, eps)
            u = u + eps
            changed = True
        moved.append((u, wt))
    if not changed:
        return w
    return WSpec(w.drift, tuple(moved), meta=dict(w.meta))


def wspec_to_dict(w: WSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"drift": w.drift, "atoms": [[u, wt] for u, wt in w.atoms]}
    out.update(w.meta)
    return out


def wspec_from_dict(d: dict[str, Any]) -> WSpec:
    """Build a spec from a config table.

    A table with ``alpha`` and ``n_atoms`` but no ``atoms`` is resampled.
    """
    if "atoms" not in d and "alpha" in d:
        return sample_jump_spec(
            float(d["alpha"]), int(d["n_atoms"]), float(d.get("min_weight", 1e-3)),
            int(d.get("seed", 0)), drift=float(d.get("drift", 1e-3)),
        )
    if "drift" not in d:
        raise WSpecError("W spec needs a 'drift' entry")
    atoms = tuple((float(u), float(wt)) for u, wt in d.get("atoms", []))
    meta = {k: v for k, v in d.items() if k not in ("drift", "atoms")}
    return WSpec(float(d["drift"]), atoms, meta=meta)


def dumps_wspec(w: WSpec) -> str:
    """Plain-text block; floats use ``repr`` so the round trip is exact."""
    import tomli_w

    return tomli_w.dumps(wspec_to_dict(w))


def loads_wspec(text: str) -> WSpec:
    import tomli

    data = tomli.loads(text)
    if "w" in data and isinstance(data["w"], dict):
        data = data["w"]
    return wspec_from_dict(data)
