"""Named initial density profiles on the torus."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Callable

import numpy as np

__all__ = ["make_profile", "PROFILE_NAMES"]

PROFILE_NAMES = ("constant", "cosine", "step", "file")


def make_profile(spec: dict[str, Any] | str) -> Callable[[np.ndarray], np.ndarray]:
    """Build ``gamma(u)`` from a config table.

    ``{"profile": "cosine", "mean": 0.5, "amplitude": 0.3, "k": 1}`` gives
    ``0.5 + 0.3 cos(2 pi k u)``. ``"step"`` takes ``low``, ``high``,
    ``start``, ``stop``; ``"file"`` takes ``path`` to a two-column table
    ``u, rho`` interpolated periodically.
    """
    if isinstance(spec, str):
        spec = {"profile": spec}
    name = spec.get("profile", "constant")
    if name == "constant":
        value = float(spec.get("value", spec.get("alpha", 0.5)))
        return lambda u: np.full(np.shape(u), value)
    if name == "cosine":
        mean = float(spec.get("mean", 0.5))
        amp = float(spec.get("amplitude", 0.3))
        k = int(spec.get("k", 1))
        return lambda u: mean + amp * np.cos(2.0 * np.pi * k * np.asarray(u))
    if name == "step":
        low = float(spec.get("low", 0.2))
        high = float(spec.get("high", 0.8))
        start = float(spec.get("start", 0.25))
        stop = float(spec.get("stop", 0.75))

        def step(u):
            f = np.mod(np.asarray(u, dtype=float), 1.0)
            return np.where((f >= start) & (f < stop), high, low)

        return step
    if name == "file":
        data = np.loadtxt(Path(spec["path"]), delimiter=",", ndmin=2, comments="#")
        if data.shape[1] < 2:
            raise ValueError("profile file needs two columns: u, rho")
        uu, rr = data[:, 0], data[:, 1]
        return lambda u: np.interp(np.mod(u, 1.0), uu, rr, period=1.0)
    raise ValueError(f"unknown profile {name!r}; choose one of {PROFILE_NAMES}")
