"""Plain-text (TOML) configuration shared by every subcommand.

A config is a nested table; CLI flags are merged on top of it. Named
presets stand in for a file path.
"""

from __future__ import annotations

import copy
import hashlib
from pathlib import Path
from typing import Any

import tomli
import tomli_w

__all__ = ["PRESETS", "load_config", "merge", "dumps", "sha256_bytes", "sha256_file"]

_HEADLINE: dict[str, Any] = {
    "seed": 20240601,
    "workers": 1,
    "w": {"drift": 1.0, "atoms": [[0.5, 1.0]]},
    "process": {"a": 0.3},
    "initial": {"profile": "cosine", "mean": 0.5, "amplitude": 0.3, "k": 1},
    "experiment": {
        "grid_sizes": [64, 128, 256, 512],
        "replicas": 50,
        "modes": [0, 1, 2],
        "times": [0.02, 0.1],
        "box_fractions": [0.03125],
    },
    "pde": {"scheme": "implicit", "dt": 1e-5, "ref_factor": 4},
}

_DEFAULT = copy.deepcopy(_HEADLINE)
_DEFAULT["experiment"]["modes"] = [0, 1, 2, 4]

_EQUILIBRIUM = copy.deepcopy(_DEFAULT)
_EQUILIBRIUM["initial"] = {"profile": "constant", "value": 0.4}
_EQUILIBRIUM["experiment"].update(grid_sizes=[32, 64, 128], replicas=40, times=[0.01, 0.05])

_SMOKE = copy.deepcopy(_DEFAULT)
_SMOKE["experiment"].update(grid_sizes=[16, 32], replicas=4, times=[0.01], box_fractions=[0.25])
_SMOKE["pde"]["dt"] = 1e-4

PRESETS: dict[str, dict[str, Any]] = {
    "default": _DEFAULT,
    "headline": _HEADLINE,
    "equilibrium": _EQUILIBRIUM,
    "smoke": _SMOKE,
}


def merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursive dict merge; ``override`` wins, ``None`` values are skipped."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if v is None:
            continue
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(source: str | Path | None) -> tuple[dict[str, Any], bytes]:
    """Return ``(config, raw_bytes)`` from a preset name or a TOML file.

    A run manifest is accepted too: its ``[config]`` table is used.
    """
    if source is None:
        source = "default"
    if str(source) in PRESETS:
        cfg = copy.deepcopy(PRESETS[str(source)])
        return cfg, dumps(cfg).encode()
    path = Path(source)
    raw = path.read_bytes()
    data = tomli.loads(raw.decode())
    if "config" in data and isinstance(data["config"], dict) and "manifest_version" in data:
        data = data["config"]
    return data, raw


def dumps(cfg: dict[str, Any]) -> str:
    return tomli_w.dumps(cfg)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())
