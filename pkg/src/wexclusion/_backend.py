"""Pick the KMC kernel at import: compiled if available, else pure Python.

Set ``WEXCLUSION_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kmc_py

BACKEND = "python"
_impl = _kmc_py

if os.environ.get("WEXCLUSION_BACKEND", "").lower() != "python":
    try:
        from . import _kmc_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kmc_py

REBUILD_EVERY = _kmc_py.REBUILD_EVERY


def get_kernel(name: str | None = None):
    """Kernel module by name (``"cython"``/``"python"``); default is the import-time choice."""
    if name is None:
        return _impl
    if name == "python":
        return _kmc_py
    if name == "cython":
        from . import _kmc_cy

        return _kmc_cy
    raise ValueError(f"unknown KMC backend {name!r}")
