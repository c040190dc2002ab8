"""Hot-loop kernels: compiled extension when available, numpy otherwise.

Set ``DELEVERAGE_PURE_PYTHON=1`` to force the numpy implementation.
"""

from __future__ import annotations

import os

from . import _kernels_py

__all__ = ["grid_scan", "BACKEND", "python_grid_scan"]

python_grid_scan = _kernels_py.grid_scan

if os.environ.get("DELEVERAGE_PURE_PYTHON", "") not in ("", "0"):
    grid_scan = python_grid_scan
    BACKEND = "python"
else:
    try:
        from ._kernels import grid_scan
        BACKEND = "cython"
    except ImportError:
        grid_scan = python_grid_scan
        BACKEND = "python"
