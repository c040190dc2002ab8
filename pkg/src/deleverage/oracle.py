"""Brute-force lattice search over the trading box, for checking small instances."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import MarketModel, equity

__all__ = ["GridSpec", "GridOverflowError", "grid_search", "grid_step", "lipschitz_bound", "MAX_POINTS"]

MAX_POINTS = 10**8


class GridOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    points_per_dim: int = 101
    workers: int | None = None

    def __post_init__(self):
        if self.points_per_dim < 2:
            raise ValueError("points_per_dim must be at least 2 (endpoints included)")

    def size(self, m: int) -> int:
        return self.points_per_dim**m


def grid_step(model: MarketModel, spec: GridSpec) -> np.ndarray:
    return model.x0 / (spec.points_per_dim - 1)


def lipschitz_bound(model: MarketModel) -> float:
    """Upper bound on the gradient norm of equity over ``[-x0, 0]``."""
    B = model.obj_matrix
    return 2.0 * float(np.linalg.norm(B, 2)) * float(np.linalg.norm(model.x0)) + float(
        np.linalg.norm(model.obj_linear))


def grid_search(model: MarketModel, spec: GridSpec = GridSpec(),
                grid_scan=None) -> tuple[np.ndarray, float]:
    """Best equity over the lattice points that satisfy ``g(y) <= 0`` exactly.

    Ties go to the point that trades least (largest lattice index).  Falls
    back to full liquidation ``-x0`` if no lattice point is feasible.
    """
    m, n = model.m, spec.points_per_dim
    total = spec.size(m)
    if total > MAX_POINTS:
        raise GridOverflowError(f"grid has {n}^{m} = {total:.3g} points, limit {MAX_POINTS:.0e}")
    scan = kernels.grid_scan if grid_scan is None else grid_scan
    lo = np.ascontiguousarray(-model.x0, dtype=float)
    step = np.ascontiguousarray(grid_step(model, spec), dtype=float)
    args = (np.ascontiguousarray(model.obj_matrix), np.ascontiguousarray(model.obj_linear),
            np.ascontiguousarray(model.lev_matrix), np.ascontiguousarray(model.lev_linear),
            float(model.lev_const), lo, step, n)

    workers = spec.workers or min(8, os.cpu_count() or 1)
    bounds = np.linspace(0, total, workers + 1, dtype=np.int64)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if len(chunks) == 1:
        results = [scan(*args, *chunks[0])]
    else:
        with ThreadPoolExecutor(len(chunks)) as pool:
            results = list(pool.map(lambda c: scan(*args, *c), chunks))

    best_k, best = -1, math.inf
    for k, v in results:
        if k >= 0 and (v < best or (v == best and k > best_k)):
            best_k, best = k, v
    if best_k < 0:
        y = -model.x0.copy()
        return y, equity(model, y)
    digits = np.array([(best_k // n**(m - 1 - i)) % n for i in range(m)])
    y = np.minimum(lo + digits * step, 0.0)
    return y, equity(model, y)
