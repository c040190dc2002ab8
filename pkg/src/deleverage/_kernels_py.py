"""Numpy implementation of the lattice scan (used when the extension is absent)."""

from __future__ import annotations

import math

import numpy as np

CHUNK = 1 << 16


def grid_scan(obj_p, obj_q, con_p, con_q, con_c, lo, step, points, start, stop):
    m = lo.size
    best_k, best = -1, math.inf
    radix = points ** np.arange(m - 1, -1, -1, dtype=np.int64)
    for a in range(start, stop, CHUNK):
        idx = np.arange(a, min(a + CHUNK, stop), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % points
        y = lo + digits * step
        f = np.einsum("ki,ki->k", y @ obj_p.T + obj_q, y)
        g = np.einsum("ki,ki->k", y @ con_p.T + con_q, y) + con_c
        f = np.where(g <= 0.0, f, np.inf)
        # last minimizer, matching the compiled scan's tie rule
        j = f.size - 1 - int(np.argmin(f[::-1]))
        if f[j] <= best and f[j] < math.inf:
            best, best_k = float(f[j]), int(idx[j])
    return best_k, best
