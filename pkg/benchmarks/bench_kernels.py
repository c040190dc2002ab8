"""Compare the compiled and numpy lattice scans used by the grid-search oracle.

    python3 benchmarks/bench_kernels.py [--points 101 201 301] [--repeat 3]
"""

import argparse
import time
from pathlib import Path

import numpy as np

from deleverage import _kernels_py, kernels
from deleverage.model import load_instance

ROOT = Path(__file__).resolve().parents[1]


def _args(model, points):
    step = model.x0 / (points - 1)
    return (np.ascontiguousarray(model.obj_matrix), np.ascontiguousarray(model.obj_linear),
            np.ascontiguousarray(model.lev_matrix), np.ascontiguousarray(model.lev_linear),
            float(model.lev_const), np.ascontiguousarray(-model.x0), np.ascontiguousarray(step), points)


def _time(fn, args, total, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args, 0, total)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--instance", type=Path, default=ROOT / "instances" / "example1.json")
    p.add_argument("--points", type=int, nargs="+", default=[51, 101, 201])
    p.add_argument("--repeat", type=int, default=3)
    a = p.parse_args()
    model = load_instance(a.instance)
    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    print(f"{'points':>8} {'lattice':>12} {'numpy s':>10} {'compiled s':>11} {'speedup':>8}")
    for n in a.points:
        args = _args(model, n)
        total = n ** model.m
        t_py, r_py = _time(_kernels_py.grid_scan, args, total, a.repeat)
        if kernels.BACKEND == "cython":
            t_c, r_c = _time(kernels.grid_scan, args, total, a.repeat)
            assert r_c[0] == r_py[0], "backends disagree"
            print(f"{n:>8} {total:>12} {t_py:>10.4f} {t_c:>11.4f} {t_py / t_c:>7.1f}x")
        else:
            print(f"{n:>8} {total:>12} {t_py:>10.4f} {'-':>11} {'-':>8}")


if __name__ == "__main__":
    main()
