"""Global branch-and-bound over the D.C. form.

Upper bounds come from SCO runs (initial and restarted); lower bounds from
the envelope relaxation over sub-rectangles of the first ``r`` z-coordinates.
Nodes are explored best-first and split adaptively so that the parent's
relaxed point is cut off.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .model import MarketModel, equity, leverage_gap, liability, objective
from .reform import DcReform, f_hat, g_hat, reformulate, simultaneous_diagonalize, spectral_split
from .sco import ScoError, default_start, sco
from .subsolver import SubproblemSolver, build_relaxation, relaxation_t, solve

__all__ = [
    "BnbNode",
    "SolveReport",
    "SolveError",
    "DegeneratePortfolioError",
    "scobb",
    "rho_max",
    "certify",
    "node_bound",
    "report_to_dict",
]

log = logging.getLogger(__name__)

EPS_OPTIMAL = "eps-optimal"
TIME_LIMIT = "time-limit"

PHI_MARGIN = 1e-10
EDGE_SNAP = 1e-6
RETRIES = 3


class SolveError(RuntimeError):
    pass


class DegeneratePortfolioError(SolveError):
    pass


@dataclass(order=True)
class BnbNode:
    lower_bound: float
    seq: int
    box_l: np.ndarray = field(compare=False)
    box_u: np.ndarray = field(compare=False)
    relax_z: np.ndarray = field(compare=False)
    relax_t: np.ndarray = field(compare=False)

    @property
    def gaps(self) -> np.ndarray:
        """Envelope gaps ``t_i - z_i^2`` on the branching coordinates."""
        zr = self.relax_z[: self.box_l.size]
        return self.relax_t - zr * zr


@dataclass
class SolveReport:
    y_star: np.ndarray
    z_star: np.ndarray
    equity: float
    objective: float
    leverage_gap: float
    lower_bound: float
    global_bound_gap: float
    nodes_processed: int
    iterations: int
    sco_restarts: int
    sco_iterations: int
    elapsed: float
    status: str
    eps: float
    node_log: list[BnbNode] | None = None

    @property
    def equity_bound(self) -> float:
        """Certified upper bound on the attainable equity."""
        return self.equity + (self.objective - self.lower_bound)


class _Incumbent:
    def __init__(self, reform: DcReform, leverage: bool):
        self.reform = reform
        self.leverage = leverage
        self.z = None
        self.y = None
        self.value = math.inf

    def project(self, z):
        x0 = self.reform.model.x0
        y = np.clip(self.reform.d @ z, -x0, 0.0)
        return self.reform.d_inv @ y, y

    def g(self, y) -> float:
        return leverage_gap(self.reform.model, y) if self.leverage else -math.inf

    def offer(self, z, eps: float) -> bool:
        zc, y = self.project(z)
        if self.g(y) > eps:
            return False
        f = objective(self.reform.model, y)
        if f < self.value:
            self.z, self.y, self.value = zc, y, f
            return True
        return False


def node_bound(reform: DcReform, eps: float) -> int:
    """Worst-case count of relaxations needed for an eps-optimal answer."""
    r, s = reform.r, reform.s
    k = math.sqrt(r + reform.rho1 * s)
    widths = reform.z_hi[:r] - reform.z_lo[:r]
    return math.prod(max(1, math.ceil(k * w / (2.0 * math.sqrt(eps)))) for w in widths)


def _branch_point(node: BnbNode, i: int) -> float:
    l, u = node.box_l[i], node.box_u[i]
    z, t = node.relax_z[i], node.relax_t[i]
    w = 0.5 * (l + u)
    margin = PHI_MARGIN * max(1.0, abs(t))
    in_phi = t > (l + w) * z - l * w + margin and t > (w + u) * z - w * u + margin
    beta = w if in_phi else z
    if min(beta - l, u - beta) < EDGE_SNAP * (u - l):
        beta = w
    return float(beta)


def _solve_box(reform, lo, hi, tol, leverage, solver, seq):
    prob = build_relaxation(reform, lo, hi, leverage=leverage)
    t = tol
    for _ in range(RETRIES + 1):
        sol = solve(prob, t, solver)
        if sol.status == "infeasible":
            return None
        if sol.status == "optimal":
            z = sol.x[: reform.m].copy()
            return BnbNode(sol.value, seq, lo, hi, z, relaxation_t(lo, hi, z, sol.x[reform.m:]))
        t /= 10.0
    raise SolveError(f"relaxation over box {lo}..{hi} failed after {RETRIES} retries ({sol.status})")


def scobb(model: MarketModel, eps: float = 1e-5, time_limit: float = 3600.0, *,
          reform: DcReform | None = None, leverage: bool = True, parallel: bool = False,
          record_nodes: bool = False, solver: SubproblemSolver | None = None,
          progress: Callable[[dict[str, Any]], None] | None = None,
          z0=None) -> SolveReport:
    start = time.perf_counter()
    R = reformulate(model) if reform is None else reform
    r = R.r
    tol = eps / 10.0
    counter = itertools.count()

    inc = _Incumbent(R, leverage)
    first = sco(R, z0 if z0 is not None else default_start(R), eps,
                leverage=leverage, solver=solver)
    sco_iters = first.iterations
    inc.offer(first.z, eps)
    if inc.z is None:
        inc.offer(default_start(R), eps)

    root = _solve_box(R, R.z_lo[:r].copy(), R.z_hi[:r].copy(), tol, leverage, solver, next(counter))
    if root is None:
        raise SolveError("root relaxation is infeasible; check the model with validate()")
    nodes = 1
    log_nodes = [root] if record_nodes else None
    inc.offer(root.relax_z, eps)

    heap = [root]
    discarded = math.inf
    restarts = 0
    iters = 0
    status = EPS_OPTIMAL
    stop_lb = math.inf
    if progress is not None:
        progress({"iteration": 0, "nodes": nodes, "open": 1, "upper": inc.value,
                  "lower": root.lower_bound, "elapsed": time.perf_counter() - start})
    pool = ThreadPoolExecutor(max_workers=2) if parallel else None
    try:
        while heap:
            if time.perf_counter() - start > time_limit:
                status = TIME_LIMIT
                break
            node = heapq.heappop(heap)
            if node.lower_bound >= inc.value - eps:
                stop_lb = node.lower_bound
                break
            iters += 1
            gaps = node.gaps
            i = int(np.argmax(gaps))
            beta = _branch_point(node, i)
            lo1, hi1 = node.box_l.copy(), node.box_u.copy()
            lo2, hi2 = node.box_l.copy(), node.box_u.copy()
            hi1[i] = beta
            lo2[i] = beta
            args = [(lo1, hi1), (lo2, hi2)]
            if pool is not None:
                futs = [pool.submit(_solve_box, R, lo, hi, tol, leverage, solver, next(counter))
                        for lo, hi in args]
                children = [f.result() for f in futs]
            else:
                children = [_solve_box(R, lo, hi, tol, leverage, solver, next(counter))
                            for lo, hi in args]
            nodes += 2
            children = [c for c in children if c is not None]
            if record_nodes:
                log_nodes.extend(children)
            for c in children:
                heapq.heappush(heap, c)

            if children:
                best = min(children, key=lambda c: f_hat(R, c.relax_z))
                zt, _ = inc.project(best.relax_z)
                g_t = g_hat(R, zt) if leverage else -math.inf
                if g_t <= eps and f_hat(R, zt) <= inc.value - eps:
                    inc.offer(zt, eps)
                    try:
                        res = sco(R, zt, eps, leverage=leverage, feas_tol=eps, solver=solver)
                        restarts += 1
                        sco_iters += res.iterations
                        inc.offer(res.z, eps)
                    except ScoError as exc:
                        log.debug("sco restart skipped: %s", exc)

            cutoff = inc.value - eps
            if any(n.lower_bound >= cutoff for n in heap):
                keep = []
                for n in heap:
                    if n.lower_bound >= cutoff:
                        discarded = min(discarded, n.lower_bound)
                    else:
                        keep.append(n)
                heap = keep
                heapq.heapify(heap)

            if progress is not None:
                progress({"iteration": iters, "nodes": nodes, "open": len(heap),
                          "upper": inc.value, "lower": heap[0].lower_bound if heap else inc.value,
                          "elapsed": time.perf_counter() - start})
    finally:
        if pool is not None:
            pool.shutdown()

    open_min = heap[0].lower_bound if heap else math.inf
    lower = min(stop_lb, open_min, discarded, inc.value)
    y = inc.y
    mdl = R.model
    return SolveReport(
        y_star=y,
        z_star=inc.z,
        equity=equity(mdl, y),
        objective=inc.value,
        leverage_gap=leverage_gap(mdl, y),
        lower_bound=lower,
        global_bound_gap=inc.value - lower,
        nodes_processed=nodes,
        iterations=iters,
        sco_restarts=restarts,
        sco_iterations=sco_iters,
        elapsed=time.perf_counter() - start,
        status=status,
        eps=eps,
        node_log=log_nodes,
    )


def box_reform(model: MarketModel) -> DcReform:
    """Reformulation of the leverage-free problem: only ``B-`` is diagonalized."""
    split = spectral_split(model)
    split = replace(split, a_minus=np.zeros_like(split.a_minus), q=0)
    return simultaneous_diagonalize(split)


def rho_max(model: MarketModel, eps: float = 1e-5, time_limit: float = 3600.0,
            *, return_report: bool = False):
    """Leverage ratio reached by the equity maximizer over the trading box."""
    R = box_reform(model)
    rep = scobb(model, eps, time_limit, reform=R, leverage=False,
                z0=np.zeros(model.m))
    y = rep.y_star
    if objective(model, y) >= 0.0:
        # not trading is (weakly) optimal
        y = np.zeros(model.m)
    e1 = equity(model, y)
    if e1 <= 0:
        raise DegeneratePortfolioError(f"equity at the maximizer is {e1:.6g}")
    val = liability(model, y) / e1
    return (val, rep) if return_report else val


def certify(report: SolveReport, model: MarketModel, eps: float) -> bool:
    y = np.asarray(report.y_star, dtype=float)
    x0 = model.x0
    if np.any(y > 0) or np.any(y < -x0):
        return False
    g = leverage_gap(model, y)
    gap = objective(model, y) - report.lower_bound
    return bool(g <= eps and gap <= eps)


def report_to_dict(report: SolveReport) -> dict[str, Any]:
    return {
        "algo": "scobb",
        "status": report.status,
        "y": report.y_star.tolist(),
        "equity": report.equity,
        "objective": report.objective,
        "leverage_gap": report.leverage_gap,
        "lower_bound": report.lower_bound,
        "equity_bound": report.equity_bound,
        "global_bound_gap": report.global_bound_gap,
        "eps": report.eps,
        "nodes": report.nodes_processed,
        "iterations": report.iterations,
        "sco_restarts": report.sco_restarts,
        "sco_iterations": report.sco_iterations,
        "elapsed_s": report.elapsed,
    }
