"""Successive convex optimization for the D.C. form.

Each step replaces the concave terms by their tangent at the current point
and solves the resulting convex problem; the sequence of objective values is
non-increasing and every iterate stays feasible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .reform import DcReform, f_hat, g_hat
from .subsolver import SubSolution, SubproblemSolver, build_linearized, solve

__all__ = ["ScoResult", "ScoError", "sco", "default_start", "kkt_residual"]

log = logging.getLogger(__name__)

CONVERGED = "converged"
ITER_LIMIT = "iter-limit"


class ScoError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class ScoResult:
    z: np.ndarray
    xi: np.ndarray
    iterations: int
    f_hat_trace: list[float]
    status: str
    g_hat_trace: list[float] = field(default_factory=list)
    step_trace: list[float] = field(default_factory=list)
    last: SubSolution | None = None
    z_trace: list[np.ndarray] = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.f_hat_trace[-1]


def default_start(reform: DcReform) -> np.ndarray:
    """``D^-1(-x0)``: full liquidation, feasible whenever selling everything covers the debt."""
    return reform.d_inv @ (-reform.model.x0)


def sco(reform: DcReform, z0=None, eps: float = 1e-5, max_iter: int = 500, *,
        tol: float | None = None, feas_tol: float | None = None, leverage: bool = True,
        solver: SubproblemSolver | None = None) -> ScoResult:
    r = reform.r
    tol = eps / 10.0 if tol is None else tol
    feas_tol = eps / 10.0 if feas_tol is None else feas_tol
    z = default_start(reform) if z0 is None else np.asarray(z0, dtype=float).copy()
    if z.shape != (reform.m,):
        raise ValueError(f"z0 has shape {z.shape}, expected ({reform.m},)")

    x0 = reform.model.x0
    y = reform.d @ z
    box_tol = feas_tol * np.maximum(x0, 1.0)
    g0 = g_hat(reform, z) if leverage else -np.inf
    if g0 > feas_tol or np.any(y > box_tol) or np.any(y < -x0 - box_tol):
        raise ScoError(f"start point is infeasible (g = {g0:.3g})", 0)

    zs = [z.copy()]
    fs = [f_hat(reform, z)]
    gs = [g0]
    steps: list[float] = []
    last = None
    status = ITER_LIMIT
    k = 0
    for k in range(1, max_iter + 1):
        xi = np.clip(z[:r], reform.z_lo[:r], reform.z_hi[:r])
        prob = build_linearized(reform, xi, leverage=leverage, hint=z)
        sol = solve(prob, tol, solver)
        if sol.status == "infeasible":
            raise ScoError("linearized subproblem reported infeasible", k)
        if sol.status != "optimal":
            log.warning("sco iteration %d: subproblem ended with status %s", k, sol.status)
        z_new = sol.x
        step = float(np.linalg.norm(z_new[:r] - z[:r]))
        z, last = z_new, sol
        zs.append(z.copy())
        fs.append(f_hat(reform, z))
        gs.append(g_hat(reform, z) if leverage else -np.inf)
        steps.append(step)
        log.debug("sco it=%d f=%.12g g=%.3g step=%.3g", k, fs[-1], gs[-1], step)
        if step <= eps:
            status = CONVERGED
            break
    return ScoResult(z, z[:r].copy(), k, fs, status, gs, steps, last, zs)


def kkt_residual(reform: DcReform, result: ScoResult, leverage: bool = True) -> float:
    """Relative stationarity plus complementarity residual at the final SCO point.

    Multipliers come from the last linearized subproblem; at a fixed point of
    the iteration its gradients coincide with those of the D.C. problem.
    """
    sol = result.last
    if sol is None:
        raise ValueError("result carries no subproblem solution")
    z = result.z
    r, s, m = reform.r, reform.s, reform.m
    grad_f = 2.0 * (reform.h_plus @ z) + reform.lin_f
    grad_f[:s] -= 2.0 * reform.delta * z[:s]
    lagr = grad_f.copy()
    comp = 0.0
    if leverage and sol.duals_quad.size:
        mu = float(sol.duals_quad[0])
        grad_g = 2.0 * (reform.g_plus @ z) + reform.lin_g
        grad_g[:r] -= 2.0 * (reform.theta + reform.rho1 * reform.delta_r) * z[:r]
        lagr += mu * grad_g
        comp += abs(mu * g_hat(reform, z))
    lam = sol.duals_lin
    lagr += reform.d.T @ (lam[:m] - lam[m:])
    y = reform.d @ z
    comp += float(np.abs(lam[:m] * y).sum() + np.abs(lam[m:] * (-y - reform.model.x0)).sum())
    scale = 1.0 + float(np.linalg.norm(grad_f))
    return float(np.linalg.norm(lagr)) / scale + comp / (1.0 + abs(result.value))
