"""Convex QCQP subproblems and a primal-dual interior-point solver for them.

Problems have the form::

    minimize    x'P0x + q0'x + c0
    subject to  x'Pix + qi'x + ci <= 0      (Pi PSD)
                A x <= b

The solver works on a scaled copy (variables divided by ``x_scale``,
constraint rows normalized) and finds a strictly interior start with a
phase-I problem before following the central path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import nnls

from .reform import DcReform

__all__ = [
    "Quadratic",
    "ConvexSubproblem",
    "SubSolution",
    "SubproblemSolver",
    "BarrierSolver",
    "NotConvexError",
    "build_linearized",
    "build_relaxation",
    "build_box_relaxation",
    "relaxation_t",
    "solve",
]

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERS = "max-iters"


class NotConvexError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Quadratic:
    """``x'Px + q'x + c``; ``P`` may be ``None`` for an affine function."""

    q: np.ndarray
    c: float = 0.0
    P: np.ndarray | None = None

    def __call__(self, x: np.ndarray) -> float:
        v = float(self.q @ x) + self.c
        if self.P is not None:
            v += float(x @ self.P @ x)
        return v

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self.P is None:
            return self.q
        return 2.0 * (self.P @ x) + self.q


def _check_psd(P: np.ndarray, what: str) -> None:
    if not np.allclose(P, P.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(P).max())):
        raise NotConvexError(f"{what}: quadratic form is not symmetric")
    norm = np.abs(P).max()
    if norm == 0.0:
        return
    off = P - np.diag(np.diag(P))
    if not off.any():
        lo = np.diag(P).min()
    else:
        lo = np.linalg.eigvalsh(P)[0]
    if lo < -1e-9 * norm * P.shape[0]:
        raise NotConvexError(f"{what}: quadratic form has eigenvalue {lo:.3g}")


@dataclass(frozen=True, eq=False)
class ConvexSubproblem:
    objective: Quadratic
    quad_constraints: tuple[Quadratic, ...] = ()
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    x_hint: np.ndarray | None = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        n = self.n
        object.__setattr__(self, "quad_constraints", tuple(self.quad_constraints))
        if self.A is None:
            object.__setattr__(self, "A", np.zeros((0, n)))
            object.__setattr__(self, "b", np.zeros(0))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape != (b.size, n):
            raise ValueError(f"linear rows have shape {A.shape}, rhs {b.shape}, n = {n}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        for k, qf in enumerate((self.objective, *self.quad_constraints)):
            if qf.q.shape != (n,):
                raise ValueError("inconsistent variable count")
            if qf.P is not None:
                if qf.P.shape != (n, n):
                    raise ValueError("inconsistent quadratic form size")
                if self.validate:
                    _check_psd(qf.P, "objective" if k == 0 else f"constraint {k - 1}")

    @property
    def n(self) -> int:
        return self.objective.q.size

    @property
    def n_constraints(self) -> int:
        return len(self.quad_constraints) + self.b.size

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        quad = [qc(x) for qc in self.quad_constraints]
        return np.concatenate([quad, self.A @ x - self.b])

    def max_violation(self, x: np.ndarray) -> float:
        v = self.constraint_values(x)
        return float(max(v.max(initial=-np.inf), 0.0))


@dataclass(frozen=True, eq=False)
class SubSolution:
    x: np.ndarray
    value: float
    status: str
    kkt_residual: float
    gap: float
    duals_quad: np.ndarray
    duals_lin: np.ndarray
    iterations: int
    max_violation: float
    relaxed_by: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def lower_bound(self) -> float:
        return self.value - self.gap


class SubproblemSolver(Protocol):
    def solve(self, problem: ConvexSubproblem, tol: float) -> SubSolution: ...


# -- scaled internal form ----------------------------------------------------

class _Scaled:
    """Problem in scaled variables ``u = x / S`` with normalized rows."""

    def __init__(self, obj_P, obj_q, obj_c, quads, A, b):
        self.obj_P = obj_P
        self.obj_q = obj_q
        self.obj_c = obj_c
        self.quads = quads  # list of (P, q, c)
        self.A = A
        self.b = b
        self.nq = len(quads)
        self.n = obj_q.size
        self.shift = 0.0

    @classmethod
    def from_problem(cls, prob: ConvexSubproblem, scale: np.ndarray, hint: np.ndarray):
        S = scale

        def sc(qf: Quadratic):
            P = None if qf.P is None else qf.P * S[:, None] * S[None, :]
            return P, qf.q * S, qf.c

        oP, oq, oc = sc(prob.objective)
        quads, wq = [], []
        for qc in prob.quad_constraints:
            P, q, c = sc(qc)
            g = q if P is None else 2.0 * (P @ hint) + q
            w = max(np.linalg.norm(g), np.linalg.norm(q))
            if P is not None:
                w = max(w, 2.0 * np.sqrt(np.abs(P).max() * abs(c)))
            if w == 0.0:
                w = 1.0
            quads.append((None if P is None else P / w, q / w, c / w))
            wq.append(w)
        A = prob.A * S[None, :]
        wl = np.linalg.norm(A, axis=1)
        wl[wl == 0] = 1.0
        obj = cls(oP, oq, oc, quads, A / wl[:, None], prob.b / wl)
        obj.row_weights = np.concatenate([wq, wl])
        return obj

    @property
    def m(self) -> int:
        return self.nq + self.b.size

    def obj(self, u):
        v = float(self.obj_q @ u) + self.obj_c
        if self.obj_P is not None:
            v += float(u @ self.obj_P @ u)
        return v

    def obj_grad(self, u):
        if self.obj_P is None:
            return self.obj_q
        return 2.0 * (self.obj_P @ u) + self.obj_q

    def cons(self, u):
        out = np.empty(self.m)
        for k, (P, q, c) in enumerate(self.quads):
            out[k] = float(q @ u) + c + (0.0 if P is None else float(u @ P @ u))
        out[self.nq:] = self.A @ u - self.b
        return out - self.shift

    def jac(self, u):
        G = np.empty((self.m, self.n))
        for k, (P, q, _) in enumerate(self.quads):
            G[k] = q if P is None else 2.0 * (P @ u) + q
        G[self.nq:] = self.A
        return G

    def hess(self, lam_quad):
        H = np.zeros((self.n, self.n)) if self.obj_P is None else 2.0 * self.obj_P
        for lam, (P, _, _) in zip(lam_quad, self.quads):
            if P is not None and lam != 0.0:
                H = H + (2.0 * lam) * P
        return H

    def hess_barrier(self, d):
        """``sum_k d_k * 2 P_k`` over quadratic rows."""
        H = np.zeros((self.n, self.n))
        for dk, (P, _, _) in zip(d[: self.nq], self.quads):
            if P is not None:
                H += (2.0 * dk) * P
        return H

    def quad_curv(self, d):
        """``d'P_k d`` for each quadratic row (zero for affine rows)."""
        out = np.zeros(self.m)
        for k, (P, _, _) in enumerate(self.quads):
            if P is not None:
                out[k] = float(d @ P @ d)
        return out


def _phase_one(sp: _Scaled) -> _Scaled:
    """min s  s.t.  f_i(u) - s <= 0,  s >= -1   over variables (u, s)."""
    n = sp.n

    def pad(P):
        if P is None:
            return None
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = P
        return out

    quads = [(pad(P), np.append(q, -1.0), c) for P, q, c in sp.quads]
    A = np.zeros((sp.b.size + 1, n + 1))
    A[:-1, :n] = sp.A
    A[:-1, n] = -1.0
    A[-1, n] = -1.0
    b = np.append(sp.b, 1.0)
    obj_q = np.zeros(n + 1)
    obj_q[n] = 1.0
    return _Scaled(None, obj_q, 0.0, quads, A, b)


def _solve_newton(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / d[:, None] / d[None, :]
    rs = rhs / d
    for reg in (0.0, 1e-13, 1e-10, 1e-7):
        try:
            c = cho_factor(Hs + reg * np.eye(H.shape[0]) if reg else Hs, check_finite=False)
            return cho_solve(c, rs, check_finite=False) / d
        except (LinAlgError, ValueError):
            continue
    return np.linalg.lstsq(Hs, rs, rcond=None)[0] / d


def _max_step(f, gd, curv):
    """Largest ``a`` keeping ``f + a*gd + a^2*curv < 0`` for every row."""
    amax = np.inf
    lin = (curv <= 0) & (gd > 0)
    if lin.any():
        amax = min(amax, float(np.min(-f[lin] / gd[lin])))
    qd = curv > 0
    if qd.any():
        a, b, c = curv[qd], gd[qd], f[qd]
        disc = np.sqrt(b * b - 4 * a * c)
        # positive root of a t^2 + b t + c with c < 0, computed stably
        pos = b > 0
        root = np.empty_like(b)
        root[pos] = (-2 * c[pos]) / (b[pos] + disc[pos])
        root[~pos] = (-b[~pos] + disc[~pos]) / (2 * a[~pos])
        amax = min(amax, float(root.min()))
    return amax


@dataclass
class _PDResult:
    u: np.ndarray
    lam: np.ndarray
    gap: float
    res_dual: float
    iterations: int
    converged: bool
    stopped: bool


def _primal_dual(sp: _Scaled, u: np.ndarray, gap_tol: float, res_tol: float,
                 max_iter: int, mu: float = 10.0,
                 stop: Callable[[np.ndarray, float, float], bool] | None = None,
                 verbose: bool = False, stall_limit: int = 25) -> _PDResult:
    m = sp.m
    f = sp.cons(u)
    G = sp.jac(u)
    g0 = sp.obj_grad(u)
    # initial duals: lam_i = 1 / (-t f_i) with t fitted to the objective gradient
    v = G.T @ (1.0 / -f)
    vv = float(v @ v)
    inv_t = -float(g0 @ v) / vv if vv > 0 else 1.0
    if not np.isfinite(inv_t) or inv_t <= 0:
        inv_t = (np.linalg.norm(g0) / np.sqrt(vv)) if vv > 0 else 1.0
    inv_t = max(inv_t, 1e-12)
    lam = inv_t / -f

    it = 0
    res_dual = np.inf
    gap = float(-f @ lam)
    alpha, beta = 0.01, 0.5
    last_step = 1.0
    short = 0
    for it in range(1, max_iter + 1):
        gap = float(-f @ lam)
        # fall back to a pure centering step after a short step
        t = (mu if last_step > 0.2 else 1.0) * m / gap
        r_dual = g0 + G.T @ lam
        res_dual = float(np.linalg.norm(r_dual))
        if verbose:
            log.debug("pd it=%d obj=%.10g gap=%.3g res=%.3g", it, sp.obj(u), gap, res_dual)
        if gap <= gap_tol and res_dual <= res_tol:
            return _PDResult(u, lam, gap, res_dual, it - 1, True, False)
        if stop is not None and stop(u, gap, res_dual):
            return _PDResult(u, lam, gap, res_dual, it - 1, False, True)

        w = lam / -f
        H = sp.hess(lam[: sp.nq]) + G.T @ (w[:, None] * G)
        du = _solve_newton(H, -(g0 + G.T @ (1.0 / (t * -f))))
        gd = G @ du
        r_cent = -lam * f - 1.0 / t
        dlam = (r_cent - lam * gd) / f

        neg = dlam < 0
        step = min(1.0, float(np.min(-lam[neg] / dlam[neg]))) if neg.any() else 1.0
        step = 0.99 * min(step, _max_step(f, gd, sp.quad_curv(du)))
        rnorm = np.sqrt(res_dual ** 2 + float(r_cent @ r_cent))
        for _ in range(60):
            u_new = u + step * du
            lam_new = lam + step * dlam
            f_new = sp.cons(u_new)
            if np.all(f_new < 0):
                G_new = sp.jac(u_new)
                g0_new = sp.obj_grad(u_new)
                rd = g0_new + G_new.T @ lam_new
                rc = -lam_new * f_new - 1.0 / t
                if np.sqrt(float(rd @ rd) + float(rc @ rc)) <= (1 - alpha * step) * rnorm:
                    break
            step *= beta
        else:
            # no acceptable step; keep the best point found so far
            return _PDResult(u, lam, gap, res_dual, it, False, False)
        u, lam, f, G, g0 = u_new, lam_new, f_new, G_new, g0_new
        last_step = step
        short = short + 1 if step < 0.1 else 0
        if short >= stall_limit:
            return _PDResult(u, lam, float(-f @ lam), float(np.linalg.norm(g0 + G.T @ lam)), it, False, False)
    gap = float(-f @ lam)
    res_dual = float(np.linalg.norm(g0 + G.T @ lam))
    ok = gap <= gap_tol and res_dual <= res_tol
    return _PDResult(u, lam, gap, res_dual, max_iter, ok, False)


def _barrier(sp: _Scaled, u: np.ndarray, gap_tol: float, res_tol: float,
             max_iter: int, mu: float = 10.0,
             stop: Callable[[np.ndarray, float, float], bool] | None = None,
             verbose: bool = False) -> _PDResult:
    """Log-barrier path following with damped Newton centering."""
    m = sp.m
    alpha, beta = 0.01, 0.5

    def phi(t, v, fv):
        return t * sp.obj(v) - float(np.sum(np.log(-fv)))

    f = sp.cons(u)
    G = sp.jac(u)
    g0 = sp.obj_grad(u)
    gb = G.T @ (1.0 / -f)
    gg = float(g0 @ g0)
    t = -float(g0 @ gb) / gg if gg > 0 else 1.0
    if not np.isfinite(t) or t <= 0:
        t = m / (1.0 + abs(sp.obj(u)))
    t = max(t, 1e-10)

    it = 0
    while True:
        final = m / t <= gap_tol
        ntol = 1e-8 if final else 1e-5
        while True:
            d = 1.0 / -f
            grad = t * g0 + G.T @ d
            if it >= max_iter:
                return _PDResult(u, d / t, m / t, float(np.linalg.norm(grad)) / t, it, False, False)
            H = sp.hess_barrier(d) + G.T @ ((d * d)[:, None] * G)
            if sp.obj_P is not None:
                H += (2.0 * t) * sp.obj_P
            du = -_solve_newton(H, grad)
            dec2 = -float(grad @ du)
            if dec2 <= 2.0 * ntol:
                break
            gd = G @ du
            step = min(1.0, 0.99 * _max_step(f, gd, sp.quad_curv(du)))
            base = phi(t, u, f)
            while step > 1e-4:
                u_new = u + step * du
                f_new = sp.cons(u_new)
                phi_new = phi(t, u_new, f_new) if np.all(f_new < 0) else np.inf
                if phi_new <= base - alpha * step * dec2:
                    break
                step *= beta
            else:
                break
            u, f = u_new, f_new
            if final and base - phi_new <= 1e-13 * abs(base):
                # decrease is at rounding level: the barrier floor is reached
                G = sp.jac(u)
                g0 = sp.obj_grad(u)
                it += 1
                break
            G = sp.jac(u)
            g0 = sp.obj_grad(u)
            it += 1
            if verbose:
                log.debug("barrier it=%d t=%.3g obj=%.12g dec=%.3g step=%.3g", it, t, sp.obj(u), dec2, step)
        lam = 1.0 / (-t * f)
        gap = m / t
        res = float(np.linalg.norm(g0 + G.T @ lam))
        if final:
            # centered, or at the floating-point floor of the barrier function
            if res > res_tol:
                lam, res = _polish_duals(f, G, g0, lam, res)
            gap = float(-f @ lam)
            return _PDResult(u, lam, gap, res, it, res <= 1e3 * res_tol, False)
        if stop is not None and stop(u, gap, res):
            return _PDResult(u, lam, gap, res, it, False, True)
        t *= mu


def _polish_duals(f, G, g0, lam, res):
    """Nonnegative least-squares multipliers on the nearly active rows."""
    act = -f <= 1e-6 * max(1.0, float(np.max(-f)))
    if not act.any():
        return lam, res
    sol, r = nnls(G[act].T, -g0)
    if r >= res:
        return lam, res
    out = np.zeros_like(lam)
    out[act] = sol
    return out, float(r)


@dataclass
class BarrierSolver:
    """Default subproblem solver: phase I followed by primal-dual path following."""

    max_iter: int = 200
    mu: float = 10.0
    res_rtol: float = 1e-9
    method: str = "primal-dual"
    verbose: bool = False

    def solve(self, problem: ConvexSubproblem, tol: float = 1e-6) -> SubSolution:
        n = problem.n
        opt_tol = tol / 10.0
        feas_tol = tol / 10.0
        scale = problem.x_scale
        if scale is None:
            scale = np.ones(n)
        scale = np.where(np.asarray(scale, dtype=float) > 0, scale, 1.0)
        hint = np.zeros(n) if problem.x_hint is None else np.asarray(problem.x_hint, dtype=float)
        u0 = hint / scale
        sp = _Scaled.from_problem(problem, scale, u0)

        if sp.m == 0:
            return self._unconstrained(problem, sp, scale)

        f0 = sp.cons(u0)
        iters = 0
        shift = 0.0
        interior = 1e-3
        if f0.max() > -interior:
            ph = _phase_one(sp)
            s0 = max(float(f0.max()) + 1.0, 0.0)
            v0 = np.append(u0, s0)

            def stop(v, gap, res):
                # s - gap is a valid lower bound only near dual feasibility
                return v[-1] <= -interior or (v[-1] - gap > feas_tol and res <= 1e-6)

            res = self._path(ph, v0, gap_tol=1e-3 * feas_tol, res_tol=1e-6,
                               max_iter=self.max_iter, mu=self.mu, stop=stop)
            iters += res.iterations
            s_star = float(res.u[-1])
            if s_star - res.gap > feas_tol or (not res.converged and not res.stopped and s_star > feas_tol):
                u = res.u[:-1]
                return self._finish(problem, sp, scale, u, np.zeros(sp.m), INFEASIBLE,
                                    np.inf, np.inf, iters, 0.0)
            u0 = res.u[:-1]
            if s_star > -0.1 * feas_tol:
                shift = max(s_star, 0.0) + 0.1 * feas_tol
                if shift > feas_tol:
                    return self._finish(problem, sp, scale, u0, np.zeros(sp.m), INFEASIBLE,
                                        np.inf, np.inf, iters, 0.0)
                sp.shift = shift

        g0 = sp.obj_grad(u0)
        res_tol = self.res_rtol * (1.0 + float(np.linalg.norm(g0)))
        res = self._path(sp, u0, gap_tol=opt_tol, res_tol=res_tol,
                           max_iter=self.max_iter, mu=self.mu, verbose=self.verbose)
        iters += res.iterations
        status = OPTIMAL if res.converged else MAX_ITERS
        return self._finish(problem, sp, scale, res.u, res.lam, status, res.gap,
                            res.res_dual / (1.0 + float(np.linalg.norm(g0))), iters, shift)

    def _path(self, sp, u, **kw):
        if self.method == "barrier":
            return _barrier(sp, u, **kw)
        res = _primal_dual(sp, u, **kw)
        if res.converged or res.stopped:
            return res
        # stalled or out of iterations: restart with pure barrier centering
        fb = _barrier(sp, u, **kw)
        fb.iterations += res.iterations
        if fb.converged:
            return fb

        def badness(r):
            return max(r.gap / kw["gap_tol"], r.res_dual / kw["res_tol"])

        best = fb if badness(fb) <= badness(res) else res
        best.iterations = fb.iterations
        return best

    def _unconstrained(self, problem, sp, scale):
        if sp.obj_P is None:
            raise ValueError("unconstrained linear objective is unbounded")
        u = _solve_newton(2.0 * sp.obj_P, -sp.obj_q)
        res = float(np.linalg.norm(sp.obj_grad(u))) / (1.0 + float(np.linalg.norm(sp.obj_q)))
        return self._finish(problem, sp, scale, u, np.zeros(0), OPTIMAL, 0.0, res, 1, 0.0)

    def _finish(self, problem, sp, scale, u, lam, status, gap, res, iters, shift):
        x = u * scale
        w = sp.row_weights if sp.m else np.zeros(0)
        duals = lam / w if lam.size else lam
        nq = len(problem.quad_constraints)
        viol = problem.max_violation(x) if problem.n_constraints else 0.0
        return SubSolution(
            x=x,
            value=problem.objective(x),
            status=status,
            kkt_residual=float(max(gap, res)),
            gap=float(gap),
            duals_quad=duals[:nq],
            duals_lin=duals[nq:],
            iterations=iters,
            max_violation=viol,
            relaxed_by=shift,
        )


_DEFAULT = BarrierSolver()


def solve(problem: ConvexSubproblem, tol: float = 1e-6,
          solver: SubproblemSolver | None = None) -> SubSolution:
    return (solver or _DEFAULT).solve(problem, tol)


# -- builders ----------------------------------------------------------------

def _ybox_rows(reform: DcReform, n_extra: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Rows for ``-x0 <= D z <= 0`` padded with ``n_extra`` zero columns."""
    m = reform.m
    D = reform.d
    A = np.zeros((2 * m, m + n_extra))
    A[:m, :m] = D
    A[m:, :m] = -D
    b = np.concatenate([np.zeros(m), reform.model.x0])
    return A, b


def _z_scale(reform: DcReform) -> np.ndarray:
    w = reform.z_hi - reform.z_lo
    return np.where(w > 0, w, 1.0)


def _default_z(reform: DcReform) -> np.ndarray:
    return reform.d_inv @ (-0.5 * reform.model.x0)


def build_linearized(reform: DcReform, xi, *, leverage: bool = True,
                     hint=None) -> ConvexSubproblem:
    """Convex majorant of the problem around ``xi`` (first ``r`` coordinates)."""
    r, s = reform.r, reform.s
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != r:
        raise ValueError(f"xi has length {xi.size}, expected r = {r}")
    span = np.maximum(reform.z_hi[:r] - reform.z_lo[:r], 1.0)
    if np.any(xi < reform.z_lo[:r] - 1e-9 * span) or np.any(xi > reform.z_hi[:r] + 1e-9 * span):
        raise ValueError("xi lies outside the z-box")
    delta = reform.delta
    xs = xi[:s]

    q_obj = reform.lin_f.copy()
    q_obj[:s] -= 2.0 * delta * xs
    obj = Quadratic(q_obj, float(delta @ (xs * xs)), reform.h_plus)

    cons = []
    if leverage:
        w = reform.theta + reform.rho1 * reform.delta_r
        q_con = reform.lin_g.copy()
        q_con[:r] -= 2.0 * w * xi
        cons.append(Quadratic(q_con, reform.const_g + float(w @ (xi * xi)), reform.g_plus))

    A, b = _ybox_rows(reform)
    if hint is None:
        hint = _default_z(reform)
    return ConvexSubproblem(obj, tuple(cons), A, b, x_scale=_z_scale(reform),
                            x_hint=np.asarray(hint, dtype=float), validate=False)


def build_relaxation(reform: DcReform, box_l, box_u, *, leverage: bool = True) -> ConvexSubproblem:
    """Envelope relaxation over ``box_l <= z[:r] <= box_u``.

    Variables are ``(z, w)`` with ``t = 2 c z - c^2 + w`` on the branching
    coordinates, where ``c`` is the box center; ``(z - c)^2 <= w <= h^2``
    (``h`` the half-width) is the parabola/secant lens in a form whose
    conditioning does not degrade as boxes shrink.  Use
    :func:`relaxation_t` to recover ``t``.
    """
    r, s, m = reform.r, reform.s, reform.m
    lo = np.asarray(box_l, dtype=float).reshape(-1)
    hi = np.asarray(box_u, dtype=float).reshape(-1)
    if lo.size != r or hi.size != r:
        raise ValueError(f"box must have length r = {r}")
    if np.any(lo > hi):
        raise ValueError("empty box")
    n = m + r
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)

    def pad(P):
        out = np.zeros((n, n))
        out[:m, :m] = P
        return out

    delta = reform.delta
    q_obj = np.zeros(n)
    q_obj[:m] = reform.lin_f
    q_obj[:s] -= 2.0 * delta * c[:s]
    q_obj[m:m + s] = -delta
    obj = Quadratic(q_obj, float(delta @ (c[:s] ** 2)), pad(reform.h_plus))

    cons = []
    if leverage:
        wt = reform.theta + reform.rho1 * reform.delta_r
        q_con = np.zeros(n)
        q_con[:m] = reform.lin_g
        q_con[:r] -= 2.0 * wt * c
        q_con[m:] = -wt
        cons.append(Quadratic(q_con, reform.const_g + float(wt @ (c * c)), pad(reform.g_plus)))
    for i in range(r):
        P = np.zeros((n, n))
        P[i, i] = 1.0
        q = np.zeros(n)
        q[i] = -2.0 * c[i]
        q[m + i] = -1.0
        cons.append(Quadratic(q, float(c[i] ** 2), P))

    A_y, b_y = _ybox_rows(reform, r)
    A_sec = np.zeros((r, n))
    A_sec[:, m:] = np.eye(r)
    b_sec = h * h
    A_box = np.zeros((2 * r, n))
    A_box[:r, :r] = np.eye(r)
    A_box[r:, :r] = -np.eye(r)
    b_box = np.concatenate([hi, -lo])
    A = np.vstack([A_y, A_sec, A_box])
    b = np.concatenate([b_y, b_sec, b_box])

    z0 = _default_z(reform)
    z0[:r] = c
    zs = _z_scale(reform)
    hs = np.maximum(h, 1e-6 * zs[:r])
    zs[:r] = hs
    return ConvexSubproblem(obj, tuple(cons), A, b, x_scale=np.concatenate([zs, hs * hs]),
                            x_hint=np.concatenate([z0, 0.5 * h * h]), validate=False)


def relaxation_t(box_l, box_u, z, w) -> np.ndarray:
    """Envelope variables ``t`` from the ``(z, w)`` solution of a relaxation."""
    lo = np.asarray(box_l, dtype=float)
    hi = np.asarray(box_u, dtype=float)
    c = 0.5 * (lo + hi)
    zr = np.asarray(z, dtype=float)[: lo.size]
    return 2.0 * c * zr - c * c + np.asarray(w, dtype=float)


def build_box_relaxation(reform: DcReform, box_l, box_u) -> ConvexSubproblem:
    return build_relaxation(reform, box_l, box_u, leverage=False)
