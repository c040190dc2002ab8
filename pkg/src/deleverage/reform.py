"""D.C. reformulation: spectral splitting plus simultaneous diagonalization.

Writing ``Lh - Gh/2 = B+ - B-`` and ``Lh + Gh/2 = A+ - A-`` with PSD parts,
a congruence ``y = D z`` makes ``D'B-D`` and ``D'A-D`` diagonal, so every
nonconvex term becomes a separable concave sum ``-sum(w_i z_i^2)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Any

import numpy as np

from .model import MarketModel

__all__ = [
    "ReformError",
    "SpectralSplit",
    "DcReform",
    "spectral_split",
    "simultaneous_diagonalize",
    "reformulate",
    "f_hat",
    "g_hat",
    "to_strategy",
    "to_z",
    "reform_to_dict",
    "TOL_ZERO",
]

TOL_ZERO = 1e-10
DELTA_SNAP = 1e-9
COND_WARN = 1e10


class ReformError(RuntimeError):
    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class SpectralSplit:
    model: MarketModel
    b_plus: np.ndarray
    b_minus: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray
    s: int
    q: int


@dataclass(frozen=True, eq=False)
class DcReform:
    model: MarketModel
    d: np.ndarray
    d_inv: np.ndarray
    delta: np.ndarray
    theta: np.ndarray
    s: int
    q: int
    r: int
    h_plus: np.ndarray
    g_plus: np.ndarray
    lin_f: np.ndarray
    lin_g: np.ndarray
    const_g: float
    z_lo: np.ndarray
    z_hi: np.ndarray
    cond_d: float

    @property
    def m(self) -> int:
        return self.model.m

    @property
    def rho1(self) -> float:
        return self.model.rho1

    @property
    def convex(self) -> bool:
        return self.r == 0

    @property
    def delta_r(self) -> np.ndarray:
        """``delta`` padded with zeros to length ``r``."""
        out = np.zeros(self.r)
        out[: self.s] = self.delta
        return out


def _split(mat: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray, int]:
    try:
        w, v = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise ReformError(f"eigendecomposition failed: {exc}") from exc
    cut = tol * max(np.abs(w).max(initial=0.0), np.finfo(float).tiny)
    neg = w < -cut
    plus = (v * np.where(neg, 0.0, w)) @ v.T
    minus = (v * np.where(neg, -w, 0.0)) @ v.T
    return _symm(plus), _symm(minus), int(neg.sum())


def _symm(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def spectral_split(model: MarketModel, tol_zero: float = TOL_ZERO) -> SpectralSplit:
    b_plus, b_minus, s = _split(model.obj_matrix, tol_zero)
    a_plus, a_minus, q = _split(model.liab_matrix, tol_zero)
    return SpectralSplit(model, b_plus, b_minus, a_plus, a_minus, s, q)


def _z_bounds(d_inv: np.ndarray, x0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z_lo = -(np.where(d_inv > 0, d_inv, 0.0) @ x0)
    z_hi = -(np.where(d_inv < 0, d_inv, 0.0) @ x0)
    return z_lo, z_hi


def simultaneous_diagonalize(split: SpectralSplit, tol_zero: float = TOL_ZERO) -> DcReform:
    model = split.model
    m, s, q = model.m, split.s, split.q
    ms = split.b_minus + split.a_minus

    if s == 0 and q == 0:
        d = np.eye(m)
        d_inv = np.eye(m)
        r = 0
        delta = np.zeros(0)
        theta = np.zeros(0)
    else:
        kappa, u = np.linalg.eigh(ms)
        order = np.argsort(kappa)[::-1]
        kappa, u = kappa[order], u[:, order]
        cut = tol_zero * max(kappa[0], np.finfo(float).tiny)
        r = int((kappa > cut).sum())
        if not (max(s, q) <= r <= s + q):
            raise ReformError(
                f"rank of B- + A- is {r}, inconsistent with s={s}, q={q}",
                eigenvalues=kappa.tolist(), threshold=cut,
            )
        root = np.ones(m)
        root[:r] = np.sqrt(kappa[:r])
        qmat = u / root  # U diag(kappa^-1/2, 1)
        g = qmat.T @ split.b_minus @ qmat
        g11 = _symm(g[:r, :r])
        dvals, dvec = np.linalg.eigh(g11)
        order = np.argsort(dvals)[::-1]
        dvals, dvec = dvals[order], dvec[:, order]
        s_sd = int((dvals > tol_zero).sum())
        if s_sd != s:
            raise ReformError(
                f"diagonalized B- block has {s_sd} positive weights, expected s={s}",
                weights=dvals.tolist(), cond_ms=float(kappa[0] / kappa[r - 1]),
            )
        dvals = np.clip(dvals, 0.0, 1.0)
        dvals[s:] = 0.0
        # rounding in g11 grows with the conditioning of B- + A-
        snap = max(DELTA_SNAP, 100.0 * float(kappa[0] / kappa[r - 1]) * np.finfo(float).eps)
        dvals[np.abs(dvals - 1.0) <= snap] = 1.0
        delta = dvals[:s].copy()
        theta = 1.0 - dvals
        q_sd = int((theta > snap).sum())
        if q_sd != q:
            raise ReformError(
                f"diagonalized A- block has {q_sd} positive weights, expected q={q}",
                weights=theta.tolist(), cond_ms=float(kappa[0] / kappa[r - 1]),
            )
        rot = np.eye(m)
        rot[:r, :r] = dvec
        d = qmat @ rot
        d_inv = rot.T @ (root[:, None] * u.T)

    cond_d = float(np.linalg.cond(d))
    if cond_d > COND_WARN:
        warnings.warn(f"congruence matrix is ill-conditioned (cond = {cond_d:.3g})",
                      RuntimeWarning, stacklevel=2)

    rho = model.rho1
    h_plus = _symm(d.T @ split.b_plus @ d)
    g_plus = _symm(d.T @ (split.a_plus + rho * split.b_plus) @ d)
    lin_f = d.T @ model.obj_linear
    lin_g = d.T @ model.lev_linear
    z_lo, z_hi = _z_bounds(d_inv, model.x0)
    return DcReform(model, d, d_inv, delta, theta, s, q, r, h_plus, g_plus,
                    lin_f, lin_g, model.lev_const, z_lo, z_hi, cond_d)


def reformulate(model: MarketModel, tol_zero: float = TOL_ZERO) -> DcReform:
    return simultaneous_diagonalize(spectral_split(model, tol_zero), tol_zero)


def f_hat(reform: DcReform, z) -> float:
    z = np.asarray(z, dtype=float)
    zs = z[: reform.s]
    return float(z @ reform.h_plus @ z + reform.lin_f @ z - reform.delta @ (zs * zs))


def psi(reform: DcReform, z) -> float:
    z = np.asarray(z, dtype=float)
    return float(z @ reform.g_plus @ z + reform.lin_g @ z + reform.const_g)


def g_hat(reform: DcReform, z) -> float:
    z = np.asarray(z, dtype=float)
    zr = z[: reform.r]
    zs = z[: reform.s]
    return psi(reform, z) - float(reform.theta @ (zr * zr)) - reform.rho1 * float(reform.delta @ (zs * zs))


def to_strategy(reform: DcReform, z) -> np.ndarray:
    return reform.d @ np.asarray(z, dtype=float)


def to_z(reform: DcReform, y) -> np.ndarray:
    return reform.d_inv @ np.asarray(y, dtype=float)


def reform_to_dict(reform: DcReform) -> dict[str, Any]:
    return {
        "m": reform.m,
        "s": reform.s,
        "q": reform.q,
        "r": reform.r,
        "convex": reform.convex,
        "cond_d": reform.cond_d,
        "d": reform.d.tolist(),
        "delta": reform.delta.tolist(),
        "theta": reform.theta.tolist(),
        "z_lo": reform.z_lo.tolist(),
        "z_hi": reform.z_hi.tolist(),
    }
