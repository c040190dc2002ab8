"""Market data and closed-form financial quantities of the deleveraging problem.

A strategy ``y`` is the vector of cumulative signed trades (``y <= 0`` sells).
Prices move as ``p1+ = p0 + Gamma y`` (permanent impact) and the execution
price picks up an extra ``Lambda y`` (temporary impact).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "MarketModel",
    "Check",
    "ValidationOutcome",
    "PriorityConditions",
    "DiagnosticReport",
    "InstanceFormatError",
    "liability",
    "equity",
    "leverage_gap",
    "objective",
    "validate",
    "check_priority_conditions",
    "diagnose",
    "model_from_dict",
    "model_to_dict",
    "load_instance",
    "save_instance",
]

SCHEMA_VERSION = 1


class InstanceFormatError(ValueError):
    """Raised when an instance document cannot be turned into a model."""


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class MarketModel:
    temp_impact: np.ndarray
    perm_impact: np.ndarray
    p0: np.ndarray
    x0: np.ndarray
    l0: float
    rho1: float

    def __post_init__(self):
        lam = np.array(self.temp_impact, dtype=float)
        gam = np.array(self.perm_impact, dtype=float)
        p0 = np.array(self.p0, dtype=float).reshape(-1)
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        m = p0.size
        if m < 1:
            raise ValueError("model needs at least one asset")
        if lam.shape != (m, m) or gam.shape != (m, m):
            raise ValueError(
                f"impact matrices must be {m}x{m}, got {lam.shape} and {gam.shape}"
            )
        if x0.shape != (m,):
            raise ValueError(f"x0 has length {x0.size}, expected {m}")
        for name, arr in (("lambda", lam), ("gamma", gam), ("p0", p0), ("x0", x0)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
        object.__setattr__(self, "temp_impact", lam)
        object.__setattr__(self, "perm_impact", gam)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "l0", float(self.l0))
        object.__setattr__(self, "rho1", float(self.rho1))

    @property
    def m(self) -> int:
        return self.p0.size

    @property
    def e0(self) -> float:
        return float(self.p0 @ self.x0 - self.l0)

    @cached_property
    def lam_sym(self) -> np.ndarray:
        return _sym(self.temp_impact)

    @cached_property
    def gam_sym(self) -> np.ndarray:
        return _sym(self.perm_impact)

    @cached_property
    def obj_matrix(self) -> np.ndarray:
        """Symmetric quadratic part of the objective (equity loss)."""
        return self.lam_sym - 0.5 * self.gam_sym

    @cached_property
    def liab_matrix(self) -> np.ndarray:
        return self.lam_sym + 0.5 * self.gam_sym

    @cached_property
    def obj_linear(self) -> np.ndarray:
        return -(self.perm_impact.T @ self.x0)

    @cached_property
    def lev_matrix(self) -> np.ndarray:
        return self.liab_matrix + self.rho1 * self.obj_matrix

    @cached_property
    def lev_linear(self) -> np.ndarray:
        return self.p0 - self.rho1 * (self.perm_impact @ self.x0)

    @property
    def lev_const(self) -> float:
        return self.l0 - self.rho1 * self.e0

    def with_rho(self, rho1: float) -> "MarketModel":
        return MarketModel(self.temp_impact, self.perm_impact, self.p0, self.x0, self.l0, rho1)


def _as_y(model: MarketModel, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (model.m,):
        raise ValueError(f"strategy has shape {y.shape}, expected ({model.m},)")
    return y


def liability(model: MarketModel, y) -> float:
    y = _as_y(model, y)
    quad = model.temp_impact + 0.5 * model.perm_impact
    return float(model.l0 + model.p0 @ y + y @ quad @ y)


def equity(model: MarketModel, y) -> float:
    y = _as_y(model, y)
    quad = model.temp_impact - 0.5 * model.perm_impact
    return float(-(y @ quad @ y) + model.x0 @ model.perm_impact @ y + model.e0)


def objective(model: MarketModel, y) -> float:
    """Equity loss ``f(y) = e0 - e1(y)``; minimizing it maximizes equity."""
    y = _as_y(model, y)
    return float(y @ model.obj_matrix @ y + model.obj_linear @ y)


def leverage_gap(model: MarketModel, y) -> float:
    """Leverage constraint value; ``<= 0`` means the strategy is feasible.

    For symmetric permanent impact this equals ``l1(y) - rho1 * e1(y)``.
    With asymmetric impact the two differ by ``rho1 * x0'(Gamma - Gamma')y``;
    this function keeps the linear coefficient ``p0 - rho1 * Gamma x0``.
    """
    y = _as_y(model, y)
    return float(y @ model.lev_matrix @ y + model.lev_linear @ y + model.lev_const)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationOutcome:
    checks: tuple[Check, ...]
    internal_error: bool = False

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks) and not self.internal_error

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = [f"[{'ok' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in self.checks]
        if self.internal_error:
            lines.append("[FAIL] internal-consistency: a solvent full liquidation must leave positive equity within the bound")
        return "\n".join(lines)


def validate(model: MarketModel) -> ValidationOutcome:
    checks = [
        Check("positive-prices", bool(np.all(model.p0 > 0)), f"min p0 = {model.p0.min():.6g}"),
        Check("positive-holdings", bool(np.all(model.x0 > 0)), f"min x0 = {model.x0.min():.6g}"),
        Check("positive-liability", model.l0 > 0, f"l0 = {model.l0:.6g}"),
        Check("positive-rho", model.rho1 > 0, f"rho1 = {model.rho1:.6g}"),
        Check("positive-equity", model.e0 > 0, f"e0 = {model.e0:.6g}"),
        Check("over-levered", model.lev_const > 0, f"l0 - rho1*e0 = {model.lev_const:.6g}"),
    ]
    l_full = liability(model, -model.x0)
    a1 = l_full < 0
    checks.append(Check("liquidation-covers-debt", a1, f"l1(-x0) = {l_full:.6g}"))
    internal = False
    if a1:
        e_full = equity(model, -model.x0)
        margin = model.rho1 * e_full - l_full
        internal = not (e_full > 0 and margin > 0)
        checks.append(Check("full-liquidation-feasible", margin > 0,
                            f"e1(-x0) = {e_full:.6g}, rho1*e1 - l1 = {margin:.6g}"))
    return ValidationOutcome(tuple(checks), internal)


@dataclass(frozen=True)
class PriorityConditions:
    i: int
    j: int
    applicable: bool
    flags: tuple[bool, bool, bool, bool] = (False, False, False, False)

    @property
    def all_hold(self) -> bool:
        return self.applicable and all(self.flags)


def check_priority_conditions(model: MarketModel, i: int, j: int, *,
                              weak: bool = False, rtol: float = 1e-12) -> PriorityConditions:
    """Sufficient conditions for asset ``i`` to be sold no less than asset ``j``.

    Indices are zero-based.  With ``weak=True`` the strict inequalities in the
    first condition are relaxed to non-strict ones.
    """
    m = model.m
    if i == j or not (0 <= i < m and 0 <= j < m):
        raise ValueError("need two distinct asset indices")
    same = (math.isclose(model.p0[i], model.p0[j], rel_tol=rtol, abs_tol=0.0)
            and math.isclose(model.x0[i], model.x0[j], rel_tol=rtol, abs_tol=0.0))
    if not same:
        return PriorityConditions(i, j, False)
    L, G, Gr = model.lam_sym, model.gam_sym, model.perm_impact
    lt = np.less_equal if weak else np.less
    others = [k for k in range(m) if k not in (i, j)]
    c1 = bool(L[i, i] <= L[i, j] and lt(L[i, j], L[j, j])
              and G[i, i] <= G[i, j] and lt(G[i, j], G[j, j]))
    c2 = all(L[i, k] <= L[j, k] and G[i, k] <= G[j, k] for k in others)
    c3 = bool(Gr[i, i] - Gr[i, j] <= Gr[j, j] - Gr[j, i])
    c4 = all(Gr[k, i] - Gr[i, k] <= Gr[k, j] - Gr[j, k] for k in others)
    return PriorityConditions(i, j, True, (c1, bool(c2), c3, bool(c4)))


@dataclass(frozen=True)
class DiagnosticReport:
    leverage_active: bool
    slack: float
    priority_pairs: tuple[PriorityConditions, ...] = field(default_factory=tuple)
    rho_max: float | None = None


def diagnose(model: MarketModel, y, *, active_tol: float = 1e-4,
             rho_max: float | None = None) -> DiagnosticReport:
    slack = leverage_gap(model, y)
    pairs = []
    for i in range(model.m):
        for j in range(model.m):
            if i != j:
                pc = check_priority_conditions(model, i, j)
                if pc.applicable:
                    pairs.append(pc)
    return DiagnosticReport(abs(slack) <= active_tol, slack, tuple(pairs), rho_max)


# -- instance JSON -----------------------------------------------------------

def _matrix(doc: dict, key: str, m: int) -> np.ndarray:
    try:
        a = np.asarray(doc[key], dtype=float)
    except KeyError:
        raise InstanceFormatError(f"missing field '{key}'") from None
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"field '{key}' is not numeric: {exc}") from None
    if a.ndim == 1 and a.size == m * m:
        a = a.reshape(m, m)
    if a.shape != (m, m):
        raise InstanceFormatError(f"field '{key}' must be {m}x{m} (nested or flat row-major)")
    return a


def _vector(doc: dict, key: str, m: int) -> np.ndarray:
    try:
        v = np.asarray(doc[key], dtype=float).reshape(-1)
    except KeyError:
        raise InstanceFormatError(f"missing field '{key}'") from None
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"field '{key}' is not numeric: {exc}") from None
    if v.size != m:
        raise InstanceFormatError(f"field '{key}' has length {v.size}, expected {m}")
    return v


def _scalar(doc: dict, key: str, default=None) -> float:
    if key not in doc:
        if default is None:
            raise InstanceFormatError(f"missing field '{key}'")
        return default
    try:
        return float(doc[key])
    except (TypeError, ValueError):
        raise InstanceFormatError(f"field '{key}' must be a number") from None


def model_from_dict(doc: dict[str, Any]) -> MarketModel:
    if not isinstance(doc, dict):
        raise InstanceFormatError("instance must be a JSON object")
    if "m" not in doc:
        raise InstanceFormatError("missing field 'm'")
    m = int(doc["m"])
    scale = _scalar(doc, "scale", 1.0)
    return MarketModel(
        temp_impact=scale * _matrix(doc, "lambda", m),
        perm_impact=scale * _matrix(doc, "gamma", m),
        p0=_vector(doc, "p0", m),
        x0=_vector(doc, "x0", m),
        l0=_scalar(doc, "l0"),
        rho1=_scalar(doc, "rho1"),
    )


def model_to_dict(model: MarketModel) -> dict[str, Any]:
    return {
        "version": SCHEMA_VERSION,
        "m": model.m,
        "lambda": model.temp_impact.tolist(),
        "gamma": model.perm_impact.tolist(),
        "p0": model.p0.tolist(),
        "x0": model.x0.tolist(),
        "l0": model.l0,
        "rho1": model.rho1,
        "scale": 1.0,
    }


def load_instance(path) -> MarketModel:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return model_from_dict(doc)


def save_instance(model: MarketModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")
