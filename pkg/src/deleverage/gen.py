"""Random instances with a prescribed number of negative eigenvalues.

Base matrices ``C`` and ``F`` have uniform entries; shifting their symmetric
parts by the midpoint of an eigenvalue gap fixes how many eigenvalues end up
negative.  Then ``Lh + Gh/2 = sym(C) - vI`` has ``q`` negative eigenvalues and
``Lh - Gh/2 = sym(F) - wI`` has ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MarketModel, validate
from .reform import TOL_ZERO

__all__ = ["GenSpec", "GenerationError", "generate", "generate_many", "BIT_GENERATOR", "MAX_ATTEMPTS"]

BIT_GENERATOR = "PCG64"
MAX_ATTEMPTS = 100
# eigenvalues closer than this (relative) to zero after the shift are rejected
SEPARATION = 1e3 * TOL_ZERO


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenSpec:
    m: int
    s: int
    q: int
    entry_range: tuple[float, float] = (1e-6, 1e-5)
    price_range: tuple[float, float] = (10.0, 100.0)
    holding_range: tuple[float, float] = (500.0, 1000.0)
    l0_over_e0: float = 25.0
    rho1: float = 18.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        for name, k in (("s", self.s), ("q", self.q)):
            if not 0 <= k < self.m:
                raise ValueError(f"{name} must satisfy 0 <= {name} < m")
        for name in ("entry_range", "price_range", "holding_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be positive and ordered")
        if self.l0_over_e0 <= 0 or self.rho1 <= 0:
            raise ValueError("l0_over_e0 and rho1 must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _gap_shift(sym: np.ndarray, k: int) -> float | None:
    """Shift leaving exactly ``k`` negative eigenvalues, or None if too tight."""
    ev = np.linalg.eigvalsh(sym)
    if k == 0:
        # mirror the first gap below the spectrum
        v = ev[0] - 0.5 * (ev[1] - ev[0]) if ev.size > 1 else ev[0] - abs(ev[0])
    else:
        v = 0.5 * (ev[k - 1] + ev[k])
    shifted = ev - v
    if np.min(np.abs(shifted)) <= SEPARATION * np.max(np.abs(shifted)):
        return None
    return float(v)


def _rng(seed: int, index: int, attempt: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(index, attempt))
    return np.random.Generator(np.random.PCG64(ss))


def _draw(spec: GenSpec, rng: np.random.Generator) -> MarketModel | None:
    m = spec.m
    lo, hi = spec.entry_range
    C = rng.uniform(lo, hi, size=(m, m))
    F = rng.uniform(lo, hi, size=(m, m))
    p0 = rng.uniform(*spec.price_range, size=m)
    x0 = rng.uniform(*spec.holding_range, size=m)
    v = _gap_shift(0.5 * (C + C.T), spec.q)
    w = _gap_shift(0.5 * (F + F.T), spec.s)
    if v is None or w is None:
        return None
    eye = np.eye(m)
    lam = 0.5 * (C - v * eye + F - w * eye)
    gam = C - v * eye - F + w * eye
    value = float(p0 @ x0)
    e0 = value / (1.0 + spec.l0_over_e0)
    return MarketModel(lam, gam, p0, x0, value - e0, spec.rho1)


def generate(spec: GenSpec, index: int = 0) -> MarketModel:
    """Instance number ``index`` of the stream defined by ``spec.seed``.

    Attempt ``a`` draws from ``SeedSequence(seed, spawn_key=(index, a))``; a
    draw is rejected when an eigenvalue lands too close to zero or the model
    fails validation.
    """
    for attempt in range(MAX_ATTEMPTS):
        model = _draw(spec, _rng(spec.seed, index, attempt))
        if model is not None and validate(model).ok:
            return model
    raise GenerationError(f"no valid instance after {MAX_ATTEMPTS} attempts "
                          f"(m={spec.m}, s={spec.s}, q={spec.q}, seed={spec.seed}, index={index})")


def generate_many(spec: GenSpec, count: int) -> list[MarketModel]:
    return [generate(spec, k) for k in range(count)]
