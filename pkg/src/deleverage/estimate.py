"""Impact-matrix estimation from bucketed trades by ordinary least squares.

For each asset ``i`` the price change since the start of the horizon is
regressed on an intercept, the horizon-cumulative signed volumes and the
signed volumes of the current bucket::

    p_it - p_i0 = c_i + sum_j gamma_ji (x_jt - x_j0) + sum_j lambda_ji y_jt

so regression ``i`` supplies column ``i`` of both matrices.  Cumulative
volume includes the current bucket (it is ``x_t - x_0`` at the bucket end).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy.linalg import lstsq

__all__ = [
    "Events",
    "TradePanel",
    "ImpactEstimate",
    "EstimationError",
    "bucketize",
    "fit",
    "read_events_csv",
    "write_events_csv",
    "write_panel_csv",
    "simulate_events",
    "write_estimate_json",
    "EVENT_HEADER",
]

EVENT_HEADER = ("timestamp_s", "asset", "signed_volume", "bid_price")


class EstimationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Events:
    """Trade/quote records; ``bid_price`` is the asset's bid right after the event."""

    timestamp: np.ndarray
    asset: np.ndarray
    signed_volume: np.ndarray
    bid_price: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.timestamp).size
        for name in ("asset", "signed_volume", "bid_price"):
            if np.asarray(getattr(self, name)).size != n:
                raise EstimationError(f"events: column '{name}' has the wrong length")

    def __len__(self) -> int:
        return int(np.asarray(self.timestamp).size)


@dataclass(frozen=True, eq=False)
class TradePanel:
    """One row per bucket, ``horizon_count * buckets_per_horizon`` rows in time order."""

    horizon_count: int
    buckets_per_horizon: int
    prices: np.ndarray  # bid at bucket end
    price_change: np.ndarray  # relative to horizon start
    cumulative: np.ndarray  # x_t - x_0 within the horizon, current bucket included
    volume: np.ndarray  # y_t

    def __post_init__(self):
        rows = self.horizon_count * self.buckets_per_horizon
        for name in ("prices", "price_change", "cumulative", "volume"):
            a = getattr(self, name)
            if a.ndim != 2 or a.shape[0] != rows:
                raise EstimationError(f"panel field '{name}' must have {rows} rows")
        run = np.cumsum(self.volume.reshape(self.horizon_count, self.buckets_per_horizon, -1), axis=1)
        cum = self.cumulative.reshape(run.shape)
        if not np.allclose(cum, run, rtol=1e-9, atol=1e-9 * max(1.0, float(np.abs(run).max(initial=0.0)))):
            raise EstimationError("cumulative volume is not the running sum of bucket volumes")

    @property
    def rows(self) -> int:
        return self.prices.shape[0]

    @property
    def m(self) -> int:
        return self.prices.shape[1]

    def design(self) -> np.ndarray:
        return np.hstack([np.ones((self.rows, 1)), self.cumulative, self.volume])


@dataclass(frozen=True, eq=False)
class ImpactEstimate:
    gamma_hat: np.ndarray
    lambda_hat: np.ndarray
    intercepts: np.ndarray
    r_squared: np.ndarray
    residual_variance: np.ndarray
    rows: int
    rank: int

    @property
    def m(self) -> int:
        return self.gamma_hat.shape[0]

    def to_dict(self, scale: float = 1.0) -> dict[str, Any]:
        """Matrix fields in instance form: stored values times ``scale`` are the impacts."""
        if not scale > 0:
            raise ValueError("scale must be positive")
        return {
            "m": self.m,
            "scale": scale,
            "lambda": (self.lambda_hat / scale).tolist(),
            "gamma": (self.gamma_hat / scale).tolist(),
            "intercepts": self.intercepts.tolist(),
            "r_squared": self.r_squared.tolist(),
            "residual_variance": self.residual_variance.tolist(),
            "rows": self.rows,
            "rank": self.rank,
        }


def bucketize(events: Events, bucket_seconds: float = 10.0, horizon_seconds: float = 1200.0, *,
              m: int | None = None, start: float | None = None,
              horizons: int | None = None) -> TradePanel:
    t = np.asarray(events.timestamp, dtype=float)
    asset = np.asarray(events.asset)
    vol = np.asarray(events.signed_volume, dtype=float)
    price = np.asarray(events.bid_price, dtype=float)
    if t.size == 0:
        raise EstimationError("no events")
    if np.any(np.diff(t) < 0):
        raise EstimationError("events are not sorted by timestamp")
    if not (bucket_seconds > 0 and horizon_seconds > 0):
        raise EstimationError("bucket and horizon lengths must be positive")
    per = horizon_seconds / bucket_seconds
    nb = int(round(per))
    if nb < 1 or abs(per - nb) > 1e-9 * per:
        raise EstimationError("horizon length must be a whole number of buckets")
    if not np.array_equal(asset, np.round(asset)) or asset.min() < 0:
        raise EstimationError("asset ids must be non-negative integers")
    asset = asset.astype(np.int64)
    m = int(asset.max()) + 1 if m is None else m
    if asset.max() >= m:
        raise EstimationError(f"asset id {asset.max()} out of range for m = {m}")
    t0 = t[0] if start is None else float(start)
    if t[0] < t0:
        raise EstimationError("events precede the start time")

    bucket = np.floor((t - t0) / bucket_seconds + 1e-12).astype(np.int64)
    H = int(bucket[-1] // nb) + 1 if horizons is None else int(horizons)
    n = H * nb
    keep = bucket < n
    bucket, asset, vol, price = bucket[keep], asset[keep], vol[keep], price[keep]

    volume = np.zeros((n, m))
    np.add.at(volume, (bucket, asset), vol)

    # last bid per (bucket, asset); later events overwrite earlier ones
    last = np.full((n, m), np.nan)
    last[bucket, asset] = price
    first_seen = np.full(m, np.nan)
    for j in range(m):
        pj = price[asset == j]
        if pj.size == 0:
            raise EstimationError(f"asset {j} has no price observations")
        first_seen[j] = pj[0]
    prices = _forward_fill(last, first_seen)

    start_px = np.vstack([first_seen, prices[nb - 1:n - 1:nb]])  # price at each horizon start
    base = np.repeat(start_px, nb, axis=0)
    cumulative = np.cumsum(volume.reshape(H, nb, m), axis=1).reshape(n, m)
    return TradePanel(H, nb, prices, prices - base, cumulative, volume)


def _forward_fill(a: np.ndarray, initial: np.ndarray) -> np.ndarray:
    out = a.copy()
    prev = initial.copy()
    for k in range(out.shape[0]):
        row = out[k]
        miss = np.isnan(row)
        row[miss] = prev[miss]
        prev = row
    return out


def fit(panel: TradePanel) -> ImpactEstimate:
    m, n = panel.m, panel.rows
    k = 2 * m + 1
    if n < k:
        raise EstimationError(f"panel has {n} rows, need at least {k} for {m} assets")
    X = panel.design()
    Y = panel.price_change
    coef, _, rank, _ = lstsq(X, Y, lapack_driver="gelsd")
    if rank < k:
        warnings.warn(f"design matrix has rank {rank} < {k}; using the minimum-norm solution",
                      RuntimeWarning, stacklevel=2)
    resid = Y - X @ coef
    ssr = np.sum(resid * resid, axis=0)
    sst = np.sum((Y - Y.mean(axis=0)) ** 2, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = np.where(sst > 0, 1.0 - ssr / sst, np.where(ssr > 0, 0.0, 1.0))
    dof = max(n - rank, 1)
    return ImpactEstimate(
        gamma_hat=coef[1:m + 1].copy(),
        lambda_hat=coef[m + 1:].copy(),
        intercepts=coef[0].copy(),
        r_squared=r2,
        residual_variance=ssr / dof,
        rows=n,
        rank=int(rank),
    )


def simulate_events(lam: np.ndarray, gam: np.ndarray, p_start, *, horizons: int = 18,
                    buckets_per_horizon: int = 120, bucket_seconds: float = 10.0,
                    intercepts=None, volume_scale: float = 100.0, noise_sd: float = 0.0,
                    rng: np.random.Generator | None = None) -> Events:
    """Event stream whose bucket-end bids follow the regression equation exactly (plus noise).

    Each bucket has one trade per asset; all events of a bucket carry its
    end-of-bucket bid.  A zero-volume quote at time 0 fixes the opening bid.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lam = np.asarray(lam, dtype=float)
    gam = np.asarray(gam, dtype=float)
    m = lam.shape[0]
    p = np.asarray(p_start, dtype=float).copy()
    c = np.zeros(m) if intercepts is None else np.asarray(intercepts, dtype=float)
    ts, assets, vols, prices = [np.zeros(m)], [np.arange(m)], [np.zeros(m)], [p.copy()]
    nb = buckets_per_horizon
    eps_t = bucket_seconds / (4.0 * (m + 1))
    for h in range(horizons):
        base = p.copy()
        cum = np.zeros(m)
        for b in range(nb):
            y = np.round(rng.normal(0.0, volume_scale, size=m))
            cum += y
            p = base + c + gam.T @ cum + lam.T @ y
            if noise_sd > 0:
                p = p + rng.normal(0.0, noise_sd, size=m)
            t0 = (h * nb + b) * bucket_seconds
            ts.append(t0 + eps_t * (1 + np.arange(m)))
            assets.append(np.arange(m))
            vols.append(y)
            prices.append(p.copy())
    return Events(np.concatenate(ts), np.concatenate(assets), np.concatenate(vols), np.concatenate(prices))


# -- CSV I/O -------------------------------------------------------------------

def read_events_csv(path) -> Events:
    cols: list[list[float]] = [[], [], [], []]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != EVENT_HEADER:
            raise EstimationError(f"{path}: header must be {','.join(EVENT_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise EstimationError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise EstimationError(f"{path}:{lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise EstimationError(f"{path}:{lineno}: non-finite field")
            for col, v in zip(cols, vals):
                col.append(v)
    asset = np.asarray(cols[1])
    if not np.array_equal(asset, np.round(asset)):
        raise EstimationError(f"{path}: asset ids must be integers")
    return Events(np.asarray(cols[0]), asset.astype(np.int64), np.asarray(cols[2]), np.asarray(cols[3]))


def write_events_csv(events: Events, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_HEADER)
        for t, a, v, p in zip(events.timestamp, events.asset, events.signed_volume, events.bid_price):
            w.writerow([repr(float(t)), int(a), repr(float(v)), repr(float(p))])


def write_panel_csv(panel: TradePanel, path) -> None:
    m = panel.m
    header = ["horizon", "bucket"]
    for name in ("price", "price_change", "cumulative", "volume"):
        header += [f"{name}_{j}" for j in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(panel.rows):
            h, b = divmod(k, panel.buckets_per_horizon)
            row = [h, b]
            for a in (panel.prices, panel.price_change, panel.cumulative, panel.volume):
                row += [repr(float(x)) for x in a[k]]
            w.writerow(row)


def write_estimate_json(est: ImpactEstimate, path, scale: float = 1.0) -> None:
    Path(path).write_text(json.dumps(est.to_dict(scale), indent=2) + "\n")
