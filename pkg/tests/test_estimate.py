import numpy as np
import pytest

from deleverage.estimate import (EstimationError, Events, bucketize, fit, read_events_csv, simulate_events,
                                 write_estimate_json, write_events_csv, write_panel_csv)


def _truth(rng, m=6):
    lam = rng.uniform(-1e-4, 1e-3, (m, m))
    gam = rng.uniform(-1e-5, 1e-4, (m, m))
    return lam, gam, rng.uniform(20, 200, m)


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_single_trade_step():
    ev = Events(np.array([0.0, 35.0]), np.array([0, 0]), np.array([0.0, 100.0]), np.array([10.0, 10.5]))
    panel = bucketize(ev, 10.0, 100.0)
    assert (panel.horizon_count, panel.buckets_per_horizon) == (1, 10)
    np.testing.assert_array_equal(panel.cumulative[:, 0], [0, 0, 0, 100, 100, 100, 100, 100, 100, 100])
    np.testing.assert_array_equal(panel.volume[:, 0], [0, 0, 0, 100, 0, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(panel.price_change[:, 0], [0, 0, 0, .5, .5, .5, .5, .5, .5, .5])


def test_cumulative_resets_each_horizon():
    t = np.array([0.0, 5.0, 25.0, 45.0])
    ev = Events(t, np.zeros(4, int), np.array([0.0, 10.0, 20.0, 5.0]), np.array([1.0, 1.1, 1.2, 1.3]))
    panel = bucketize(ev, 10.0, 20.0)
    np.testing.assert_array_equal(panel.cumulative[:, 0], [10, 10, 20, 20, 5, 5])
    # horizon start price is the bid at the end of the previous horizon
    np.testing.assert_allclose(panel.price_change[:, 0], [0.1, 0.1, 0.1, 0.1, 0.1, 0.1])


def test_unsorted_rejected():
    ev = Events(np.array([5.0, 1.0]), np.array([0, 0]), np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(EstimationError, match="sorted"):
        bucketize(ev)


@pytest.mark.parametrize("bad", [dict(bucket_seconds=0.0), dict(horizon_seconds=25.0, bucket_seconds=10.0)])
def test_bad_bucketing(bad):
    ev = Events(np.array([0.0]), np.array([0]), np.array([1.0]), np.array([1.0]))
    with pytest.raises(EstimationError):
        bucketize(ev, **bad)


def test_reference_panel_size():
    rng = np.random.default_rng(0)
    lam, gam, p = _truth(rng)
    panel = bucketize(simulate_events(lam, gam, p, rng=rng), 10.0, 1200.0)
    assert panel.rows == 2160 and panel.m == 6


def test_noiseless_recovery():
    rng = np.random.default_rng(1)
    lam, gam, p = _truth(rng)
    c = rng.normal(0, 0.01, 6)
    est = fit(bucketize(simulate_events(lam, gam, p, intercepts=c, rng=rng), 10.0, 1200.0))
    assert _rel(est.lambda_hat, lam) <= 1e-6
    assert _rel(est.gamma_hat, gam) <= 1e-6
    np.testing.assert_allclose(est.intercepts, c, atol=1e-8)
    assert est.rank == 13


def test_zero_volume_panel():
    rng = np.random.default_rng(2)
    m, n = 2, 40
    t = np.arange(n, dtype=float) * 10.0
    price = 50.0 + rng.normal(0, 0.1, (n, m))
    ev = Events(np.repeat(t, m), np.tile(np.arange(m), n), np.zeros(n * m), price.reshape(-1))
    panel = bucketize(ev, 10.0, 100.0)
    with pytest.warns(RuntimeWarning, match="rank"):
        est = fit(panel)
    np.testing.assert_array_equal(est.lambda_hat, 0.0)
    np.testing.assert_array_equal(est.gamma_hat, 0.0)
    np.testing.assert_allclose(est.intercepts, panel.price_change.mean(axis=0), atol=1e-12)


def test_residual_orthogonality():
    rng = np.random.default_rng(3)
    lam, gam, p = _truth(rng, 4)
    panel = bucketize(simulate_events(lam, gam, p, horizons=5, noise_sd=0.05, rng=rng), 10.0, 1200.0)
    est = fit(panel)
    X = panel.design()
    coef = np.vstack([est.intercepts, est.gamma_hat, est.lambda_hat])
    resid = panel.price_change - X @ coef
    lhs = X.T @ resid
    for i in range(panel.m):
        scale = np.linalg.norm(X, axis=0) * np.linalg.norm(panel.price_change[:, i])
        assert np.all(np.abs(lhs[:, i]) <= 1e-8 * scale)


def test_scale_equivariance():
    rng = np.random.default_rng(4)
    lam, gam, p = _truth(rng, 3)
    ev = simulate_events(lam, gam, p, horizons=4, noise_sd=0.02, rng=rng)
    base = fit(bucketize(ev, 10.0, 1200.0))
    scaled = Events(ev.timestamp, ev.asset, ev.signed_volume * 7.0, ev.bid_price)
    est = fit(bucketize(scaled, 10.0, 1200.0))
    np.testing.assert_allclose(est.lambda_hat, base.lambda_hat / 7.0, rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(est.gamma_hat, base.gamma_hat / 7.0, rtol=1e-8, atol=1e-14)


def test_noisy_recovery_median():
    # SNR 10: noise sd is a tenth of the typical bucket-to-bucket price move
    errs = []
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        lam, gam, p = _truth(rng)
        clean = bucketize(simulate_events(lam, gam, p, rng=np.random.default_rng(seed)), 10.0, 1200.0)
        sd = 0.1 * float(np.std(np.diff(clean.prices, axis=0)))
        ev = simulate_events(lam, gam, p, noise_sd=sd, rng=np.random.default_rng(seed))
        est = fit(bucketize(ev, 10.0, 1200.0))
        truth = np.vstack([gam, lam])
        errs.append(_rel(np.vstack([est.gamma_hat, est.lambda_hat]), truth))
    assert float(np.median(errs)) <= 0.05


def test_too_few_rows():
    ev = Events(np.array([0.0, 10.0]), np.array([0, 1]), np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(EstimationError, match="rows"):
        fit(bucketize(ev, 10.0, 20.0))


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    lam, gam, p = _truth(rng, 3)
    ev = simulate_events(lam, gam, p, horizons=2, rng=rng)
    path = tmp_path / "trades.csv"
    write_events_csv(ev, path)
    back = read_events_csv(path)
    for name in ("timestamp", "asset", "signed_volume", "bid_price"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ev, name))
    panel = bucketize(back, 10.0, 1200.0)
    write_panel_csv(panel, tmp_path / "panel.csv")
    lines = (tmp_path / "panel.csv").read_text().splitlines()
    assert len(lines) == panel.rows + 1
    write_estimate_json(fit(panel), tmp_path / "est.json", scale=1e-4)


@pytest.mark.parametrize("text,match", [("a,b,c,d\n", "header"),
                                        ("timestamp_s,asset,signed_volume,bid_price\n1,0,2\n", "4 fields"),
                                        ("timestamp_s,asset,signed_volume,bid_price\n1,0,x,2\n", "non-numeric"),
                                        ("timestamp_s,asset,signed_volume,bid_price\n1,0,nan,2\n", "non-finite"),
                                        ("timestamp_s,asset,signed_volume,bid_price\n1,0.5,1,2\n", "integers")])
def test_bad_csv(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(EstimationError, match=match):
        read_events_csv(path)


def test_estimate_dict_is_instance_compatible():
    rng = np.random.default_rng(6)
    lam, gam, p = _truth(rng, 2)
    est = fit(bucketize(simulate_events(lam, gam, p, horizons=2, rng=rng), 10.0, 1200.0))
    doc = est.to_dict(1e-4)
    np.testing.assert_allclose(np.array(doc["lambda"]) * 1e-4, est.lambda_hat)
    with pytest.raises(ValueError):
        est.to_dict(0.0)
