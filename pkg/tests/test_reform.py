import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deleverage.gen import GenSpec, generate
from deleverage.model import MarketModel, leverage_gap, objective
from deleverage.reform import (ReformError, SpectralSplit, f_hat, g_hat, psi, reform_to_dict, reformulate,
                               simultaneous_diagonalize, spectral_split, to_strategy, to_z)


def _offdiag(a):
    return np.linalg.norm(a - np.diag(np.diag(a)))


def _check_invariants(R, split):
    scale = 1.0 + np.linalg.norm(split.b_minus) + np.linalg.norm(split.a_minus)
    DB = R.d.T @ split.b_minus @ R.d
    DA = R.d.T @ split.a_minus @ R.d
    assert _offdiag(DB) <= 1e-8 * scale
    assert _offdiag(DA) <= 1e-8 * scale
    np.testing.assert_allclose(np.diag(DB)[: R.s], R.delta, atol=1e-8 * scale)
    np.testing.assert_allclose(np.diag(DB)[R.s:], 0.0, atol=1e-8 * scale)
    np.testing.assert_allclose(np.diag(DA)[: R.r], R.theta, atol=1e-8 * scale)
    np.testing.assert_allclose(np.diag(DA)[R.r:], 0.0, atol=1e-8 * scale)
    assert np.all((R.delta > 0) & (R.delta <= 1))
    assert np.all((R.theta >= 0) & (R.theta <= 1))
    np.testing.assert_allclose(R.theta[: R.s] + R.delta, 1.0, atol=1e-12)
    assert int(np.count_nonzero(R.theta)) == R.q
    np.testing.assert_allclose(R.d @ R.d_inv, np.eye(R.m), atol=1e-9 * R.cond_d)


@pytest.mark.parametrize("name,s,q,r", [("example1", 0, 1, 1), ("example2", 1, 1, 2),
                                        ("example3", 1, 2, 3), ("example4", 1, 2, 3)])
def test_examples_ranks(name, s, q, r, request):
    from conftest import instance
    mdl = instance(name)
    split = spectral_split(mdl)
    R = simultaneous_diagonalize(split)
    assert (R.s, R.q, R.r) == (s, q, r)
    _check_invariants(R, split)


def test_split_reconstruction_and_psd(ex3):
    sp = spectral_split(ex3)
    for plus, minus, full in ((sp.b_plus, sp.b_minus, ex3.obj_matrix), (sp.a_plus, sp.a_minus, ex3.liab_matrix)):
        assert np.linalg.norm(full - (plus - minus)) <= 1e-10 * np.linalg.norm(full)
        for mat in (plus, minus):
            np.testing.assert_allclose(mat, mat.T)
            assert np.linalg.eigvalsh(mat)[0] >= -1e-10 * np.linalg.norm(mat, 2)


def test_convex_case_is_identity():
    m = 4
    lam = np.eye(m) * 1e-3
    gam = np.eye(m) * 1e-4
    mdl = MarketModel(lam, gam, np.ones(m) * 10, np.ones(m) * 100, 3900.0, 18.0)
    R = reformulate(mdl)
    assert R.convex and R.r == 0 and (R.s, R.q) == (0, 0)
    np.testing.assert_array_equal(R.d, np.eye(m))


@given(st.integers(0, 2**32 - 1), st.sampled_from([(6, 1, 1), (10, 2, 3), (8, 3, 1), (12, 0, 2), (7, 2, 0)]))
def test_generated_instances(seed, shape):
    m, s, q = shape
    mdl = generate(GenSpec(m, s, q, seed=seed))
    split = spectral_split(mdl)
    assert (split.s, split.q) == (s, q)
    R = simultaneous_diagonalize(split)
    _check_invariants(R, split)
    if s and q:
        assert max(s, q) <= R.r <= s + q


@given(st.integers(0, 2**32 - 1))
def test_congruence_identities_and_box(seed):
    rng = np.random.default_rng(seed)
    mdl = generate(GenSpec(8, 2, 2, seed=seed))
    R = reformulate(mdl)
    for _ in range(20):
        y = -rng.uniform(0, 1, mdl.m) * mdl.x0
        z = to_z(R, y)
        assert np.all(z >= R.z_lo - 1e-9 * np.abs(R.z_lo).max())
        assert np.all(z <= R.z_hi + 1e-9 * np.abs(R.z_hi).max())
        f, g = objective(mdl, y), leverage_gap(mdl, y)
        assert abs(f_hat(R, z) - f) <= 1e-8 * max(1.0, abs(f))
        assert abs(g_hat(R, z) - g) <= 1e-8 * max(1.0, abs(g), abs(mdl.lev_const))


def test_convex_parts_are_psd(ex3):
    R = reformulate(ex3)
    for mat in (R.h_plus, R.g_plus):
        assert np.linalg.eigvalsh(mat)[0] >= -1e-10 * np.linalg.norm(mat, 2)


def test_zero_point(ex3):
    R = reformulate(ex3)
    z = np.zeros(ex3.m)
    assert f_hat(R, z) == 0.0
    assert g_hat(R, z) == pytest.approx(ex3.l0 - ex3.rho1 * ex3.e0)
    assert psi(R, z) == R.const_g
    np.testing.assert_array_equal(to_strategy(R, z), 0.0)


def test_full_liquidation_round_trip(ex3):
    R = reformulate(ex3)
    np.testing.assert_allclose(to_strategy(R, to_z(R, -ex3.x0)), -ex3.x0, atol=1e-10 * ex3.x0.max())


def test_inconsistent_rank_is_structured_error(ex2):
    sp = spectral_split(ex2)
    bad = SpectralSplit(sp.model, sp.b_plus, sp.b_minus, sp.a_plus, sp.a_minus, sp.s, 3)
    with pytest.raises(ReformError) as info:
        simultaneous_diagonalize(bad)
    assert "eigenvalues" in info.value.diagnostics


def test_ill_conditioning_warns(ex3, monkeypatch):
    import deleverage.reform as rf
    monkeypatch.setattr(rf, "COND_WARN", 100.0)
    with pytest.warns(RuntimeWarning, match="ill-conditioned"):
        R = reformulate(ex3)
    assert R.cond_d > 100.0


def test_dump_is_json(ex3):
    doc = json.loads(json.dumps(reform_to_dict(reformulate(ex3))))
    assert (doc["s"], doc["r"]) == (1, 3)
    assert len(doc["d"]) == 6


def test_complementary_ranges_snap_to_exact_weights():
    # r = s + q: the ranges of B- and A- are complementary, so theta_1 is exactly 0
    mdl = generate(GenSpec(4, 1, 3, seed=707), 2)
    split = spectral_split(mdl)
    R = simultaneous_diagonalize(split)
    assert (R.s, R.q, R.r) == (1, 3, 4)
    assert R.theta[0] == 0.0 and R.delta[0] == 1.0
    _check_invariants(R, split)
