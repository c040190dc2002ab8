import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deleverage.gen import GenSpec, generate
from deleverage.model import equity
from deleverage.reform import f_hat, g_hat, reformulate, to_strategy
from deleverage.sco import CONVERGED, ScoError, default_start, kkt_residual, sco

EPS = 1e-5
FEAS = EPS / 10


def _descent_slack(f):
    return 10 * (EPS / 10) * max(1.0, abs(f))


def _assert_run_properties(R, res):
    x0 = R.model.x0
    fs = res.f_hat_trace
    assert len(res.z_trace) == len(fs) == res.iterations + 1
    for k in range(res.iterations):
        za, zb = res.z_trace[k], res.z_trace[k + 1]
        d = zb[:R.s] - za[:R.s]
        bound = float(R.delta @ (d * d))
        assert fs[k] - fs[k + 1] >= bound - _descent_slack(fs[k])
        assert g_hat(R, zb) <= FEAS * max(1.0, abs(R.const_g))
        y = to_strategy(R, zb)
        assert np.all(y <= FEAS * x0) and np.all(y >= -x0 - FEAS * x0)


@pytest.mark.parametrize("index", range(3))
def test_convex_instance_one_step(index):
    mdl = generate(GenSpec(6, 0, 0, seed=5), index)
    R = reformulate(mdl)
    assert R.r == 0
    res = sco(R)
    assert res.status == CONVERGED and res.iterations == 1
    _assert_run_properties(R, res)


def test_example3(ex3):
    R = reformulate(ex3)
    res = sco(R, eps=EPS)
    assert res.status == CONVERGED
    y = to_strategy(R, res.z)
    assert equity(ex3, y) == pytest.approx(87523.223953, abs=1e-2)
    assert 4 <= res.iterations <= 16
    _assert_run_properties(R, res)


def test_example1_reaches_global_value(ex1):
    R = reformulate(ex1)
    res = sco(R, eps=EPS)
    assert equity(ex1, to_strategy(R, res.z)) == pytest.approx(0.8287, abs=1e-3)


@given(st.integers(0, 10_000), st.sampled_from([(5, 1, 1), (8, 2, 2), (12, 3, 1), (20, 1, 3)]))
@settings(max_examples=20)
def test_descent_and_feasibility(index, shape):
    mdl = generate(GenSpec(*shape, seed=2024), index)
    R = reformulate(mdl)
    res = sco(R, eps=EPS)
    _assert_run_properties(R, res)


@pytest.mark.parametrize("index", range(5))
def test_kkt_at_tight_tolerance(index):
    mdl = generate(GenSpec(10, 2, 2, seed=99), index)
    R = reformulate(mdl)
    res = sco(R, eps=1e-10)
    assert kkt_residual(R, res) <= 1e-5


def test_default_start_is_full_liquidation(ex3):
    R = reformulate(ex3)
    np.testing.assert_allclose(to_strategy(R, default_start(R)), -ex3.x0, rtol=1e-10)
    assert g_hat(R, default_start(R)) <= 0


def test_infeasible_start_rejected(ex3):
    R = reformulate(ex3)
    with pytest.raises(ScoError) as info:
        sco(R, np.zeros(ex3.m))
    assert info.value.iteration == 0
    with pytest.raises(ValueError):
        sco(R, np.zeros(ex3.m + 1))


def test_custom_start_stays_feasible(ex3):
    R = reformulate(ex3)
    z0 = default_start(R)
    res = sco(R, z0, eps=EPS)
    assert res.f_hat_trace[0] == pytest.approx(f_hat(R, z0))
    _assert_run_properties(R, res)


def test_convex_instance_matches_cvxpy():
    cp = pytest.importorskip("cvxpy")
    mdl = generate(GenSpec(6, 0, 0, seed=5), 0)
    R = reformulate(mdl)
    res = sco(R, eps=1e-8)
    # in units of the holdings, so the conic solver sees O(1) data
    X = np.diag(mdl.x0)
    u = cp.Variable(mdl.m)
    ref = cp.Problem(cp.Minimize(cp.quad_form(u, cp.psd_wrap(X @ mdl.obj_matrix @ X)) + (X @ mdl.obj_linear) @ u),
                     [cp.quad_form(u, cp.psd_wrap(X @ mdl.lev_matrix @ X)) + (X @ mdl.lev_linear) @ u
                      + mdl.lev_const <= 0, u <= 0, u >= -1])
    ref.solve(solver=cp.CLARABEL)
    assert res.value == pytest.approx(ref.value, abs=1e-6 * max(1.0, abs(ref.value)))
