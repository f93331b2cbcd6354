import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from oracles import gauge_prox_cvx, subgradient_residual, tv_prox_pg_reference
from smf.proximal import (
    ProxResult,
    TVProxConfig,
    prox_gauge,
    prox_l1,
    prox_l1_tv,
    prox_l2,
    tv_duality_gap,
)
from smf.regularizers import GaugeSpec, chain_graph, eval_gauge, lattice_graph

TIGHT = TVProxConfig(max_sweeps=5000, gap_tol=1e-13)


# ------------------------------------------------------------ scalar proxes

def test_prox_l1_values():
    y = np.array([3.0, -0.2, 0.0, -5.0])
    assert_allclose(prox_l1(y, 1.0), [2.0, 0.0, 0.0, -4.0])


def test_prox_l1_moreau_identity():
    rng = np.random.default_rng(0)
    y = rng.normal(size=20)
    t = 0.7
    assert_allclose(prox_l1(y, t) + np.clip(y, -t, t), y, rtol=1e-14)


def test_prox_l2_shrinks_and_zeros():
    y = np.array([3.0, 4.0])
    assert_allclose(prox_l2(y, 1.0), [2.4, 3.2])
    assert_allclose(prox_l2(y, 5.0), [0.0, 0.0])
    assert_allclose(prox_l2(y, 6.0), [0.0, 0.0])


def test_prox_l2_moreau_identity():
    rng = np.random.default_rng(1)
    y = rng.normal(size=15)
    t = 1.3
    ball = y if np.linalg.norm(y) <= t else t * y / np.linalg.norm(y)
    assert_allclose(prox_l2(y, t) + ball, y, rtol=1e-14)


# ------------------------------------------------------------ l1+tv prox

def test_no_tv_reduces_to_soft_threshold():
    y = np.array([2.0, -1.0, 0.3])
    res = prox_l1_tv(y, t=0.5, nu1=1.0, nu_tv=0.0)
    assert_allclose(res.x, prox_l1(y, 0.5))
    assert res.sweeps_used == 0
    assert res.dual_gap == 0.0
    # closed-form dual multipliers sit at clip(y / a1)
    assert_allclose(res.gamma, np.clip(y / 0.5, -1, 1))


def test_no_tv_nonneg_clips():
    y = np.array([2.0, -1.0, 0.3])
    res = prox_l1_tv(y, t=0.5, nu1=1.0, nu_tv=0.0, nonneg=True)
    assert_allclose(res.x, [1.5, 0.0, 0.0])


def test_two_node_chain_frozen():
    # pure TV on [0, 2] with threshold 0.5 moves both ends 0.5 toward
    # the mean and the single edge multiplier saturates in one sweep
    g = chain_graph(2)
    res = prox_l1_tv(np.array([0.0, 2.0]), t=0.5, nu1=0.0, nu_tv=1.0, graph=g)
    assert_allclose(res.x, [0.5, 1.5], atol=1e-12)
    assert res.dual_gap <= 1e-12
    assert res.sweeps_used == 1
    assert_allclose(res.gamma, [-1.0])


def test_large_threshold_flattens_to_mean():
    g = chain_graph(5)
    y = np.array([4.0, 1.0, -2.0, 3.0, 0.0])
    res = prox_l1_tv(y, t=50.0, nu1=0.0, nu_tv=1.0, graph=g, cfg=TIGHT)
    assert_allclose(res.x, np.full(5, y.mean()), atol=1e-6)


def test_zero_input_fast_path():
    g = chain_graph(4)
    res = prox_l1_tv(np.zeros(4), t=1.0, nu1=1.0, nu_tv=1.0, graph=g)
    assert_allclose(res.x, np.zeros(4))
    assert res.sweeps_used == 0


def test_missing_graph_raises():
    with pytest.raises(ValueError):
        prox_l1_tv(np.ones(3), t=1.0, nu1=0.0, nu_tv=1.0)


def test_size_mismatch_raises():
    with pytest.raises(ValueError):
        prox_l1_tv(np.ones(3), t=1.0, nu1=0.0, nu_tv=1.0, graph=chain_graph(4))


def test_warm_start_wrong_size_raises():
    g = chain_graph(3)
    with pytest.raises(ValueError):
        prox_l1_tv(np.ones(3), t=1.0, nu1=0.0, nu_tv=1.0, graph=g, gamma0=np.zeros(7))


def test_warm_start_accelerates_nearby_solve():
    g = lattice_graph(6, 6)
    rng = np.random.default_rng(5)
    y = rng.normal(size=36)
    first = prox_l1_tv(y, 0.3, 0.5, 1.0, g, cfg=TIGHT)
    second = prox_l1_tv(y + 1e-6 * rng.normal(size=36), 0.3, 0.5, 1.0, g,
                        cfg=TIGHT, gamma0=first.gamma)
    assert second.sweeps_used <= first.sweeps_used
    assert_allclose(second.x, first.x, atol=1e-4)


def test_duality_gap_at_zero_multipliers():
    # with gamma = 0 the recovered primal point is y itself and the gap
    # equals the whole penalty: t*nu1*||y||_1 + t*nu_tv*TV(y)
    g = chain_graph(3)
    y = np.array([1.0, 3.0, 2.0])
    gap = tv_duality_gap(y, y, np.zeros(3 + 2), t=0.5, nu1=1.0, nu_tv=1.0, graph=g)
    assert_allclose(gap, 0.5 * 6.0 + 0.5 * 3.0)


def test_duality_gap_vanishes_at_solution():
    g = lattice_graph(4, 5)
    rng = np.random.default_rng(9)
    y = rng.normal(size=20)
    res = prox_l1_tv(y, 0.4, 0.8, 1.2, g, nonneg=True, cfg=TIGHT)
    gap = tv_duality_gap(y, res.x, res.gamma, 0.4, 0.8, 1.2, g, nonneg=True)
    assert gap <= 1e-11


def test_gap_is_valid_bound_for_arbitrary_gamma():
    g = chain_graph(6)
    rng = np.random.default_rng(13)
    y = rng.normal(size=6)
    gamma = np.clip(rng.normal(size=6 + 5), -1, 1)
    assert tv_duality_gap(y, y, gamma, 0.7, 1.0, 1.0, g) >= 0.0


@pytest.mark.parametrize("nonneg", [False, True])
def test_matches_projected_gradient_reference(nonneg):
    rng = np.random.default_rng(21)
    for trial in range(8):
        n = int(rng.integers(4, 12))
        g = chain_graph(n) if trial % 2 == 0 else lattice_graph(2, (n + 1) // 2)
        n = g.node_count
        y = rng.normal(size=n) * 2.0
        nu1 = float(rng.uniform(0, 1)) if trial % 3 else 0.5
        nu_tv = float(rng.uniform(0.2, 1.5))
        res = prox_l1_tv(y, 0.6, nu1, nu_tv, g, nonneg=nonneg, cfg=TIGHT)
        ref = tv_prox_pg_reference(y, 0.6, nu1, nu_tv, g, nonneg=nonneg)
        assert_allclose(res.x, ref, atol=5e-7)


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_terminal_gap_meets_tolerance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    g = chain_graph(n)
    y = rng.normal(size=n) * float(rng.uniform(0.1, 5))
    nu1 = float(rng.uniform(0, 2)) if rng.random() < 0.7 else 0.0
    nonneg = bool(rng.random() < 0.5)
    res = prox_l1_tv(y, 0.5, nu1, float(rng.uniform(0.1, 2)), g, nonneg=nonneg)
    assert res.dual_gap <= TVProxConfig().gap_tol


# ------------------------------------------------------------ full gauge prox

def test_prox_gauge_composes_l2_stage():
    g = GaugeSpec(nu1=1.0, nu_tv=0.0, nu2=1.0)
    y = np.array([4.0, -3.0])
    res = prox_gauge(y, 1.0, g)
    assert_allclose(res.x, prox_l2(prox_l1(y, 1.0), 1.0))


def test_prox_gauge_decreases_objective_vs_input():
    g = GaugeSpec(nu1=0.5, nu_tv=1.0, nu2=0.7, graph=lattice_graph(3, 3), nonneg=True)
    rng = np.random.default_rng(2)
    y = rng.normal(size=9)
    res = prox_gauge(y, 0.8, g, cfg=TIGHT)

    def fval(x):
        return 0.5 * np.dot(x - y, x - y) + 0.8 * eval_gauge(g, x)

    assert fval(res.x) <= fval(np.maximum(y, 0.0)) + 1e-12


def test_prox_gauge_matches_conic_reference():
    rng = np.random.default_rng(33)
    for trial in range(6):
        n = int(rng.integers(3, 10))
        graph = chain_graph(n)
        g = GaugeSpec(
            nu1=float(rng.uniform(0, 1)),
            nu_tv=float(rng.uniform(0, 1.2)),
            nu2=float(rng.uniform(0, 1)) if trial % 2 else 0.0,
            graph=graph,
            nonneg=bool(trial % 3 == 0),
        )
        if g.nu1 + g.nu2 == 0:
            continue
        y = rng.normal(size=n) * 1.5
        res = prox_gauge(y, 0.7, g, cfg=TIGHT)
        ref = gauge_prox_cvx(y, 0.7, g)
        assert_allclose(res.x, ref, atol=2e-6)


def test_prox_gauge_subgradient_residual_small():
    rng = np.random.default_rng(44)
    for _ in range(10):
        n = int(rng.integers(3, 15))
        graph = chain_graph(n)
        g = GaugeSpec(nu1=0.6, nu_tv=0.9, nu2=0.4, graph=graph,
                      nonneg=bool(rng.random() < 0.5))
        y = rng.normal(size=n) * 2.0
        res = prox_gauge(y, 0.5, g, cfg=TIGHT)
        assert subgradient_residual(y, res.x, 0.5, g) <= 1e-8


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_prox_gauge_firmly_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    n = 8
    g = GaugeSpec(nu1=0.5, nu_tv=0.8, nu2=0.6, graph=chain_graph(n),
                  nonneg=bool(rng.random() < 0.5))
    y1 = rng.normal(size=n)
    y2 = rng.normal(size=n)
    p1 = prox_gauge(y1, 0.9, g, cfg=TIGHT).x
    p2 = prox_gauge(y2, 0.9, g, cfg=TIGHT).x
    dp = p1 - p2
    assert np.dot(dp, dp) <= np.dot(dp, y1 - y2) + 1e-9
