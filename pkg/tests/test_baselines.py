import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import desk_network, random_network, scalar_net
from discrete_precoding import baselines as bl
from discrete_precoding.link_metrics import evaluate_rates, power_used
from discrete_precoding.network_model import NetworkRealization
from discrete_precoding.rate_model import DomainError, RateSet, preset_rate_set

Q012 = RateSet.from_values([0, 1, 2])


# -- waterfilling -------------------------------------------------------------------

def test_waterfill_examples():
    assert bl.waterfill([1.0, 0.25], 4.0, 1.0) == pytest.approx([3.5, 0.5])
    p = bl.waterfill([1.0, 0.25], 3.0, 1.0)
    assert p.tolist() == [3.0, 0.0]
    assert bl.waterfill([0.3], 7.0, 2.0) == pytest.approx([7.0], rel=1e-15)


@pytest.mark.parametrize("args", [([], 1.0), ([1.0, 0.0], 1.0), ([1.0], -1.0)])
def test_waterfill_errors(args):
    with pytest.raises(DomainError):
        bl.waterfill(args[0], args[1], 1.0)


@given(gains=st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8),
       P=st.floats(0.0, 100.0), noise=st.floats(1e-2, 10.0), seed=st.integers(0, 1000))
def test_waterfill_is_optimal(gains, P, noise, seed):
    g = np.array(gains)
    p = bl.waterfill(g, P, noise)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(P, abs=1e-9 * max(P, 1))
    rate = lambda q: np.sum(np.log2(1 + g * q / noise))
    rng = np.random.default_rng(seed)
    for _ in range(20):
        q = rng.dirichlet(np.ones(g.size)) * P
        assert rate(q) <= rate(p) + 1e-9
    # common water level on the active set
    act = p > 0
    if act.sum() > 1:
        lvl = p[act] + noise / g[act]
        assert np.ptp(lvl) <= 1e-9 * lvl.max()


# -- WMMSE ----------------------------------------------------------------------------

def test_wmmse_siso(siso):
    res = bl.wmmse_run(siso)
    ev = evaluate_rates(siso, res.V, Q012)
    assert power_used(res.V)[0] == pytest.approx(10.0, rel=1e-8)
    assert ev.weighted_continuous == pytest.approx(math.log2(11), rel=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_wmmse_trace_nondecreasing(seed):
    real = desk_network(seed)
    res = bl.wmmse_run(real, rate_sets=preset_rate_set("wifi"))
    obj = np.array([r[0] for r in res.trace])
    assert np.all(np.diff(obj) >= -1e-8 * np.abs(obj[1:]))
    assert res.converged
    assert np.all(power_used(res.V) <= real.power * (1 + 1e-9))
    assert all(not math.isnan(r[1]) for r in res.trace)


def _decoupled(rng, I=2, N=2, M=3):
    g = rng.standard_normal((I, 1, I, N, M, 2))
    H = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2)
    for i in range(I):
        for j in range(I):
            if i != j:
                H[i, 0, j] = 0
    return H


def test_wmmse_decoupled_matches_waterfilling():
    rng = np.random.default_rng(7)
    H = _decoupled(rng)
    real = NetworkRealization(H, 0.5, [4.0, 9.0], 1.0, 2)
    cfg = bl.BaselineConfig(wmmse_rel_tolerance=1e-12, wmmse_max_iterations=5000)
    res = bl.wmmse_run(real, cfg)
    ev = evaluate_rates(real, res.V, Q012)
    for i in range(2):
        s = np.linalg.svd(H[i, 0, i], compute_uv=False)[:2] ** 2
        p = bl.waterfill(s, real.power[i], 0.5)
        best = np.sum(np.log2(1 + s * p / 0.5))
        assert ev.user_continuous[i, 0] == pytest.approx(best, abs=1e-4)


def test_wmmse_bisection_meets_budget():
    real = desk_network(2, tx_power_dbm=36.0)
    res = bl.wmmse_run(real)
    assert np.all(power_used(res.V) <= real.power * (1 + 1e-8))


# -- MaxSINR ---------------------------------------------------------------------------

def test_maxsinr_single_user_top_singular_vector():
    rng = np.random.default_rng(3)
    g = rng.standard_normal((1, 1, 1, 2, 4, 2))
    H = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2)
    real = NetworkRealization(H, 1.0, 5.0, 1.0, 1)
    res = bl.maxsinr_run(real)
    v = res.V[0, 0, :, 0]
    top = np.linalg.svd(H[0, 0, 0])[2][0].conj()
    assert abs(np.vdot(top, v)) / np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_maxsinr_equal_stream_powers(seed):
    real = desk_network(seed)
    res = bl.maxsinr_run(real)
    col = np.sum(np.abs(res.V) ** 2, axis=2)       # (I, K, d)
    expected = real.power / (2 * 2)
    assert np.allclose(col, expected[:, None, None], rtol=1e-12)
    assert res.iterations <= 100


def test_maxsinr_filters_unit_norm():
    real = desk_network(5)
    res = bl.maxsinr_run(real)
    U = bl._forward_filters(real, res.V)
    assert np.allclose(np.linalg.norm(U, axis=2), 1.0)


def test_maxsinr_decoupled_single_stream_matches_waterfilling():
    rng = np.random.default_rng(8)
    H = _decoupled(rng)
    real = NetworkRealization(H, 0.5, [4.0, 9.0], 1.0, 1)
    ev = evaluate_rates(real, bl.maxsinr_run(real).V, Q012)
    for i in range(2):
        s1 = np.linalg.svd(H[i, 0, i], compute_uv=False)[0] ** 2
        best = math.log2(1 + s1 * real.power[i] / 0.5)
        assert ev.user_continuous[i, 0] == pytest.approx(best, rel=1e-2)


# -- TDMA -------------------------------------------------------------------------------

def test_tdma_siso(siso):
    res = bl.tdma_run(siso, Q012)
    assert res.slots == 1
    assert res.evaluation.weighted_continuous == pytest.approx(math.log2(11))


def test_tdma_quantizes_per_slot():
    # two users of one BS, each alone sees SINR 10
    H = np.ones((1, 2, 1, 1, 1), complex)
    real = NetworkRealization(H, 1.0, 10.0, 1.0, 1)
    rs = RateSet.from_values([0, 1, 2, 3])
    res = bl.tdma_run(real, rs)
    assert res.slots == 2
    assert res.slot_sinr.ravel().tolist() == [10.0, 10.0]
    assert res.evaluation.discrete.ravel().tolist() == [1.5, 1.5]    # 3 / 2


def test_tdma_slot_fraction_desk():
    real = desk_network(0)
    res = bl.tdma_run(real, preset_rate_set("wifi"))
    assert res.slots == 6
    full = np.log2(1 + res.slot_sinr).sum(axis=-1)
    assert np.allclose(res.evaluation.user_continuous, full / 6)
    assert np.all(res.evaluation.power_used <= real.power)


def test_config_validation():
    with pytest.raises(ValueError):
        bl.BaselineConfig(wmmse_max_iterations=0)
    with pytest.raises(ValueError):
        bl.BaselineConfig(filter_change_tolerance=0.0)
