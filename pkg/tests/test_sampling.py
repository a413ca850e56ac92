import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loopcut.model import generate_random_network
from loopcut.exact import enumerate_joint_query, enumerate_joint_table
from loopcut.sampling import (
    EstimatorState,
    UnresolvedEstimateError,
    draw_categorical,
    estimate_marginals,
    gibbs_run,
    lw_run,
    lw_sample,
    rejection_rate,
)
import netzoo


def test_lw_sample_chain_weight():
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = lw_sample(netzoo.chain_ab(), {1: 1}, rng)
        expected = 0.8 if s.assignment[0] == 1 else 0.1
        assert s.weight == pytest.approx(expected)
        assert s.step_probs.shape == (1,)


def test_lw_no_evidence_weight_is_one():
    rng = np.random.default_rng(1)
    s = lw_sample(netzoo.diamond(), {}, rng)
    assert s.weight == 1.0
    assert not s.is_rejected


def test_lw_zero_weight_on_impossible_child():
    net = generate_random_network(5, 2, 2, 1.0, seed=3)
    joint = enumerate_joint_table(net)
    zero = np.argwhere(joint == 0.0)[0]
    leaf = max(range(net.n), key=lambda v: len(net.parents[v]))
    res = lw_run(net, {leaf: int(zero[leaf])}, np.random.default_rng(0), samples=64, collect=True)
    lw = res.extras["log_weights"]
    assert np.all(np.isin(np.exp(lw), (0.0, 1.0)))


def test_estimate_marginals_weighted_counts():
    st_ = EstimatorState({7: 2})
    st_.add_batch(np.array([[0], [1]]), np.log(np.array([1.0, 3.0])))
    m = estimate_marginals(st_)
    np.testing.assert_allclose(m[7], [0.25, 0.75])


def test_estimate_point_mass_when_all_samples_identical():
    st_ = EstimatorState({0: 3})
    st_.add_batch(np.array([[2], [2], [2]]), np.zeros(3))
    np.testing.assert_allclose(estimate_marginals(st_)[0], [0.0, 0.0, 1.0])


def test_all_rejected_is_unresolved():
    st_ = EstimatorState({0: 2})
    st_.add_batch(np.array([[0], [1]]), np.full(2, -np.inf))
    with pytest.raises(UnresolvedEstimateError):
        estimate_marginals(st_)
    assert rejection_rate(st_) == 1.0


def test_rejection_rate_counts():
    st_ = EstimatorState({0: 2})
    lw = np.zeros(10)
    lw[:3] = -np.inf
    st_.add_batch(np.zeros((10, 1), dtype=np.int64), lw)
    assert rejection_rate(st_) == pytest.approx(0.3)
    empty = EstimatorState({0: 2})
    with pytest.raises(ValueError):
        rejection_rate(empty)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e6))
def test_estimates_invariant_under_weight_rescaling(scale):
    values = np.array([[0], [1], [1], [0]])
    lw = np.log(np.array([0.5, 1.5, 0.25, 1.0]))
    a = EstimatorState({0: 2})
    a.add_batch(values, lw)
    b = EstimatorState({0: 2})
    b.add_batch(values, lw + math.log(scale))
    np.testing.assert_allclose(estimate_marginals(a)[0], estimate_marginals(b)[0], atol=1e-12)


def test_merge_matches_single_pass():
    values = np.arange(8).reshape(8, 1) % 2
    lw = np.log(np.linspace(0.1, 2.0, 8))
    whole = EstimatorState({0: 2})
    whole.add_batch(values, lw)
    a = EstimatorState({0: 2})
    a.add_batch(values[:3], lw[:3])
    b = EstimatorState({0: 2})
    b.add_batch(values[3:], lw[3:])
    a.merge(b)
    np.testing.assert_allclose(estimate_marginals(a)[0], estimate_marginals(whole)[0], atol=1e-12)
    assert a.count == whole.count and a.rejected == whole.rejected


def test_tiny_weights_do_not_underflow_estimates():
    st_ = EstimatorState({0: 2})
    st_.add_batch(np.array([[0], [1]]), np.array([-800.0, -800.0 + math.log(3.0)]))
    np.testing.assert_allclose(estimate_marginals(st_)[0], [0.25, 0.75], atol=1e-12)


def test_lw_run_budget_zero_is_unresolved():
    res = lw_run(netzoo.chain_ab(), {1: 1}, np.random.default_rng(0), samples=0)
    assert res.unresolved
    with pytest.raises(UnresolvedEstimateError):
        res.marginals()


def test_lw_run_seed_determinism():
    net = generate_random_network(8, 2, 3, 0.0, seed=5)
    ev = {7: 0}
    a = lw_run(net, ev, np.random.default_rng(42), samples=5000, collect=True)
    b = lw_run(net, ev, np.random.default_rng(42), samples=5000, collect=True)
    assert np.array_equal(a.extras["values"], b.extras["values"])
    assert np.array_equal(a.extras["log_weights"], b.extras["log_weights"])


def test_lw_run_chunking_does_not_change_the_stream():
    net = generate_random_network(8, 2, 3, 0.0, seed=5)
    ev = {7: 0}
    a = lw_run(net, ev, np.random.default_rng(1), samples=4000, collect=True, batch=4000)
    b = lw_run(net, ev, np.random.default_rng(1), samples=4000, collect=True, batch=333)
    assert np.array_equal(a.extras["values"], b.extras["values"])


def test_lw_converges_to_posterior():
    res = lw_run(netzoo.chain_ab(), {1: 1}, np.random.default_rng(7), samples=200_000)
    m = res.marginals()
    assert m[0][1] == pytest.approx(0.3 * 0.8 / 0.31, abs=0.01)


def test_lw_mean_weight_estimates_evidence_probability():
    rng = np.random.default_rng(11)
    for seed in range(3):
        net = generate_random_network(int(rng.integers(4, 10)), 2, 2, 0.0,
                                      seed=int(rng.integers(2**31)))
        ev = netzoo.random_evidence(net, rng, p=0.3)
        ora = enumerate_joint_query(net, ev)
        res = lw_run(net, ev, np.random.default_rng(seed), samples=1_000_000)
        est = math.exp(res.state.log_mean_weight())
        assert est == pytest.approx(ora.evidence_probability, rel=0.02)


def test_lw_support_covers_target_support():
    rng = np.random.default_rng(13)
    for _ in range(10):
        net = generate_random_network(6, 2, 2, 0.6, seed=int(rng.integers(2**31)))
        ev = netzoo.random_evidence(net, rng, p=0.3)
        joint = enumerate_joint_table(net)
        sliced = joint[tuple(ev.get(i, slice(None)) for i in range(net.n))]
        from loopcut.evaluation import lw_proposal_and_weights

        _, q, _ = lw_proposal_and_weights(net, ev)
        assert np.all(q[sliced > 0] > 0)


def test_draw_categorical_never_picks_zero_mass():
    p = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
    u = np.array([0.999999, 0.999999, 0.2])
    v = draw_categorical(p, u)
    assert p[np.arange(3), v].min() > 0


def test_gibbs_single_variable_recovers_prior():
    net = netzoo.chain(1, seed=3)
    res = gibbs_run(net, {}, T=200_000, burn_in=100, rng=np.random.default_rng(0), chains=50)
    np.testing.assert_allclose(res.marginals()[0], net.cpts[0].table[0], atol=0.01)


def test_gibbs_chain_posterior():
    res = gibbs_run(netzoo.chain_ab(), {1: 1}, T=200_000, burn_in=200,
                    rng=np.random.default_rng(1), chains=50)
    assert res.marginals()[0][1] == pytest.approx(0.3 * 0.8 / 0.31, abs=0.01)


def test_gibbs_burn_in_contract():
    with pytest.raises(ValueError):
        gibbs_run(netzoo.chain_ab(), {1: 1}, T=100, burn_in=100, rng=np.random.default_rng(0))


def test_gibbs_warns_on_determinism():
    net = generate_random_network(5, 2, 2, 1.0, seed=9)
    with pytest.warns(UserWarning, match="deterministic"):
        try:
            gibbs_run(net, {}, T=10, burn_in=1, rng=np.random.default_rng(0), chains=2)
        except UnresolvedEstimateError:
            pass


def test_budget_exclusivity():
    with pytest.raises(ValueError):
        lw_run(netzoo.chain_ab(), {}, np.random.default_rng(0), samples=10, seconds=1.0)
    with pytest.raises(ValueError):
        lw_run(netzoo.chain_ab(), {}, np.random.default_rng(0))


def test_time_budget_runs_and_checkpoints():
    res = lw_run(netzoo.chain_ab(), {1: 1}, np.random.default_rng(0), seconds=0.05, batch=256)
    assert res.state.count > 0
    assert len(res.checkpoints) >= 1
    assert all(
        a.samples <= b.samples and a.elapsed_s <= b.elapsed_s
        for a, b in zip(res.checkpoints, res.checkpoints[1:])
    )
