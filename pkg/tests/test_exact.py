import time

import numpy as np
import pytest

from loopcut.model import generate_random_network
from loopcut.exact import (
    StateSpaceError,
    bucket_elimination_query,
    enumerate_joint_query,
    enumerate_joint_table,
)
from loopcut.polytree import NotSinglyConnectedError, polytree_query
from loopcut.graphs import is_singly_connected, relevant_subnetwork
import netzoo


def test_chain_no_evidence_marginal():
    res = enumerate_joint_query(netzoo.chain_ab(), {})
    assert res.evidence_probability == pytest.approx(1.0)
    assert res.marginals[1][1] == pytest.approx(0.7 * 0.1 + 0.3 * 0.8)


def test_all_variables_observed_is_a_single_term():
    net = netzoo.chain_ab()
    res = enumerate_joint_query(net, {0: 1, 1: 1})
    assert res.evidence_probability == pytest.approx(0.3 * 0.8)
    assert res.marginals == {}


def test_impossible_evidence_flags_undefined_marginals():
    net = generate_random_network(6, 2, 2, 1.0, seed=2)
    # fully deterministic net: find a contradicted leaf value
    joint = enumerate_joint_table(net)
    flat = np.argwhere(joint == 0.0)
    assert flat.size, "fully deterministic net must have zero-probability states"
    ev = {i: int(flat[0][i]) for i in range(net.n)}
    res = enumerate_joint_query(net, ev)
    if res.evidence_probability == 0.0:
        assert res.marginals is None


def test_state_cap_enforced():
    net = generate_random_network(12, 2, 3, 0.0, seed=0)
    with pytest.raises(StateSpaceError):
        enumerate_joint_query(net, {}, cap=1000)


def test_bucket_elimination_matches_oracle_on_chain():
    net = netzoo.chain_ab()
    ro = enumerate_joint_query(net, {1: 1})
    rb = bucket_elimination_query(net, {1: 1})
    assert rb.evidence_probability == pytest.approx(ro.evidence_probability, abs=1e-12)
    assert rb.marginals[0][1] == pytest.approx(0.3 * 0.8 / 0.31)


def test_bucket_elimination_matches_oracle_on_diamond_with_evidence():
    ro = enumerate_joint_query(netzoo.diamond(), {3: 1})
    rb = bucket_elimination_query(netzoo.diamond(), {3: 1})
    assert rb.evidence_probability == pytest.approx(ro.evidence_probability, rel=1e-12)
    for v in ro.marginals:
        np.testing.assert_allclose(rb.marginals[v], ro.marginals[v], atol=1e-12)


def test_oracle_equivalence_randomized():
    rng = np.random.default_rng(1)
    for _ in range(60):
        n = int(rng.integers(2, 11))
        net = generate_random_network(n, min(3, n - 1), 3,
                                      float(rng.choice([0.0, 0.0, 0.5])),
                                      seed=int(rng.integers(2**31)))
        ev = netzoo.random_evidence(net, rng)
        ro = enumerate_joint_query(net, ev)
        rb = bucket_elimination_query(net, ev)
        assert abs(ro.evidence_probability - rb.evidence_probability) <= 1e-9 * max(
            1.0, ro.evidence_probability
        )
        if ro.marginals is None:
            assert rb.marginals is None
        else:
            for v in ro.marginals:
                assert np.abs(ro.marginals[v] - rb.marginals[v]).max() <= 1e-9


def test_polytree_chain_hand_values():
    res = polytree_query(netzoo.chain_ab(), {1: 1})
    assert res.evidence_probability == pytest.approx(0.31, abs=1e-12)
    assert res.marginals[0][1] == pytest.approx(0.3 * 0.8 / 0.31, abs=1e-12)


def test_polytree_single_root_marginal_is_prior():
    net = netzoo.chain(1, seed=4)
    res = polytree_query(net, {})
    np.testing.assert_allclose(res.marginals[0], net.cpts[0].table[0], atol=1e-12)


def test_polytree_rejects_loopy_input():
    with pytest.raises(NotSinglyConnectedError):
        polytree_query(netzoo.diamond(), {3: 1})


def test_polytree_on_relevant_subnetwork():
    dia = netzoo.diamond()
    sub = relevant_subnetwork(dia, [1])  # {A, B}
    res = polytree_query(sub, {1: 1})
    ro = enumerate_joint_query(dia, {1: 1})
    assert res.evidence_probability == pytest.approx(ro.evidence_probability, abs=1e-12)
    np.testing.assert_allclose(res.marginals[0], ro.marginals[0], atol=1e-12)


def test_polytree_matches_oracle_randomized():
    rng = np.random.default_rng(2)
    done = 0
    while done < 40:
        n = int(rng.integers(2, 11))
        net = generate_random_network(n, min(2, n - 1), 3,
                                      float(rng.choice([0.0, 0.4])),
                                      seed=int(rng.integers(2**31)))
        ev = netzoo.random_evidence(net, rng)
        if not is_singly_connected(net, split=ev.keys()):
            continue
        ro = enumerate_joint_query(net, ev)
        rp = polytree_query(net, ev)
        assert abs(ro.evidence_probability - rp.evidence_probability) <= 1e-9 * max(
            1.0, ro.evidence_probability
        )
        if ro.marginals is None:
            assert rp.marginals is None
        else:
            for v in ro.marginals:
                assert np.abs(ro.marginals[v] - rp.marginals[v]).max() <= 1e-9
        done += 1


def test_chain_rule_product_matches_joint():
    """Prefix conditionals multiply back to the joint prefix probability."""
    from loopcut.graphs import find_loop_cutset
    from loopcut.cutset import build_cutset_order

    rng = np.random.default_rng(5)
    done = 0
    while done < 10:
        net = netzoo.random_multiply_connected(rng, 4, 8, max_card=2)
        ev = netzoo.random_evidence(net, rng, p=0.25)
        cs = find_loop_cutset(net, ev)
        if not cs.members:
            continue
        order = build_cutset_order(net, ev, cs)
        vals = order.base_values(1)
        zr = np.random.default_rng(done)
        logp = 0.0
        for i, (v, kind) in enumerate(order.positions):
            dist, dead = order.pos_plan(i).run_target(vals[:, :i], v)
            if kind == "c":
                vals[0, i] = zr.integers(net.cards[v])
            val = int(vals[0, i])
            if dist[0, val] == 0.0:
                logp = -np.inf
                break
            logp += np.log(dist[0, val])
        assign = {int(v): int(vals[0, i]) for i, (v, _) in enumerate(order.positions)}
        expected = netzoo.joint_prob(net, assign)
        if logp == -np.inf:
            assert expected == pytest.approx(0.0, abs=1e-12)
        else:
            assert np.exp(logp) == pytest.approx(expected, rel=1e-9, abs=1e-12)
        done += 1


@pytest.mark.slow
def test_polytree_runtime_scales_linearly_on_chains():
    times = {}
    for n in (1000, 2000, 4000, 8000):
        net = netzoo.chain(n, seed=1)
        ev = {n - 1: 1}
        polytree_query(net, ev)  # warm-up
        reps = []
        for _ in range(5):
            t0 = time.perf_counter()
            polytree_query(net, ev)
            reps.append(time.perf_counter() - t0)
        times[n] = min(reps)
    assert times[2000] <= 2.5 * times[1000]
    assert times[4000] <= 2.5 * times[2000]
    assert times[8000] <= 2.5 * times[4000]
