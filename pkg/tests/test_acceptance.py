"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line
(run with `pytest tests/test_acceptance.py -v -s`)."""

import math
import time

import numpy as np
import pytest

from loopcut.model import generate_random_network
from loopcut import graphs
from loopcut.exact import bucket_elimination_query, enumerate_joint_query, enumerate_joint_table
from loopcut.polytree import polytree_query
from loopcut.sampling import estimate_marginals, gibbs_run, lw_run, rejection_rate
from loopcut.cutset import build_cutset_order, lcs_run, lwlc_run
from loopcut.cache import SampleTree, lwlc_buf_run
from loopcut.evaluation import (
    enumerated_weight_variances,
    random_leaf_evidence,
    summarize,
    result_to_rows,
    verify_kl_reduction,
)
import netzoo

pytestmark = pytest.mark.acceptance


def _report(name: str, ok: bool, detail: str = ""):
    print(f"[{name}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{name} failed: {detail}"


def _random_net(rng, n_lo=2, n_hi=12, max_card=3, determinism=(0.0, 0.0, 0.5)):
    n = int(rng.integers(n_lo, n_hi + 1))
    return generate_random_network(
        n, min(3, n - 1), max_card, float(rng.choice(determinism)),
        seed=int(rng.integers(2**31)),
    )


def test_a1_oracle_equivalence_of_exact_engines():
    rng = np.random.default_rng(101)
    n_pt = 0
    worst_pe, worst_marg = 0.0, 0.0
    for _ in range(200):
        net = _random_net(rng)
        ev = netzoo.random_evidence(net, rng, p=0.3)
        ro = enumerate_joint_query(net, ev)
        rb = bucket_elimination_query(net, ev)
        rel = abs(ro.evidence_probability - rb.evidence_probability) / max(
            ro.evidence_probability, 1e-300
        ) if ro.evidence_probability > 0 else abs(rb.evidence_probability)
        worst_pe = max(worst_pe, rel)
        if ro.marginals is None:
            assert rb.marginals is None
        else:
            for v in ro.marginals:
                worst_marg = max(worst_marg, float(np.abs(ro.marginals[v] - rb.marginals[v]).max()))
        if graphs.is_singly_connected(net, split=ev.keys()):
            n_pt += 1
            rp = polytree_query(net, ev)
            rel = abs(ro.evidence_probability - rp.evidence_probability) / max(
                ro.evidence_probability, 1e-300
            ) if ro.evidence_probability > 0 else abs(rp.evidence_probability)
            worst_pe = max(worst_pe, rel)
            if ro.marginals is not None:
                for v in ro.marginals:
                    worst_marg = max(
                        worst_marg, float(np.abs(ro.marginals[v] - rp.marginals[v]).max())
                    )
    ok = worst_pe <= 1e-9 and worst_marg <= 1e-9
    _report("A1", ok,
            f"200 nets ({n_pt} poly-tree instances): max rel dP(e)={worst_pe:.2e}, "
            f"max marginal dev={worst_marg:.2e}")


def test_a2_prefix_polytree_structural_suite():
    rng = np.random.default_rng(202)
    bad = 0
    for _ in range(200):
        net = netzoo.random_multiply_connected(rng, 4, 14)
        ev = netzoo.random_evidence(net, rng, p=0.2)
        cs = graphs.find_loop_cutset(net, ev)
        zs = set(cs.members) | set(ev)
        pos = {v: k for k, v in enumerate(graphs.topological_order(net))}
        ordered = sorted(zs, key=lambda v: pos[v])
        if not (graphs.validate_loop_cutset(net, zs)
                and graphs.check_prefix_polytrees(net, ordered)):
            bad += 1
    _report("A2", bad == 0, f"200 multiply-connected nets, {bad} structural failures")


def test_a3_importance_identity_per_sample():
    rng = np.random.default_rng(303)
    checked = 0
    worst = 0.0
    nets = 0
    while nets < 20:
        net = _random_net(rng, 4, 9, max_card=2, determinism=(0.0, 0.3))
        if graphs.is_singly_connected(net):
            continue
        ev = netzoo.random_evidence(net, rng, p=0.25)
        cs = graphs.find_loop_cutset(net, ev)
        order = build_cutset_order(net, ev, cs)
        res = lwlc_run(net, order, np.random.default_rng(nets), samples=50, collect=True)
        joint = enumerate_joint_table(net)
        for t in range(50):
            assign = {v: int(res.extras["values"][t, i])
                      for i, (v, _) in enumerate(order.positions)}
            index = tuple(assign.get(i, slice(None)) for i in range(net.n))
            p_ce = float(joint[index].sum())
            w = math.exp(res.extras["log_weights"][t])
            q = float(np.prod(res.extras["step_probs"][t]))
            worst = max(worst, abs(w * q - p_ce) / max(p_ce, 1e-300) if p_ce > 0 else abs(w * q))
            checked += 1
        nets += 1
    _report("A3", worst <= 1e-9, f"{checked} samples over {nets} nets, worst rel dev={worst:.2e}")


def test_a4_sampler_consistency_at_2e5():
    rng = np.random.default_rng(404)
    cells = {s: [0, 0] for s in ("lw", "lwlc", "gibbs", "lcs")}
    for k in range(10):
        net = netzoo.random_multiply_connected(rng, 8, 11, max_card=3, determinism=0.0)
        ev = random_leaf_evidence(net, rng, k=2)
        ora = enumerate_joint_query(net, ev)
        cs = graphs.find_loop_cutset(net, ev)
        order = build_cutset_order(net, ev, cs)
        T = 200_000
        runs = {
            "lw": lw_run(net, ev, np.random.default_rng(k), samples=T),
            "lwlc": lwlc_run(net, order, np.random.default_rng(k), samples=T, batch=4096),
            "gibbs": gibbs_run(net, ev, T, 300, np.random.default_rng(k), chains=64),
            "lcs": lcs_run(net, order, T, 300, np.random.default_rng(k), chains=64),
        }
        for scheme, res in runs.items():
            m = estimate_marginals(res.state)
            for v in ora.marginals:
                for val in range(int(net.cards[v])):
                    ok = abs(m[v][val] - ora.marginals[v][val]) <= 0.01
                    cells[scheme][0] += ok
                    cells[scheme][1] += 1
    detail = ", ".join(
        f"{s}: {p}/{n} ({p/n:.1%})" for s, (p, n) in cells.items()
    )
    ok = all(p / n >= 0.95 for p, n in cells.values())
    _report("A4", ok, detail)


@pytest.fixture(scope="module")
def a5_instances():
    """50 enumerable instances: <=10 binary variables, single-leaf evidence."""
    rng = np.random.default_rng(505)
    out = []
    while len(out) < 50:
        net = netzoo.random_multiply_connected(rng, 4, 10, max_card=2)
        ev = random_leaf_evidence(net, rng, k=1)
        joint = enumerate_joint_table(net)
        if joint[tuple(ev.get(i, slice(None)) for i in range(net.n))].sum() <= 0:
            continue
        cs = graphs.find_loop_cutset(net, ev)
        out.append((net, ev, cs))
    return out


def test_a5_cutset_proposal_kl_dominance(a5_instances):
    violations = 0
    margins = []
    for net, ev, cs in a5_instances:
        r = verify_kl_reduction(net, ev, cs)
        margins.append(r.kl_full - r.kl_cutset)
        if not r.holds:
            violations += 1
    _report("A5", violations == 0,
            f"50 instances, {violations} violations, min KL gap={min(margins):.3e}")


def test_a6_exact_weight_variance_ordering(a5_instances):
    violations = 0
    worst = 0.0
    for net, ev, cs in a5_instances:
        var_lw, var_lwlc = enumerated_weight_variances(net, ev, cs)
        if var_lwlc > var_lw + 1e-12:
            violations += 1
            worst = max(worst, var_lwlc - var_lw)
    _report("A6", violations == 0, f"50 instances, {violations} violations (worst excess {worst:.2e})")


def test_a7_memo_purity():
    rng = np.random.default_rng(707)
    net = netzoo.random_multiply_connected(rng, 8, 12, determinism=0.4)
    ev = random_leaf_evidence(net, rng, k=2)
    cs = graphs.find_loop_cutset(net, ev)
    order = build_cutset_order(net, ev, cs)
    a = lwlc_run(net, order, np.random.default_rng(5), samples=10_000, collect=True)
    b = lwlc_buf_run(net, order, np.random.default_rng(5), samples=10_000,
                     collect=True, learn_dead_ends=False)
    same_assign = np.array_equal(a.extras["values"], b.extras["values"])
    wdiff = float(np.abs(np.exp(a.extras["log_weights"]) - np.exp(b.extras["log_weights"])).max())
    _report("A7", same_assign and wdiff <= 1e-12,
            f"assignments identical={same_assign}, max |dw|={wdiff:.2e} over 1e4 samples")


def test_a8_dead_end_learning_reduces_rejection():
    rng = np.random.default_rng(808)
    good = 0
    tried = 0
    details = []
    while tried < 10:
        net = generate_random_network(12, 3, 2, 0.5, seed=int(rng.integers(2**31)))
        if graphs.is_singly_connected(net):
            continue
        ev = random_leaf_evidence(net, rng, k=3)
        ora = enumerate_joint_query(net, ev)
        if ora.evidence_probability <= 0 or ora.marginals is None:
            continue
        cs = graphs.find_loop_cutset(net, ev)
        if not cs.members:
            continue
        tried += 1
        order = build_cutset_order(net, ev, cs)
        plain = lwlc_run(net, order, np.random.default_rng(1), samples=20_000)
        buf = lwlc_buf_run(net, order, np.random.default_rng(1), samples=20_000,
                           checkpoint_every=2_000, batch=512)
        first = buf.checkpoints[0]
        last = buf.checkpoints[-1]
        rr_first = first.rejected / first.samples
        rr_last = last.rejected / last.samples
        rr_plain = rejection_rate(plain.state)
        m = estimate_marginals(buf.state)
        err = max(float(np.abs(m[v] - ora.marginals[v]).max()) for v in ora.marginals)
        ok = rr_last <= rr_first + 1e-12 and rr_last <= rr_plain + 1e-12 and err <= 0.02
        good += ok
        details.append(f"{rr_plain:.2f}->{rr_last:.2f}, err {err:.3f}")
    _report("A8", good >= 9, f"{good}/10 nets ok ({'; '.join(details[:4])}...)")


def test_a9_cache_speedup_after_warmup():
    net, leaves = netzoo.diamond_chain(7, 30, seed=1)
    rng = np.random.default_rng(5)
    ev = {}
    row = lw_run(net, {}, rng, samples=1, collect=True).extras["values"][0]
    ev = {int(v): int(row[v]) for v in leaves}
    cs = graphs.find_loop_cutset(net, ev)
    order = build_cutset_order(net, ev, cs)
    tuple_space = 1
    for v in cs.members:
        tuple_space *= int(net.cards[v])
    assert tuple_space <= 128

    tree = SampleTree(order, learn_dead_ends=False)
    lwlc_buf_run(net, order, np.random.default_rng(0), samples=2_000, cache=tree, batch=1024)
    lwlc_run(net, order, np.random.default_rng(0), samples=256, batch=256)  # compile warm-up

    T = 8_192
    t0 = time.perf_counter()
    lwlc_run(net, order, np.random.default_rng(1), samples=T, batch=1024)
    plain_rate = T / (time.perf_counter() - t0)
    t0 = time.perf_counter()
    lwlc_buf_run(net, order, np.random.default_rng(1), samples=T, cache=tree, batch=1024)
    buf_rate = T / (time.perf_counter() - t0)
    ratio = buf_rate / plain_rate
    _report("A9", ratio >= 2.0,
            f"net n={net.n}, tuple space {tuple_space}: "
            f"plain {plain_rate:,.0f}/s vs buffered {buf_rate:,.0f}/s ({ratio:.2f}x)")


def test_a10_per_sample_time_scales_linearly():
    times = {}
    for n in (1000, 2000, 4000):
        net = netzoo.single_loop_chain(n, seed=2)
        ev = {n - 1: 1}
        cs = graphs.find_loop_cutset(net, ev)
        order = build_cutset_order(net, ev, cs)
        lwlc_run(net, order, np.random.default_rng(0), samples=64, batch=64)  # warm-up
        reps = []
        for _ in range(5):
            t0 = time.perf_counter()
            lwlc_run(net, order, np.random.default_rng(1), samples=512, batch=256)
            reps.append((time.perf_counter() - t0) / 512)
        times[n] = min(reps)
    r1 = times[2000] / times[1000]
    r2 = times[4000] / times[2000]
    _report("A10", r1 <= 2.5 and r2 <= 2.5,
            f"per-sample time ratios: 2k/1k={r1:.2f}, 4k/2k={r2:.2f} (cap 2.5)")


def test_a11_rejection_bookkeeping():
    rng = np.random.default_rng(1111)
    wins = 0
    rows = []
    done = 0
    while done < 30:
        net = generate_random_network(12, 3, 2, 0.5, seed=int(rng.integers(2**31)))
        if graphs.is_singly_connected(net):
            continue
        ev = netzoo.rare_leaf_evidence(net, rng, k=4)
        cs = graphs.find_loop_cutset(net, ev)
        order = build_cutset_order(net, ev, cs)
        rl = lw_run(net, ev, np.random.default_rng(done), samples=4_000)
        rc = lwlc_run(net, order, np.random.default_rng(done), samples=2_000)
        rr_lw = 1.0 if rl.unresolved else rejection_rate(rl.state)
        rr_lc = 1.0 if rc.unresolved else rejection_rate(rc.state)
        wins += rr_lc < rr_lw
        rows.extend(result_to_rows(rl, done, None))
        rows.extend(result_to_rows(rc, done, None))
        done += 1
    summary = summarize(rows)
    k_lw = summary["lw"]["k_resolved"]
    k_lc = summary["lwlc"]["k_resolved"]
    _report("A11", wins >= 24,
            f"LWLC rejects less than LW in {wins}/30 instances; "
            f"k(LW)={k_lw}/30, k(LWLC)={k_lc}/30, "
            f"mean R: lw={summary['lw']['mean_rejection_rate']:.2f}, "
            f"lwlc={summary['lwlc']['mean_rejection_rate']:.2f}")
