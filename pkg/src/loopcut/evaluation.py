"""Metrics and empirical checks: MSE, KL distance, the cutset-proposal KL
dominance inequality, exact weight variances, and multi-scheme convergence
traces.

All inequality checks here work by exhaustive enumeration and are therefore
independent of the message-passing engine they scrutinize.
"""

from __future__ import annotations

import csv
import io
import itertools
import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import BayesNet, Evidence
from .graphs import Cutset, find_loop_cutset, topological_order
from .exact import (
    DEFAULT_STATE_CAP,
    StateSpaceError,
    bucket_elimination_query,
    enumerate_joint_table,
)
from .ibp import iterative_bp
from .sampling import RunResult, UnresolvedEstimateError, gibbs_run, lw_run
from .cutset import build_cutset_order, lcs_run, lwlc_run
from .cache import lwlc_buf_run

SCHEMES = ("lw", "gibbs", "lwlc", "lcs", "lwlc-buf", "ibp")


def mse(exact: dict[int, np.ndarray], estimate: dict[int, np.ndarray]) -> float:
    """Mean squared error over all non-evidence variable/value cells."""
    if set(exact) != set(estimate):
        raise ValueError("exact and estimated tables cover different variables")
    num = 0.0
    den = 0
    for v, row in exact.items():
        est = estimate[v]
        if est.shape != row.shape:
            raise ValueError(f"marginal size mismatch for variable {v}")
        num += float(((row - est) ** 2).sum())
        den += row.size
    return num / den


def kl(p: np.ndarray, q: np.ndarray) -> float:
    """Kullback-Leibler distance sum p log(p/q) in nats, with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise ValueError("distributions have different sizes")
    pos = p > 0
    if np.any(q[pos] == 0.0):
        raise ValueError("support violation: p > 0 where q = 0")
    return float((p[pos] * np.log(p[pos] / q[pos])).sum())


# ---------------------------------------------------------------------------
# Enumerated sampling distributions (oracle side of the inequality checks)
# ---------------------------------------------------------------------------

def _sliced_cpt(net: BayesNet, i: int, evidence: Evidence):
    scope = net.cpts[i].parents + (i,)
    arr = net.cpt_array(i)
    perm = np.argsort(np.asarray(scope))
    arr = np.transpose(arr, perm)
    ss = [scope[k] for k in perm]
    idx = tuple(evidence[v] if v in evidence else slice(None) for v in ss)
    rem = [v for v in ss if v not in evidence]
    return rem, np.asarray(arr[idx])


def lw_proposal_and_weights(
    net: BayesNet, evidence: Evidence, cap: int = DEFAULT_STATE_CAP
) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Q(Y) and w(Y) tables over the non-evidence variables, by enumeration."""
    free = [i for i in range(net.n) if i not in evidence]
    size = 1
    for i in free:
        size *= int(net.cards[i])
    if size > cap:
        raise StateSpaceError(f"free state space {size} exceeds cap {cap}")
    q = np.ones([int(net.cards[i]) for i in free])
    w = np.ones_like(q)
    for i in range(net.n):
        rem, sub = _sliced_cpt(net, i, evidence)
        shape = [1] * len(free)
        for v, s in zip(rem, sub.shape):
            shape[free.index(v)] = s
        target = q if i not in evidence else w
        target *= sub.reshape(shape)
    return free, q, w


def lwlc_proposal_and_weights(
    net: BayesNet, evidence: Evidence, cutset: Cutset | Iterable[int],
    cap: int = DEFAULT_STATE_CAP,
) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Q(C) and w(C) over cutset tuples (axes in sampling order), by enumeration.

    Q(c) is the product of true prefix conditionals along the topological
    order of Z = C + E; w(c) = P(c, e)/Q(c), with w = 0 on zero-proposal tuples.
    """
    joint = enumerate_joint_table(net, cap)
    members = tuple(cutset.members) if isinstance(cutset, Cutset) else tuple(cutset)
    pos_of = {v: k for k, v in enumerate(topological_order(net))}
    order = sorted(set(members) | set(evidence), key=lambda v: pos_of[v])
    kinds = ["e" if v in evidence else "c" for v in order]
    c_positions = [i for i, k in enumerate(kinds) if k == "c"]
    c_vars = [order[i] for i in c_positions]

    prefix_marg = []
    for i in range(len(order) + 1):
        keep = sorted(order[:i])
        axes = tuple(a for a in range(net.n) if a not in keep)
        prefix_marg.append((keep, joint.sum(axis=axes)))

    cards = [int(net.cards[v]) for v in c_vars]
    q = np.zeros(cards)
    w = np.zeros(cards)
    keep_z, mz = prefix_marg[len(order)]
    for cvals in itertools.product(*[range(c) for c in cards]):
        assign = dict(evidence)
        for k, v in enumerate(c_vars):
            assign[v] = cvals[k]
        qq = 1.0
        for i in c_positions:
            keep_n, mn = prefix_marg[i + 1]
            keep_d, md = prefix_marg[i]
            num = float(mn[tuple(assign[v] for v in keep_n)])
            den = float(md[tuple(assign[v] for v in keep_d)]) if keep_d else float(md)
            if den == 0.0:
                qq = 0.0
                break
            qq *= num / den
        q[cvals] = qq
        if qq > 0.0:
            w[cvals] = float(mz[tuple(assign[v] for v in keep_z)]) / qq
    return c_vars, q, w


@dataclass(frozen=True)
class KlReductionResult:
    kl_cutset: float
    kl_full: float
    holds: bool


def verify_kl_reduction(
    net: BayesNet, evidence: Evidence, cutset: Cutset | Iterable[int],
    cap: int = DEFAULT_STATE_CAP,
) -> KlReductionResult:
    """KL(P(C|e), Q(C)) <= KL(P(X|e), Q(X)), both sides by full enumeration."""
    joint = enumerate_joint_table(net, cap)
    sliced = joint[tuple(evidence.get(i, slice(None)) for i in range(net.n))]
    p_e = float(sliced.sum())
    if p_e == 0.0:
        raise ValueError("P(e) = 0: KL distances undefined")
    free, q_x, _ = lw_proposal_and_weights(net, evidence, cap)
    post_x = sliced / p_e
    kl_x = kl(post_x, q_x)

    c_vars, q_c, _ = lwlc_proposal_and_weights(net, evidence, cutset, cap)
    free_pos = {v: k for k, v in enumerate(free)}
    other_axes = tuple(k for k, v in enumerate(free) if v not in c_vars)
    post_c = post_x.sum(axis=other_axes) if other_axes else post_x
    kept_sorted = [v for v in free if v in c_vars]
    perm = [kept_sorted.index(v) for v in c_vars]
    post_c = np.transpose(post_c, perm)
    kl_c = kl(post_c, q_c)
    return KlReductionResult(kl_c, kl_x, kl_c <= kl_x + 1e-12)


def enumerated_weight_variances(
    net: BayesNet, evidence: Evidence, cutset: Cutset | Iterable[int],
    cap: int = DEFAULT_STATE_CAP,
) -> tuple[float, float]:
    """Exact Var_Q[w] for full-space LW and for cutset LW, by enumeration."""
    _, q_x, w_x = lw_proposal_and_weights(net, evidence, cap)
    p_e = float((q_x * w_x).sum())
    var_lw = float((q_x * w_x * w_x).sum()) - p_e * p_e
    _, q_c, w_c = lwlc_proposal_and_weights(net, evidence, cutset, cap)
    var_lwlc = float((q_c * w_c * w_c).sum()) - float((q_c * w_c).sum()) ** 2
    return var_lw, var_lwlc


def weight_variance_report(
    lw_weights: np.ndarray, lwlc_weights: np.ndarray
) -> tuple[float, float]:
    """Unbiased sample variances of the raw weights of the two schemes.

    Meaningful in aggregate across instances; a single pair of finite runs
    carries no guarantee.
    """
    lw_weights = np.asarray(lw_weights, dtype=np.float64)
    lwlc_weights = np.asarray(lwlc_weights, dtype=np.float64)
    if lw_weights.size == 0 or lwlc_weights.size == 0:
        raise ValueError("both weight arrays must be nonempty")
    var = lambda a: float(np.var(a, ddof=1)) if a.size > 1 else 0.0
    return var(lw_weights), var(lwlc_weights)


def random_leaf_evidence(
    net: BayesNet, rng: np.random.Generator, k: int = 1
) -> dict[int, int]:
    """Observed values for up to k leaf variables, drawn by forward sampling
    (which guarantees P(e) > 0)."""
    res = lw_run(net, {}, rng, samples=1, collect=True)
    row = res.extras["values"][0]
    leaves = [v for v in range(net.n) if not net.children[v]]
    chosen = rng.permutation(leaves)[:k]
    return {int(v): int(row[v]) for v in chosen}


# ---------------------------------------------------------------------------
# Convergence traces
# ---------------------------------------------------------------------------

TRACE_HEADER = "scheme,seed,t_ms,samples,rejected,mse,unresolved"


@dataclass(frozen=True)
class TraceRow:
    scheme: str
    seed: int
    t_ms: float
    samples: int
    rejected: int
    mse: float | None
    unresolved: bool


def result_to_rows(result: RunResult, seed: int, exact: dict[int, np.ndarray] | None) -> list[TraceRow]:
    rows = []
    for cp in result.checkpoints:
        val = None
        if exact is not None and cp.marginals is not None:
            val = mse(exact, cp.marginals)
        rows.append(
            TraceRow(result.scheme, seed, cp.elapsed_s * 1000.0, cp.samples,
                     cp.rejected, val, cp.marginals is None)
        )
    return rows


def write_trace_csv(rows: Sequence[TraceRow], out, stable: bool = False) -> None:
    own = isinstance(out, (str,))
    fh = open(out, "w", newline="") if own else out
    try:
        fh.write(TRACE_HEADER + "\n")
        for r in rows:
            t = 0.0 if stable else r.t_ms
            m = "" if r.mse is None else repr(float(r.mse))
            fh.write(f"{r.scheme},{r.seed},{t!r},{r.samples},{r.rejected},{m},{int(r.unresolved)}\n")
    finally:
        if own:
            fh.close()


def read_trace_csv(path_or_text: str) -> list[TraceRow]:
    if "\n" in path_or_text:
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="")
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_HEADER.split(","):
            raise ValueError(f"unexpected trace header: {reader.fieldnames}")
        rows = []
        for rec in reader:
            rows.append(
                TraceRow(
                    rec["scheme"], int(rec["seed"]), float(rec["t_ms"]),
                    int(rec["samples"]), int(rec["rejected"]),
                    float(rec["mse"]) if rec["mse"] else None,
                    rec["unresolved"] == "1",
                )
            )
        return rows


def summarize(rows: Sequence[TraceRow]) -> dict[str, dict]:
    """Per scheme: resolved-count k, mean rejection rate and mean final MSE
    over resolved (scheme, seed) runs; unresolved runs are excluded from
    averages and reported through k."""
    finals: dict[tuple[str, int], TraceRow] = {}
    for r in rows:
        key = (r.scheme, r.seed)
        if key not in finals or r.samples >= finals[key].samples:
            finals[key] = r
    out: dict[str, dict] = {}
    for (scheme, _), r in sorted(finals.items()):
        entry = out.setdefault(scheme, {"k_resolved": 0, "n_runs": 0, "_rej": [], "_mse": []})
        entry["n_runs"] += 1
        if not r.unresolved:
            entry["k_resolved"] += 1
            if r.samples > 0:
                entry["_rej"].append(r.rejected / r.samples)
            if r.mse is not None:
                entry["_mse"].append(r.mse)
    for scheme, entry in out.items():
        rej, msev = entry.pop("_rej"), entry.pop("_mse")
        entry["mean_rejection_rate"] = float(np.mean(rej)) if rej else None
        entry["final_mse_mean"] = float(np.mean(msev)) if msev else None
    return out


def run_scheme(
    scheme: str,
    net: BayesNet,
    evidence: Evidence,
    seed: int,
    samples: int | None = None,
    seconds: float | None = None,
    checkpoint_every: int | None = None,
    cutset: Cutset | None = None,
    burn_in: int = 200,
    chains: int = 32,
    learn_dead_ends: bool = True,
    batch: int = 1024,
) -> RunResult:
    """Dispatch one sampling run; `ibp` yields a single-checkpoint pseudo-run."""
    rng = np.random.default_rng(seed)
    if scheme == "lw":
        return lw_run(net, evidence, rng, samples=samples, seconds=seconds,
                      checkpoint_every=checkpoint_every)
    if scheme == "gibbs":
        return gibbs_run(net, evidence, samples, burn_in, rng, chains=chains,
                         checkpoint_every=checkpoint_every, seconds=seconds)
    if scheme in ("lwlc", "lcs", "lwlc-buf"):
        cs = cutset if cutset is not None else find_loop_cutset(net, evidence)
        order = build_cutset_order(net, evidence, cs)
        if scheme == "lwlc":
            return lwlc_run(net, order, rng, samples=samples, seconds=seconds,
                            checkpoint_every=checkpoint_every, batch=batch)
        if scheme == "lcs":
            return lcs_run(net, order, samples, burn_in, rng, chains=chains,
                           checkpoint_every=checkpoint_every, seconds=seconds)
        return lwlc_buf_run(net, order, rng, samples=samples, seconds=seconds,
                            checkpoint_every=checkpoint_every,
                            learn_dead_ends=learn_dead_ends, batch=batch)
    if scheme == "ibp":
        t0 = time.perf_counter()
        res = iterative_bp(net, evidence)
        dt = time.perf_counter() - t0
        from .sampling import Checkpoint, EstimatorState

        state = EstimatorState({})
        cp = Checkpoint(0, dt, 0, res.marginals)
        out = RunResult("ibp", state, [cp], dt, {"converged": res.converged})
        return out
    raise ValueError(f"unknown scheme '{scheme}'")


def run_comparison(
    net: BayesNet,
    evidence: Evidence,
    schemes: Sequence[str],
    seeds: Sequence[int],
    samples: int | None = None,
    seconds: float | None = None,
    checkpoint_every: int | None = None,
    exact_marginals: dict[int, np.ndarray] | None = None,
    threads: int = 1,
    **kwargs,
) -> tuple[list[TraceRow], dict[str, dict]]:
    """One trace per (scheme, seed) with per-checkpoint MSE against the exact
    reference (bucket elimination unless provided)."""
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme '{s}'")
    if exact_marginals is None:
        ref = bucket_elimination_query(net, evidence)
        if ref.marginals is None:
            raise ValueError("P(e) = 0: exact reference undefined")
        exact_marginals = ref.marginals
    jobs = [(s, seed) for s in schemes for seed in seeds]

    def one(job):
        s, seed = job
        try:
            res = run_scheme(s, net, evidence, seed, samples=samples, seconds=seconds,
                             checkpoint_every=checkpoint_every, **kwargs)
        except UnresolvedEstimateError:
            return [TraceRow(s, seed, 0.0, 0, 0, None, True)]
        return result_to_rows(res, seed, exact_marginals)

    rows: list[TraceRow] = []
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as ex:
            for chunk in ex.map(one, jobs):
                rows.extend(chunk)
    else:
        for job in jobs:
            rows.extend(one(job))
    return rows, summarize(rows)
