"""Iterative (loopy) belief propagation with a synchronous flood schedule.

Exact on poly-trees; approximate and possibly non-convergent on loopy
networks.  The evidence-probability output is the Bethe free-energy estimate
exp(-F), which coincides with P(e) on trees and is flagged approximate.
"""

from __future__ import annotations

import math

import numpy as np

from .model import BayesNet, Evidence, check_evidence
from .exact import QueryResult, factor_from_cpt


def iterative_bp(
    net: BayesNet,
    evidence: Evidence,
    max_iters: int = 200,
    tol: float = 1e-8,
) -> QueryResult:
    """Flood-schedule sum-product over the evidence-sliced factor graph.

    Returns marginals for all non-evidence variables (normalized even without
    convergence) and the Bethe estimate of P(e); `converged` reports whether
    the maximum message change fell below `tol` within `max_iters` sweeps.
    """
    check_evidence(net, evidence)
    sliced = [factor_from_cpt(net, i, evidence) for i in range(net.n)]
    factors = [f for f in sliced if f.scope]
    log_scalar = 0.0
    zero_scalar = False
    for f in sliced:
        if not f.scope:
            val = float(f.values)
            if val == 0.0:
                zero_scalar = True
            else:
                log_scalar += math.log(val)
    free = sorted({v for f in factors for v in f.scope})
    cards = {v: int(net.cards[v]) for v in free}

    # messages keyed by (factor index, var, direction)
    msg_fv = {(fi, v): np.full(cards[v], 1.0 / cards[v]) for fi, f in enumerate(factors) for v in f.scope}
    msg_vf = {(fi, v): np.full(cards[v], 1.0 / cards[v]) for fi, f in enumerate(factors) for v in f.scope}
    var_factors: dict[int, list[int]] = {v: [] for v in free}
    for fi, f in enumerate(factors):
        for v in f.scope:
            var_factors[v].append(fi)

    def factor_to_var(fi: int, v: int) -> np.ndarray:
        f = factors[fi]
        arr = f.values
        for k, u in enumerate(f.scope):
            if u == v:
                continue
            shape = [1] * len(f.scope)
            shape[k] = cards[u]
            arr = arr * msg_vf[(fi, u)].reshape(shape)
        axes = tuple(k for k, u in enumerate(f.scope) if u != v)
        out = arr.sum(axis=axes) if axes else arr
        s = out.sum()
        return out / s if s > 0 else np.zeros_like(out)

    converged = False
    for _ in range(max_iters):
        delta = 0.0
        new_fv = {}
        for key in msg_fv:
            m = factor_to_var(*key)
            delta = max(delta, float(np.abs(m - msg_fv[key]).max()))
            new_fv[key] = m
        msg_fv = new_fv
        new_vf = {}
        for (fi, v) in msg_vf:
            m = np.ones(cards[v])
            for fj in var_factors[v]:
                if fj != fi:
                    m = m * msg_fv[(fj, v)]
            s = m.sum()
            m = m / s if s > 0 else np.zeros_like(m)
            delta = max(delta, float(np.abs(m - msg_vf[(fi, v)]).max()))
            new_vf[(fi, v)] = m
        msg_vf = new_vf
        if delta < tol:
            converged = True
            break

    marginals: dict[int, np.ndarray] = {}
    degenerate = zero_scalar
    for v in free:
        b = np.ones(cards[v])
        for fi in var_factors[v]:
            b = b * msg_fv[(fi, v)]
        s = b.sum()
        if s > 0:
            marginals[v] = b / s
        else:
            degenerate = True
            marginals[v] = np.full(cards[v], 1.0 / cards[v])

    # Bethe free energy from the current beliefs
    bethe = 0.0
    for fi, f in enumerate(factors):
        bf = f.values.copy()
        for k, u in enumerate(f.scope):
            shape = [1] * len(f.scope)
            shape[k] = cards[u]
            bf = bf * msg_vf[(fi, u)].reshape(shape)
        s = bf.sum()
        if s <= 0:
            degenerate = True
            continue
        bf = bf / s
        pos = bf > 0
        bethe += float((bf[pos] * (np.log(bf[pos]) - np.log(f.values[pos]))).sum())
    for v in free:
        b = marginals[v]
        pos = b > 0
        bethe += (1 - len(var_factors[v])) * float((b[pos] * np.log(b[pos])).sum())

    if zero_scalar:
        p_e = 0.0
    else:
        p_e = math.exp(-bethe + log_scalar)
    if degenerate:
        return QueryResult(0.0 if zero_scalar else p_e, None, converged, approximate=True)
    return QueryResult(p_e, marginals, converged, approximate=True)
