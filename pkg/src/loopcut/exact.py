"""Exact inference: brute-force joint enumeration and bucket elimination.

The enumeration oracle materializes the full joint table and is deliberately
independent of the factor machinery used by bucket elimination, so the two
can cross-check each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BayesNet, Evidence, check_evidence

DEFAULT_STATE_CAP = 2**22


class StateSpaceError(ValueError):
    """The joint state space exceeds the enumeration cap."""


@dataclass(frozen=True)
class QueryResult:
    """P(e) plus posterior marginals for every non-evidence variable.

    `marginals` is None when P(e) = 0 (posteriors undefined).
    """

    evidence_probability: float
    marginals: dict[int, np.ndarray] | None
    converged: bool = True
    approximate: bool = False


# ---------------------------------------------------------------------------
# Joint enumeration oracle
# ---------------------------------------------------------------------------

def enumerate_joint_table(net: BayesNet, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """Full joint P(x) as an ndarray with one axis per variable (id order)."""
    size = net.state_space_size()
    if size > cap:
        raise StateSpaceError(f"state space {size} exceeds cap {cap}")
    cards = [int(c) for c in net.cards]
    joint = np.ones(cards, dtype=np.float64)
    for i in range(net.n):
        cpt = net.cpts[i]
        scope = cpt.parents + (i,)
        arr = net.cpt_array(i)
        perm = np.argsort(np.asarray(scope))
        arr = np.transpose(arr, perm)
        sorted_scope = tuple(scope[k] for k in perm)
        shape = [1] * net.n
        for v in sorted_scope:
            shape[v] = cards[v]
        joint = joint * arr.reshape(shape)
    return joint


def enumerate_joint_query(
    net: BayesNet, evidence: Evidence, cap: int = DEFAULT_STATE_CAP
) -> QueryResult:
    """Brute-force P(e) and posterior marginals by summing the joint table."""
    check_evidence(net, evidence)
    joint = enumerate_joint_table(net, cap)
    index = tuple(evidence.get(i, slice(None)) for i in range(net.n))
    sub = joint[index]
    free = [i for i in range(net.n) if i not in evidence]
    p_e = float(sub.sum())
    if p_e == 0.0:
        return QueryResult(0.0, None)
    marginals = {}
    for k, i in enumerate(free):
        axes = tuple(a for a in range(len(free)) if a != k)
        marginals[i] = sub.sum(axis=axes) / p_e
    return QueryResult(p_e, marginals)


# ---------------------------------------------------------------------------
# Factors and bucket elimination
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Factor:
    """Nonnegative table over an ascending scope; axis k indexes scope[k]."""

    scope: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        assert list(self.scope) == sorted(self.scope)
        assert self.values.ndim == len(self.scope)


def factor_from_cpt(net: BayesNet, i: int, evidence: Evidence) -> Factor:
    """CPT of variable i with evidence variables sliced out of the scope."""
    scope = net.cpts[i].parents + (i,)
    arr = net.cpt_array(i)
    perm = np.argsort(np.asarray(scope))
    arr = np.transpose(arr, perm)
    sorted_scope = [scope[k] for k in perm]
    index = tuple(evidence[v] if v in evidence else slice(None) for v in sorted_scope)
    remaining = tuple(v for v in sorted_scope if v not in evidence)
    return Factor(remaining, np.asarray(arr[index]))  # asarray keeps 0-d scalars 0-d


def factor_product(a: Factor, b: Factor) -> Factor:
    scope = tuple(sorted(set(a.scope) | set(b.scope)))
    pos = {v: k for k, v in enumerate(scope)}

    def align(f: Factor) -> np.ndarray:
        shape = [1] * len(scope)
        for v, size in zip(f.scope, f.values.shape):
            shape[pos[v]] = size
        return f.values.reshape(shape)

    return Factor(scope, align(a) * align(b))


def factor_sum_out(f: Factor, var: int) -> Factor:
    k = f.scope.index(var)
    return Factor(f.scope[:k] + f.scope[k + 1 :], f.values.sum(axis=k))


def min_fill_order(scopes: list[tuple[int, ...]], to_eliminate: set[int]) -> list[int]:
    """Greedy min-fill elimination order over the interaction graph; ties by id."""
    adj: dict[int, set[int]] = {v: set() for v in to_eliminate}
    for scope in scopes:
        inside = [v for v in scope if v in to_eliminate]
        for a in inside:
            for b in inside:
                if a != b:
                    adj[a].add(b)
    order = []
    remaining = set(to_eliminate)
    while remaining:
        best, best_fill = None, None
        for v in sorted(remaining):
            nbrs = adj[v] & remaining
            fill = 0
            nl = sorted(nbrs)
            for x in range(len(nl)):
                for y in range(x + 1, len(nl)):
                    if nl[y] not in adj[nl[x]]:
                        fill += 1
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
        nbrs = adj[best] & remaining
        for a in nbrs:
            for b in nbrs:
                if a != b:
                    adj[a].add(b)
        remaining.discard(best)
        order.append(best)
    return order


def _eliminate(factors: list[Factor], order: list[int]) -> list[Factor]:
    factors = list(factors)
    for v in order:
        bucket = [f for f in factors if v in f.scope]
        factors = [f for f in factors if v not in f.scope]
        if not bucket:
            continue
        prod = bucket[0]
        for f in bucket[1:]:
            prod = factor_product(prod, f)
        factors.append(factor_sum_out(prod, v))
    return factors


def _scalar_product(factors: list[Factor]) -> float:
    out = 1.0
    for f in factors:
        assert f.scope == ()
        out *= float(f.values)
    return out


def bucket_elimination_query(net: BayesNet, evidence: Evidence) -> QueryResult:
    """Exact P(e) and posterior marginals via bucket elimination (min-fill order)."""
    check_evidence(net, evidence)
    base = [factor_from_cpt(net, i, evidence) for i in range(net.n)]
    free = [i for i in range(net.n) if i not in evidence]

    p_e = _scalar_product(_eliminate(base, min_fill_order([f.scope for f in base], set(free))))
    if p_e == 0.0:
        return QueryResult(0.0, None)
    marginals = {}
    for q in free:
        others = set(free) - {q}
        left = _eliminate(base, min_fill_order([f.scope for f in base], others))
        prod = Factor((q,), np.ones(int(net.cards[q])))
        for f in left:
            prod = factor_product(prod, f)
        marginals[q] = prod.values / p_e
    return QueryResult(p_e, marginals)
