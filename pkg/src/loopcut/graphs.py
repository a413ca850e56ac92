"""Graph algorithms over networks: orders, pruning, singly-connectedness, loop cutsets.

Instantiating a variable splits it: the variable keeps its incoming edges while
each outgoing edge is served by an independent parentless clone.  For
connectivity checks this is equivalent to deleting the variable's outgoing
edges, which is how every split here is implemented.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import BayesNet, NetworkValidationError


@dataclass(frozen=True)
class Cutset:
    """Ordered set of variable ids, disjoint from any evidence it was built for."""

    members: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


@dataclass(frozen=True)
class Subnetwork:
    """An ancestrally closed restriction of a network to `kept` variables."""

    net: BayesNet
    kept: frozenset[int]


def topological_order(net: BayesNet) -> list[int]:
    """Parents before children, ties broken by ascending id."""
    indeg = [len(p) for p in net.parents]
    heap = [i for i in range(net.n) if indeg[i] == 0]
    heapq.heapify(heap)
    out: list[int] = []
    while heap:
        u = heapq.heappop(heap)
        out.append(u)
        for w in net.children[u]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, w)
    if len(out) != net.n:
        raise NetworkValidationError("cycle detected during topological ordering")
    return out


def ancestral_closure(net: BayesNet, targets: Iterable[int]) -> frozenset[int]:
    kept = set(targets)
    stack = list(kept)
    while stack:
        u = stack.pop()
        for p in net.parents[u]:
            if p not in kept:
                kept.add(p)
                stack.append(p)
    return frozenset(kept)


def relevant_subnetwork(net: BayesNet, targets: Iterable[int]) -> Subnetwork:
    """Iteratively drop barren variables: keep targets and their ancestors."""
    targets = list(targets)
    for t in targets:
        if not (0 <= t < net.n):
            raise ValueError(f"target id {t} out of range")
    return Subnetwork(net, ancestral_closure(net, targets))


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        """Merge; return False when a and b were already connected (cycle)."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _skeleton_is_forest(net: BayesNet, kept: frozenset[int] | None, split: frozenset[int]) -> bool:
    """Forest test on the undirected skeleton, with out-edges of `split` removed."""
    uf = _UnionFind(net.n)
    for child in range(net.n):
        if kept is not None and child not in kept:
            continue
        for p in net.parents[child]:
            if kept is not None and p not in kept:
                continue
            if p in split:
                continue  # split vertices keep only incoming edges
            if not uf.union(p, child):
                return False
    return True


def is_singly_connected(net_or_sub: BayesNet | Subnetwork, split: Iterable[int] = ()) -> bool:
    """True iff the (sub)network's undirected skeleton is a forest.

    `split` lists instantiated variables whose outgoing edges are removed
    before the test.
    """
    if isinstance(net_or_sub, Subnetwork):
        net, kept = net_or_sub.net, net_or_sub.kept
    else:
        net, kept = net_or_sub, None
    return _skeleton_is_forest(net, kept, frozenset(split))


def validate_loop_cutset(net: BayesNet, zs: Iterable[int]) -> bool:
    """True iff instantiating every variable in `zs` leaves a forest.

    Equivalent to the loop-cutset condition: every loop retains a cycle in the
    split graph exactly when all its `zs` members are sinks for that loop.
    """
    return _skeleton_is_forest(net, None, frozenset(zs))


def _bridge_edges(nodes: set[int], adj: list[set[int]]) -> set[frozenset[int]]:
    """Bridges of the undirected graph induced on `nodes` (iterative lowlink DFS)."""
    disc: dict[int, int] = {}
    low: dict[int, int] = {}
    bridges: set[frozenset[int]] = set()
    counter = 0
    for s in nodes:
        if s in disc:
            continue
        stack: list[tuple[int, int | None, Iterable[int]]] = [(s, None, iter(sorted(adj[s] & nodes)))]
        disc[s] = low[s] = counter
        counter += 1
        while stack:
            v, parent, it = stack[-1]
            advanced = False
            for w in it:
                if w == parent:
                    parent = None  # skip the tree edge back exactly once
                    continue
                if w in disc:
                    low[v] = min(low[v], disc[w])
                else:
                    disc[w] = low[w] = counter
                    counter += 1
                    stack.append((w, v, iter(sorted(adj[w] & nodes))))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                if stack:
                    u = stack[-1][0]
                    low[u] = min(low[u], low[v])
                    if low[v] > disc[u]:
                        bridges.add(frozenset((u, v)))
    return bridges


def find_loop_cutset(net: BayesNet, observed: Iterable[int] = ()) -> Cutset:
    """Greedy loop cutset disjoint from `observed` (observed nodes split for free).

    Repeatedly strips degree-<=1 skeleton nodes, then splits the highest-degree
    remaining vertex that has an outgoing non-bridge edge, i.e. is an allowed
    vertex of some surviving loop (ties by ascending id).
    """
    observed = frozenset(observed)
    adj: list[set[int]] = [set() for _ in range(net.n)]
    out: list[set[int]] = [set() for _ in range(net.n)]
    for child in range(net.n):
        for p in net.parents[child]:
            adj[p].add(child)
            adj[child].add(p)
            out[p].add(child)

    def split(v: int) -> None:
        for w in out[v]:
            adj[v].discard(w)
            adj[w].discard(v)
        out[v].clear()

    for v in observed:
        split(v)

    alive = set(range(net.n))

    def strip() -> None:
        stack = [v for v in alive if len(adj[v] & alive) <= 1]
        while stack:
            v = stack.pop()
            if v not in alive:
                continue
            nbrs = adj[v] & alive
            if len(nbrs) > 1:
                continue
            alive.discard(v)
            for w in nbrs:
                if len(adj[w] & alive) <= 1:
                    stack.append(w)

    members: list[int] = []
    while True:
        strip()
        if not any(len(adj[v] & alive) >= 2 for v in alive):
            break
        bridges = _bridge_edges(alive, adj)
        candidates = [
            v
            for v in alive
            if v not in observed
            and any(w in alive and frozenset((v, w)) not in bridges for w in out[v])
        ]
        if not candidates:
            break  # every remaining edge is a bridge: no loops left
        best = max(candidates, key=lambda v: (len(adj[v] & alive), -v))
        members.append(best)
        split(best)
    return Cutset(tuple(sorted(members)))


def check_prefix_polytrees(net: BayesNet, ordered_zs: Sequence[int]) -> bool:
    """Every prefix of `ordered_zs` induces a singly-connected relevant subnetwork
    once the prefix itself is instantiated."""
    kept: set[int] = set()
    for j in range(len(ordered_zs)):
        kept |= ancestral_closure(net, [ordered_zs[j]])
        split = frozenset(ordered_zs[: j + 1])
        if not _skeleton_is_forest(net, frozenset(kept), split):
            return False
    return True
