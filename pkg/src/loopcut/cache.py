"""LWLC-BUF: a search tree over cutset assignments caching sampling
distributions and evidence factors, with dead-end zeroing.

A node at depth d holds, for the prefix c_1..c_d: the log of the evidence
factors between cutset positions d and d+1, and the sampling distribution of
cutset variable d+1.  Distributions are stored exactly as computed; when a
value is zeroed the effective distribution is renormalized from the retained
base values, and the renormalizer multiplies the weight of later samples drawn
through the node (draw-time proposal, so each sample's importance identity
stays exact).

A value is only ever zeroed on proof: an evidence factor or a child
distribution that the prefix message pass evaluated to exactly zero, which
certifies that the prefix cannot extend to a positive-mass full tuple.
"""

from __future__ import annotations

import math

import numpy as np

from .model import BayesNet
from .cutset import CutsetOrder, _run_cutset_sampler, MixingMemo
from .sampling import RunResult


class SampleTreeNode:
    __slots__ = (
        "depth", "value", "parent", "children",
        "base_dist", "alive", "dist", "log_renorm",
        "ev_logf", "dead", "visits",
    )

    def __init__(self, depth: int, value: int | None, parent: "SampleTreeNode | None"):
        self.depth = depth
        self.value = value
        self.parent = parent
        self.children: dict[int, SampleTreeNode] = {}
        self.base_dist: np.ndarray | None = None
        self.alive: np.ndarray | None = None
        self.dist: np.ndarray | None = None
        self.log_renorm = 0.0
        self.ev_logf: float | None = None
        self.dead = False
        self.visits = 0

    def set_dist(self, dist: np.ndarray) -> None:
        self.base_dist = dist
        self.alive = np.ones(dist.shape[0], dtype=bool)
        self.dist = dist  # same object until something is zeroed
        self.log_renorm = 0.0
        if float(dist.sum()) == 0.0:
            self.dead = True

    def refresh_dist(self) -> None:
        """Recompute the effective distribution from retained base values."""
        eff = self.base_dist * self.alive
        s = float(eff.sum())
        if s == 0.0:
            self.dist = np.zeros_like(self.base_dist)
            self.log_renorm = -np.inf
            self.dead = True
        else:
            self.dist = eff / s
            self.log_renorm = math.log(s)


class SampleTree:
    """Root of the cutset search tree plus cache accounting."""

    def __init__(self, order: CutsetOrder, node_cap: int = 1_000_000,
                 learn_dead_ends: bool = True):
        self.order = order
        self.depth_max = len(order.cutset_positions)
        self.node_cap = node_cap
        self.learn_dead_ends = learn_dead_ends
        self.root = SampleTreeNode(0, None, None)
        self.n_nodes = 1
        self.unique_tuples = 0
        self.hits = 0
        self.misses = 0
        self.dead_ends_marked = 0
        self.globally_dead = False

    def child(self, node: SampleTreeNode, value: int) -> SampleTreeNode | None:
        kid = node.children.get(value)
        if kid is None:
            if self.n_nodes >= self.node_cap:
                return None  # cache full: read-mostly from here on
            kid = SampleTreeNode(node.depth + 1, value, node)
            node.children[value] = kid
            self.n_nodes += 1
            if kid.depth == self.depth_max:
                self.unique_tuples += 1
        return kid

    def walk(self, path: tuple[int, ...]) -> SampleTreeNode:
        node = self.root
        for v in path:
            node = self.child(node, v)
            if node is None:
                raise KeyError(f"path {path} exceeds the node cap")
        return node

    def mark_node_dead(self, node: SampleTreeNode) -> None:
        """Zero this node out of its parent's distribution, propagating upward."""
        node.dead = True
        if node.base_dist is not None:
            node.dist = np.zeros_like(node.base_dist)
            node.log_renorm = -np.inf
        if node.parent is None:
            self.globally_dead = True
            return
        parent = node.parent
        if parent.alive is None:
            # parent distribution never computed: remember via a dead child only
            return
        if not parent.alive[node.value]:
            return  # idempotent
        parent.alive[node.value] = False
        self.dead_ends_marked += 1
        parent.refresh_dist()
        if parent.dead:
            self.mark_node_dead(parent)

    def stats(self) -> dict:
        lookups = self.hits + self.misses
        return {
            "nodes": self.n_nodes,
            "unique_tuples": self.unique_tuples,
            "hit_ratio": self.hits / lookups if lookups else 0.0,
            "dead_ends_marked": self.dead_ends_marked,
            "global_unsatisfiable": self.globally_dead,
        }


def lookup_or_compute(tree: SampleTree, path: tuple[int, ...], compute) -> tuple[np.ndarray, bool]:
    """Distribution of the next cutset variable after `path`; memoized.

    Returns (distribution, hit flag).  `compute` is only invoked on a miss.
    """
    node = tree.walk(tuple(path))
    node.visits += 1
    if node.dist is None:
        node.set_dist(np.asarray(compute(), dtype=np.float64))
        tree.misses += 1
        return node.dist, False
    tree.hits += 1
    return node.dist, True


def mark_dead_end(tree: SampleTree, path: tuple[int, ...]) -> None:
    """Record that `path` cannot extend to a positive-mass tuple.

    The terminal node is created if the draw itself was never cached; its
    parent must have a stored distribution for the zeroing to take effect.
    """
    if not path:
        tree.mark_node_dead(tree.root)
        return
    tree.mark_node_dead(tree.walk(tuple(path)))


class TreeSource:
    """Distribution source for the cutset runner that reads through a SampleTree.

    Misses are computed once per distinct prefix (grouped within the batch)
    with the same message passes the direct source uses, so cached and direct
    runs produce bitwise-identical distributions.
    """

    def __init__(self, order: CutsetOrder, tree: SampleTree):
        if tree.order is not order:
            raise ValueError("cache was built for a different cutset order")
        self.order = order
        self.tree = tree
        self._nodes: list[SampleTreeNode | None] = []

    def begin_batch(self, B: int, vals: np.ndarray) -> None:
        self._nodes = [self.tree.root] * B
        self.tree.root.visits += B

    def _compute_ev(self, nodes_missing: dict[SampleTreeNode, int], d: int, vals: np.ndarray) -> None:
        rows = np.fromiter(nodes_missing.values(), dtype=np.int64)
        sub = vals[rows]
        total = np.zeros(rows.size)
        for p in self.order.spans[d]:
            var = self.order.positions[p][0]
            dist, _ = self.order.pos_plan(p).run_target(sub[:, :p], var)
            with np.errstate(divide="ignore"):
                total += np.log(dist[:, self.order.evidence[var]])
        for j, node in enumerate(nodes_missing):
            node.ev_logf = float(total[j])
            if node.ev_logf == -np.inf and self.tree.learn_dead_ends:
                self.tree.mark_node_dead(node)

    def span_factors(self, d: int, vals: np.ndarray):
        span = self.order.spans[d]
        if not span:
            return []
        B = vals.shape[0]
        missing: dict[SampleTreeNode, int] = {}
        adhoc_rows = []
        for b, node in enumerate(self._nodes):
            if node is None:
                adhoc_rows.append(b)
            elif node.ev_logf is None and node not in missing:
                missing[node] = b
        if missing:
            self._compute_ev(missing, d, vals)
        lf = np.empty(B)
        for b, node in enumerate(self._nodes):
            lf[b] = 0.0 if node is None else node.ev_logf
        if adhoc_rows:
            rows = np.asarray(adhoc_rows, dtype=np.int64)
            sub = vals[rows]
            total = np.zeros(rows.size)
            for p in span:
                var = self.order.positions[p][0]
                dist, _ = self.order.pos_plan(p).run_target(sub[:, :p], var)
                with np.errstate(divide="ignore"):
                    total += np.log(dist[:, self.order.evidence[var]])
            lf[rows] = total
        return [(span[0], lf)]

    def cutset_dist(self, d: int, vals: np.ndarray):
        order = self.order
        i = order.cutset_positions[d]
        var = order.positions[i][0]
        plan = order.pos_plan(i)
        card = int(order.net.cards[var])
        B = vals.shape[0]
        missing: dict[SampleTreeNode, int] = {}
        adhoc_rows = []
        for b, node in enumerate(self._nodes):
            if node is None:
                adhoc_rows.append(b)
            elif node.dist is None:
                if node not in missing:
                    missing[node] = b
            if node is not None:
                node.visits += 1
        if missing:
            rows = np.fromiter(missing.values(), dtype=np.int64)
            dists, _ = plan.run_target(vals[rows][:, :i], var)
            for j, node in enumerate(missing):
                node.set_dist(dists[j].copy())
                if node.dead and self.tree.learn_dead_ends:
                    self.tree.mark_node_dead(node)
        self.tree.misses += len(missing)
        self.tree.hits += B - len(adhoc_rows) - len(missing)
        dist = np.empty((B, card))
        log_ren = np.zeros(B)
        for b, node in enumerate(self._nodes):
            if node is not None:
                dist[b] = node.dist
                log_ren[b] = node.log_renorm
        if adhoc_rows:
            rows = np.asarray(adhoc_rows, dtype=np.int64)
            d2, _ = plan.run_target(vals[rows][:, :i], var)
            dist[rows] = d2
            log_ren[rows] = 0.0
        return dist, log_ren

    def note_draw(self, d: int, drawn: np.ndarray, vals: np.ndarray) -> None:
        tree = self.tree
        nodes = self._nodes
        vlist = drawn.tolist()
        for b, node in enumerate(nodes):
            if node is not None:
                nodes[b] = tree.child(node, vlist[b])

    def finish_batch(self) -> None:
        self._nodes = []


def lwlc_buf_run(
    net: BayesNet,
    order: CutsetOrder,
    rng: np.random.Generator,
    samples: int | None = None,
    seconds: float | None = None,
    checkpoint_every: int | None = None,
    batch: int = 1024,
    learn_dead_ends: bool = True,
    cache: SampleTree | None = None,
    node_cap: int = 1_000_000,
    collect: bool = False,
    mix_memo: MixingMemo | None = None,
) -> RunResult:
    """LWLC with buffered sampling distributions (and, optionally, dead-end
    learning).  Pass an existing `cache` to continue filling a warm tree."""
    tree = cache if cache is not None else SampleTree(order, node_cap, learn_dead_ends)
    tree.learn_dead_ends = learn_dead_ends
    source = TreeSource(order, tree)
    result = _run_cutset_sampler(
        order, rng, source, "lwlc-buf",
        samples=samples, seconds=seconds, checkpoint_every=checkpoint_every,
        batch=batch, collect=collect, mix_memo=mix_memo,
        extras={"cache": tree},
    )
    result.extras["cache_stats"] = tree.stats()
    return result
