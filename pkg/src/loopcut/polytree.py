"""Exact sum-product on singly-connected (sub)networks, batched over clamp values.

A plan is compiled once for a fixed structure: a kept (ancestrally closed)
variable set and an ordered tuple of clamped variables.  Running the plan takes
a (B, n_clamped) matrix of clamp values and answers, per row, one of:

  * the conditional distribution of a target variable,
  * the log probability mass of the clamped assignment,
  * posterior marginals for every free variable.

Clamping is implemented by slicing CPT axes, which realizes the usual node
split (the clamped variable keeps incoming edges; children see a constant).
The factor graph over free variables must be a forest; compilation raises
otherwise.  All array operations are elementwise or reduce over card axes
only, so results for a given row do not depend on the batch it rides in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BayesNet, Evidence
from .graphs import Subnetwork
from .exact import QueryResult


class NotSinglyConnectedError(ValueError):
    """The clamped structure still contains an undirected cycle."""


@dataclass(eq=False)
class _Recipe:
    """One CPT with clamped axes moved to the front for per-row slicing."""

    child: int
    table: np.ndarray            # axes: clamped scope vars first, then free
    clamp_cols: tuple[int, ...]  # columns of the values matrix, aligned with lead axes
    free_vars: tuple[int, ...]

    def batch(self, values: np.ndarray) -> np.ndarray:
        if self.clamp_cols:
            return self.table[tuple(values[:, c] for c in self.clamp_cols)]
        shape = (values.shape[0],) + self.table.shape
        return np.broadcast_to(self.table, shape)


def _normalize_rows(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = arr.sum(axis=1)
    out = np.divide(arr, norm[:, None], out=np.zeros_like(arr), where=norm[:, None] > 0)
    return out, norm


class PolytreePlan:
    """Compiled message schedule for one (kept, clamped) structure."""

    def __init__(
        self,
        net: BayesNet,
        kept: frozenset[int] | None = None,
        clamped: tuple[int, ...] = (),
        root_hint: int | None = None,
    ):
        self.net = net
        self.kept = frozenset(range(net.n)) if kept is None else frozenset(kept)
        self.clamped = tuple(clamped)
        clamp_pos = {v: j for j, v in enumerate(self.clamped)}
        if len(clamp_pos) != len(self.clamped):
            raise ValueError("clamped variables must be distinct")

        recipes: list[_Recipe] = []
        scalars: list[_Recipe] = []
        for i in sorted(self.kept):
            scope = net.cpts[i].parents + (i,)
            for s in scope:
                if s not in self.kept:
                    raise ValueError(f"kept set is not ancestrally closed (missing {s})")
            arr = net.cpt_array(i)
            cl = [k for k, s in enumerate(scope) if s in clamp_pos]
            fr = [k for k, s in enumerate(scope) if s not in clamp_pos]
            rec = _Recipe(
                child=i,
                table=np.ascontiguousarray(np.transpose(arr, cl + fr)),
                clamp_cols=tuple(clamp_pos[scope[k]] for k in cl),
                free_vars=tuple(scope[k] for k in fr),
            )
            (recipes if rec.free_vars else scalars).append(rec)
        self.recipes = recipes
        self.scalars = scalars
        self.free_vars = sorted(self.kept - set(self.clamped))
        self._card = {v: int(net.cards[v]) for v in self.free_vars}
        self._build_schedule(root_hint)

    # -- compilation -------------------------------------------------------

    def _build_schedule(self, root_hint: int | None) -> None:
        var_factors: dict[int, list[int]] = {v: [] for v in self.free_vars}
        for fi, rec in enumerate(self.recipes):
            for v in rec.free_vars:
                var_factors[v].append(fi)

        self._slots: dict[tuple[str, int, int], int] = {}

        def slot(kind: str, frm: int, to: int) -> int:
            key = (kind, frm, to)
            if key not in self._slots:
                self._slots[key] = len(self._slots)
            return self._slots[key]

        var_child_factors: dict[int, list[int]] = {}
        var_parent_factor: dict[int, int | None] = {}
        factor_child_vars: dict[int, list[int]] = {}
        factor_parent_var: dict[int, int] = {}

        seen_v: set[int] = set()
        seen_f: set[int] = set()
        self.components: list[list[int]] = []  # BFS node lists, vars only
        self.component_roots: list[int] = []

        start_order = list(self.free_vars)
        if root_hint is not None:
            if root_hint not in var_factors:
                raise ValueError(f"root {root_hint} is not a free kept variable")
            start_order = [root_hint] + [v for v in start_order if v != root_hint]

        for v0 in start_order:
            if v0 in seen_v:
                continue
            comp_vars = [v0]
            seen_v.add(v0)
            var_parent_factor[v0] = None
            queue = [v0]
            while queue:
                v = queue.pop(0)
                var_child_factors[v] = []
                for fi in var_factors[v]:
                    if fi == var_parent_factor.get(v):
                        continue
                    if fi in seen_f:
                        raise NotSinglyConnectedError(
                            f"cycle through variable {v} in the clamped factor graph"
                        )
                    seen_f.add(fi)
                    var_child_factors[v].append(fi)
                    factor_parent_var[fi] = v
                    factor_child_vars[fi] = []
                    for u in self.recipes[fi].free_vars:
                        if u == v:
                            continue
                        if u in seen_v:
                            raise NotSinglyConnectedError(
                                f"cycle through variable {u} in the clamped factor graph"
                            )
                        seen_v.add(u)
                        var_parent_factor[u] = fi
                        factor_child_vars[fi].append(u)
                        comp_vars.append(u)
                        queue.append(u)
            self.components.append(comp_vars)
            self.component_roots.append(v0)

        self._var_child_factors = var_child_factors
        self._var_parent_factor = var_parent_factor
        self._factor_child_vars = factor_child_vars
        self._factor_parent_var = factor_parent_var

        # Collect pass: reversed BFS guarantees children come first.  Ops are
        # (kind, ...) tuples with precomputed axis bookkeeping.
        self.collect_ops_per_component: list[list[tuple]] = []
        for comp in self.components:
            ops: list[tuple] = []
            bfs_nodes: list[tuple[str, int]] = []
            for v in comp:
                bfs_nodes.append(("v", v))
                for fi in var_child_factors[v]:
                    bfs_nodes.append(("f", fi))
            for kind, node in reversed(bfs_nodes):
                if kind == "v":
                    fp = var_parent_factor[node]
                    if fp is None:
                        continue
                    ins = [slot("fv", fi, node) for fi in var_child_factors[node]]
                    ops.append(("v2f", ins, slot("vf", node, fp)))
                else:
                    vp = factor_parent_var[node]
                    ops.append(self._factor_op(node, vp, factor_child_vars[node],
                                               [("vf", u, node) for u in factor_child_vars[node]],
                                               slot))
            self.collect_ops_per_component.append(ops)

        # Distribute pass: BFS order, parents before children.
        self.distribute_ops_per_component: list[list[tuple]] = []
        for comp in self.components:
            ops = []
            for v in comp:
                fp = var_parent_factor[v]
                kids = var_child_factors[v]
                for fj in kids:
                    ins = [slot("fv", fi, v) for fi in kids if fi != fj]
                    if fp is not None:
                        ins.append(slot("fv_d", fp, v))
                    ops.append(("v2f", ins, slot("vf_d", v, fj)))
                for fj in kids:
                    for u in self._factor_child_vars[fj]:
                        pairs = [("vf", w, fj) for w in self._factor_child_vars[fj] if w != u]
                        pairs.append(("vf_d", v, fj))
                        ops.append(self._factor_op(fj, u, None, pairs, slot, dist=True))
            self.distribute_ops_per_component.append(ops)

        # Belief composition per free variable.
        self.belief_slots: dict[int, list[int]] = {}
        for v in self.free_vars:
            ins = [self._slots[("fv", fi, v)] for fi in var_child_factors[v]]
            fp = var_parent_factor[v]
            if fp is not None:
                ins.append(self._slots[("fv_d", fp, v)])
            self.belief_slots[v] = ins
        self.n_slots = len(self._slots)

    def _factor_op(self, fi, out_var, _kids, in_keys, slot, dist=False):
        rec = self.recipes[fi]
        axis_of = {v: k for k, v in enumerate(rec.free_vars)}
        in_pairs = []
        for key in in_keys:
            kind, frm, to = key
            template = [1] * len(rec.free_vars)
            template[axis_of[frm]] = self._card[frm]
            in_pairs.append((slot(kind, frm, to), tuple(template)))
        sum_axes = tuple(k + 1 for k, v in enumerate(rec.free_vars) if v != out_var)
        out_key = ("fv_d" if dist else "fv", fi, out_var)
        return ("f2v", fi, in_pairs, sum_axes, slot(*out_key))

    # -- execution ---------------------------------------------------------

    def _run_ops(self, ops, slots, values, log_norm=None):
        B = values.shape[0]
        for op in ops:
            if op[0] == "v2f":
                _, ins, out = op
                msgs = [slots[s] for s in ins if slots[s] is not None]
                if not msgs:
                    slots[out] = None
                    continue
                acc = msgs[0]
                for m in msgs[1:]:
                    acc = acc * m
                slots[out] = acc
            else:
                _, fi, in_pairs, sum_axes, out = op
                arr = self.recipes[fi].batch(values)
                for s, template in in_pairs:
                    m = slots[s]
                    if m is not None:
                        arr = arr * m.reshape((B,) + template)
                msg = arr.sum(axis=sum_axes) if sum_axes else np.array(arr, copy=True)
                msg, norm = _normalize_rows(msg)
                if log_norm is not None:
                    with np.errstate(divide="ignore"):
                        log_norm += np.log(norm)
                slots[out] = msg

    def _belief(self, v, slots, B):
        msgs = [slots[s] for s in self.belief_slots[v] if slots[s] is not None]
        if not msgs:
            return np.ones((B, self._card[v]))
        acc = msgs[0]
        for m in msgs[1:]:
            acc = acc * m
        return acc

    def run_target(self, values: np.ndarray, target: int) -> tuple[np.ndarray, np.ndarray]:
        """Normalized conditional of `target` given the clamp row; also a dead mask.

        Only the target's component is processed: scalar factors and other
        components cancel out of the conditional whenever the clamp row has
        positive mass (true for sampler prefixes by construction; `run_mass`
        sees every zero).  Rows whose zero shows inside the target's component
        come back as all-zero distributions with the dead flag set.
        """
        comp_idx = 0
        if self.component_roots[comp_idx] != target:
            comp_idx = next(
                k for k, comp in enumerate(self.components) if target in comp
            )
        slots: list = [None] * self.n_slots
        self._run_ops(self.collect_ops_per_component[comp_idx], slots, values)
        if self.component_roots[comp_idx] != target:
            self._run_ops(self.distribute_ops_per_component[comp_idx], slots, values)
        belief = self._belief(target, slots, values.shape[0])
        dist, norm = _normalize_rows(belief)
        return dist, norm == 0.0

    def run_mass(self, values: np.ndarray) -> np.ndarray:
        """log P(clamped row) over the kept set; -inf for zero-mass rows."""
        B = values.shape[0]
        log_mass = np.zeros(B)
        with np.errstate(divide="ignore"):
            for rec in self.scalars:
                log_mass += np.log(rec.batch(values))
            slots: list = [None] * self.n_slots
            for comp_idx, root in enumerate(self.component_roots):
                self._run_ops(
                    self.collect_ops_per_component[comp_idx], slots, values, log_norm=log_mass
                )
                log_mass += np.log(self._belief(root, slots, B).sum(axis=1))
        return log_mass

    def run_marginals(
        self, values: np.ndarray, want_mass: bool = False
    ) -> tuple[dict[int, np.ndarray], np.ndarray | None, np.ndarray]:
        """Posterior marginals for every free variable, batched.

        Returns (marginals, log_mass or None, dead mask).
        """
        B = values.shape[0]
        slots: list = [None] * self.n_slots
        log_mass = np.zeros(B) if want_mass else None
        if want_mass:
            with np.errstate(divide="ignore"):
                for rec in self.scalars:
                    log_mass += np.log(rec.batch(values))
        for comp_idx, root in enumerate(self.component_roots):
            self._run_ops(
                self.collect_ops_per_component[comp_idx], slots, values, log_norm=log_mass
            )
            if want_mass:
                with np.errstate(divide="ignore"):
                    log_mass += np.log(self._belief(root, slots, B).sum(axis=1))
            self._run_ops(self.distribute_ops_per_component[comp_idx], slots, values)
        dead = np.zeros(B, dtype=bool)
        marginals = {}
        for v in self.free_vars:
            dist, norm = _normalize_rows(self._belief(v, slots, B))
            marginals[v] = dist
            dead |= norm == 0.0
        return marginals, log_mass, dead


def polytree_query(net_or_sub: BayesNet | Subnetwork, evidence: Evidence) -> QueryResult:
    """Exact P(e) and posterior marginals on a singly-connected (sub)network.

    Runtime is linear in the size of the kept structure.  Raises
    NotSinglyConnectedError when the evidence-split skeleton has a cycle.
    """
    if isinstance(net_or_sub, Subnetwork):
        net, kept = net_or_sub.net, net_or_sub.kept
    else:
        net, kept = net_or_sub, frozenset(range(net_or_sub.n))
    for v in evidence:
        if v not in kept:
            raise ValueError(f"evidence variable {v} is outside the subnetwork")
    clamped = tuple(sorted(evidence))
    plan = PolytreePlan(net, kept, clamped)
    values = np.array([[evidence[v] for v in clamped]], dtype=np.int64)
    if values.size == 0:
        values = values.reshape(1, 0)
    marginals, log_mass, dead = plan.run_marginals(values, want_mass=True)
    if dead[0] or log_mass[0] == -np.inf:
        return QueryResult(0.0, None)
    p_e = float(np.exp(log_mass[0]))
    return QueryResult(p_e, {v: marginals[v][0] for v in plan.free_vars})
