"""Likelihood weighting over a loop cutset (LWLC) and Gibbs-based loop-cutset
sampling (LCS).

Variables of Z = C + E are processed in topological order.  At a cutset
position the sampling conditional given the instantiated prefix is read off a
single message pass over the prefix relevant subnetwork (never a ratio of two
joints); at an evidence position the same read-off multiplies the weight.
Every cutset draw consumes exactly one uniform in sample-major order, so
batched execution and one-sample-at-a-time execution see the same stream.

Non-cutset marginals use the mixing estimator: the weighted average of exact
conditionals given each sampled cutset tuple.  Those conditionals depend only
on the tuple, so they are memoized per tuple (capped); estimates are identical
to recomputing per sample.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import BayesNet, Evidence, check_evidence
from .graphs import (
    Cutset,
    ancestral_closure,
    check_prefix_polytrees,
    topological_order,
    validate_loop_cutset,
)
from .polytree import PolytreePlan
from .sampling import (
    Checkpoint,
    EstimatorState,
    RunResult,
    WeightedSample,
    _Chunker,
    _resolve_budget,
    _snapshot,
    draw_categorical,
)


class InvalidCutsetError(ValueError):
    """The given variable set is not a valid loop cutset for the network."""


@dataclass(eq=False)
class CutsetOrder:
    """Topologically ordered Z = C + E with per-position prefix structures."""

    net: BayesNet
    evidence: dict[int, int]
    positions: tuple[tuple[int, str], ...]   # (variable id, 'c' | 'e')
    prefix_kept: tuple[frozenset[int], ...]  # relevant subnetwork per position
    _plans: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return len(self.positions)

    @cached_property
    def variables(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.positions)

    @cached_property
    def cutset_positions(self) -> tuple[int, ...]:
        return tuple(i for i, (_, k) in enumerate(self.positions) if k == "c")

    @cached_property
    def cutset_vars(self) -> tuple[int, ...]:
        return tuple(self.positions[i][0] for i in self.cutset_positions)

    @cached_property
    def spans(self) -> tuple[tuple[int, ...], ...]:
        """Evidence position indices grouped between consecutive cutset positions."""
        out: list[list[int]] = [[] for _ in range(len(self.cutset_positions) + 1)]
        d = 0
        for i, (_, kind) in enumerate(self.positions):
            if kind == "c":
                d += 1
            else:
                out[d].append(i)
        return tuple(tuple(s) for s in out)

    def pos_plan(self, i: int) -> PolytreePlan:
        if ("pos", i) not in self._plans:
            var = self.positions[i][0]
            clamped = self.variables[:i]
            self._plans[("pos", i)] = PolytreePlan(
                self.net, self.prefix_kept[i], clamped, root_hint=var
            )
        return self._plans[("pos", i)]

    def mixing_plan(self) -> PolytreePlan:
        """Whole-net plan with all of Z clamped; serves marginal and mass modes."""
        if "mix" not in self._plans:
            self._plans["mix"] = PolytreePlan(self.net, None, self.variables)
        return self._plans["mix"]

    mass_plan = mixing_plan

    def base_values(self, B: int) -> np.ndarray:
        """Fresh (B, m) values matrix with evidence columns pre-filled."""
        vals = np.zeros((B, self.m), dtype=np.int64)
        for i, (v, kind) in enumerate(self.positions):
            if kind == "e":
                vals[:, i] = self.evidence[v]
        return vals


def build_cutset_order(net: BayesNet, evidence: Evidence, cutset: Cutset) -> CutsetOrder:
    """Validate C against the evidence-extended loop-cutset condition and order Z."""
    check_evidence(net, evidence)
    members = tuple(cutset.members) if isinstance(cutset, Cutset) else tuple(cutset)
    if set(members) & set(evidence):
        raise InvalidCutsetError("cutset overlaps evidence variables")
    zs = set(members) | set(evidence)
    if not validate_loop_cutset(net, zs):
        raise InvalidCutsetError("instantiating the given set does not break every loop")
    pos_of = {v: k for k, v in enumerate(topological_order(net))}
    ordered = sorted(zs, key=lambda v: pos_of[v])
    if not check_prefix_polytrees(net, ordered):
        raise InvalidCutsetError("a prefix relevant subnetwork is not singly connected")
    kept: set[int] = set()
    prefix_kept = []
    for v in ordered:
        kept |= ancestral_closure(net, [v])
        prefix_kept.append(frozenset(kept))
    positions = tuple((v, "e" if v in evidence else "c") for v in ordered)
    return CutsetOrder(net, dict(evidence), positions, tuple(prefix_kept))


# ---------------------------------------------------------------------------
# Distribution sources: recompute every sample, or read through a cache
# ---------------------------------------------------------------------------

class DirectSource:
    """Plain LWLC: every distribution and evidence factor is recomputed."""

    def __init__(self, order: CutsetOrder):
        self.order = order

    def begin_batch(self, B: int, vals: np.ndarray) -> None:
        pass

    def span_factors(self, d: int, vals: np.ndarray):
        """Yield (order position, per-sample log factor) for evidence span d."""
        out = []
        for p in self.order.spans[d]:
            var, _ = self.order.positions[p]
            dist, _ = self.order.pos_plan(p).run_target(vals[:, :p], var)
            with np.errstate(divide="ignore"):
                out.append((p, np.log(dist[:, self.order.evidence[var]])))
        return out

    def cutset_dist(self, d: int, vals: np.ndarray):
        i = self.order.cutset_positions[d]
        var = self.order.positions[i][0]
        dist, _ = self.order.pos_plan(i).run_target(vals[:, :i], var)
        return dist, np.zeros(vals.shape[0])

    def note_draw(self, d: int, drawn: np.ndarray, vals: np.ndarray) -> None:
        pass

    def finish_batch(self) -> None:
        pass


class MixingMemo:
    """Per-cutset-tuple memo of the exact conditionals P(x_i | c, e).

    Contributions are aggregated per distinct tuple: sum_t w_t P(x|c_t) equals
    sum_c (sum of w over samples hitting c) * P(x|c), so a batch costs one
    unique() plus one tiny matrix product per variable.
    """

    def __init__(self, order: CutsetOrder, cap: int = 65536):
        self.order = order
        self.plan = order.mixing_plan()
        self.cap = cap
        self.vars = tuple(self.plan.free_vars)
        self.index: dict[int, int] = {}
        self._rows: dict[int, list[np.ndarray]] = {v: [] for v in self.vars}
        self._mat: dict[int, np.ndarray] = {}
        self._dirty = False
        self.cut_cols = np.asarray(order.cutset_positions, dtype=np.int64)
        cards = [int(order.net.cards[v]) for v in order.cutset_vars]
        strides = np.ones(len(cards), dtype=np.int64)
        for k in range(len(cards) - 2, -1, -1):
            strides[k] = strides[k + 1] * cards[k + 1]
        self._strides = strides

    def _compute(self, vals_rows: np.ndarray) -> dict[int, np.ndarray]:
        marg, _, _ = self.plan.run_marginals(vals_rows)
        return marg

    def weighted_rows(self, vals: np.ndarray, w: np.ndarray) -> dict[int, np.ndarray]:
        """sum_t w_t * P(x_i | c_t, e) per mixing variable, over the batch."""
        if not self.vars:
            return {}
        alive = w > 0.0
        if not alive.any():
            return {}
        if self.cut_cols.size == 0:
            total = float(w.sum())
            if 0 not in self.index:
                marg = self._compute(vals[:1])
                self.index[0] = 0
                for v in self.vars:
                    self._rows[v].append(marg[v][0])
                self._dirty = True
            return {v: total * self._rows[v][0] for v in self.vars}
        codes = vals[:, self.cut_cols] @ self._strides
        ucodes, inverse = np.unique(codes[alive], return_inverse=True)
        agg = np.bincount(inverse, weights=w[alive], minlength=ucodes.size)
        missing = [int(c) for c in ucodes if int(c) not in self.index]
        if missing and len(self.index) + len(missing) <= self.cap:
            first_row_of = {}
            arows = np.nonzero(alive)[0]
            for r, c in zip(arows, codes[alive]):
                if int(c) in self.index or int(c) in first_row_of:
                    continue
                first_row_of[int(c)] = r
            rows_idx = np.fromiter((first_row_of[c] for c in missing), dtype=np.int64)
            marg = self._compute(vals[rows_idx])
            for j, c in enumerate(missing):
                self.index[c] = len(self.index)
                for v in self.vars:
                    self._rows[v].append(marg[v][j].copy())
            self._dirty = True
        if all(int(c) in self.index for c in ucodes):
            if self._dirty or not self._mat:
                self._mat = {v: np.asarray(self._rows[v]) for v in self.vars}
                self._dirty = False
            sel = np.fromiter((self.index[int(c)] for c in ucodes), dtype=np.int64)
            return {v: agg @ self._mat[v][sel] for v in self.vars}
        # over cap: compute this batch's unique tuples ad hoc, without storing
        reps = np.empty(ucodes.size, dtype=np.int64)
        seen: dict[int, int] = {}
        arows = np.nonzero(alive)[0]
        for r, c in zip(arows, codes[alive]):
            if int(c) not in seen:
                seen[int(c)] = r
        for j, c in enumerate(ucodes):
            reps[j] = seen[int(c)]
        marg = self._compute(vals[reps])
        return {v: agg @ marg[v] for v in self.vars}


# ---------------------------------------------------------------------------
# Core runner
# ---------------------------------------------------------------------------

def _run_cutset_sampler(
    order: CutsetOrder,
    rng: np.random.Generator,
    source,
    scheme: str,
    samples: int | None = None,
    seconds: float | None = None,
    checkpoint_every: int | None = None,
    batch: int = 1024,
    collect: bool = False,
    mix_memo: MixingMemo | None = None,
    extras: dict | None = None,
) -> RunResult:
    samples, seconds = _resolve_budget(samples, seconds)
    net = order.net
    n_c = len(order.cutset_positions)
    delta_vars = {v: int(net.cards[v]) for v in order.cutset_vars}
    memo = mix_memo if mix_memo is not None else MixingMemo(order)
    mix_vars = {v: int(net.cards[v]) for v in memo.vars}
    state = EstimatorState(delta_vars, mix_vars)
    delta_cols = [order.cutset_vars.index(v) for v in state.delta_order]
    cut_cols = list(order.cutset_positions)

    checkpoints: list[Checkpoint] = []
    coll_vals, coll_w, coll_steps, coll_dead = [], [], [], []
    chunker = _Chunker(samples, seconds, checkpoint_every, batch)
    while True:
        B = chunker.next_chunk()
        if B == 0:
            break
        vals = order.base_values(B)
        log_w = np.zeros(B)
        dead_at = np.full(B, -1, dtype=np.int64)
        steps = np.ones((B, n_c))
        U = rng.random((B, n_c))
        source.begin_batch(B, vals)

        def absorb(pairs):
            nonlocal log_w
            for pos, lf in pairs:
                new = (lf == -np.inf) & (dead_at < 0)
                dead_at[new] = pos
                log_w = log_w + lf

        absorb(source.span_factors(0, vals))
        for d in range(n_c):
            dist, log_ren = source.cutset_dist(d, vals)
            zero = dist.sum(axis=1) == 0.0
            if zero.any():
                dist = dist.copy()
                dist[zero] = 0.0
                dist[zero, 0] = 1.0
                pos = order.cutset_positions[d]
                new = zero & (dead_at < 0)
                dead_at[new] = pos
            log_w = np.where(zero, -np.inf, log_w + log_ren)
            drawn = draw_categorical(dist, U[:, d])
            vals[:, order.cutset_positions[d]] = drawn
            steps[:, d] = dist[np.arange(B), drawn]
            source.note_draw(d, drawn, vals)
            absorb(source.span_factors(d + 1, vals))
        source.finish_batch()

        cut_vals = vals[:, cut_cols]
        state.add_batch(cut_vals[:, delta_cols], log_w, lambda w: memo.weighted_rows(vals, w))
        if collect:
            coll_vals.append(vals)
            coll_w.append(log_w)
            coll_steps.append(steps)
            coll_dead.append(dead_at)
        if chunker.advance(B):
            checkpoints.append(
                Checkpoint(state.count, chunker.elapsed(), state.rejected, _snapshot(state))
            )

    elapsed = chunker.elapsed()
    if not checkpoints or checkpoints[-1].samples != state.count:
        checkpoints.append(Checkpoint(state.count, elapsed, state.rejected, _snapshot(state)))
    ex = dict(extras or {})
    if collect:
        m = order.m
        ex["values"] = np.concatenate(coll_vals) if coll_vals else np.empty((0, m), np.int64)
        ex["log_weights"] = np.concatenate(coll_w) if coll_w else np.empty(0)
        ex["step_probs"] = np.concatenate(coll_steps) if coll_steps else np.empty((0, n_c))
        ex["dead_at"] = np.concatenate(coll_dead) if coll_dead else np.empty(0, np.int64)
    return RunResult(scheme, state, checkpoints, elapsed, ex)


def lwlc_run(
    net: BayesNet,
    order: CutsetOrder,
    rng: np.random.Generator,
    samples: int | None = None,
    seconds: float | None = None,
    checkpoint_every: int | None = None,
    batch: int = 1024,
    cache=None,
    collect: bool = False,
    mix_memo: MixingMemo | None = None,
) -> RunResult:
    """Likelihood weighting over the cutset order.

    With `cache` (a SampleTree) distributions are read through the cache and
    the scheme becomes LWLC-BUF; without it every sample recomputes its
    conditionals.
    """
    if cache is None:
        source = DirectSource(order)
        scheme = "lwlc"
        extras = None
    else:
        from .cache import TreeSource

        source = TreeSource(order, cache)
        scheme = "lwlc-buf"
        extras = {"cache": cache}
    return _run_cutset_sampler(
        order, rng, source, scheme,
        samples=samples, seconds=seconds, checkpoint_every=checkpoint_every,
        batch=batch, collect=collect, mix_memo=mix_memo, extras=extras,
    )


def lwlc_sample(
    net: BayesNet, order: CutsetOrder, rng: np.random.Generator, cache=None
) -> WeightedSample:
    """Draw a single weighted cutset sample (assignment covers all of Z, in order)."""
    res = lwlc_run(net, order, rng, samples=1, cache=cache, collect=True, batch=1)
    dead = int(res.extras["dead_at"][0])
    return WeightedSample(
        res.extras["values"][0],
        float(res.extras["log_weights"][0]),
        res.extras["step_probs"][0],
        dead_position=None if dead < 0 else dead,
    )


# ---------------------------------------------------------------------------
# Gibbs-based loop-cutset sampling
# ---------------------------------------------------------------------------

def lcs_run(
    net: BayesNet,
    order: CutsetOrder,
    T: int | None,
    burn_in: int,
    rng: np.random.Generator,
    chains: int = 32,
    checkpoint_every: int | None = None,
    init_attempts: int = 200,
    seconds: float | None = None,
) -> RunResult:
    """Gibbs over the cutset variables only.

    Each site conditional P(C_i | c_-i, e) comes from mass ratios over the
    fully instantiated network (singly connected by the cutset property);
    non-cutset marginals use the unweighted mixing estimator.
    """
    if seconds is None:
        if T is None or T < 1:
            raise ValueError("T must be >= 1")
        if burn_in >= T:
            raise ValueError("burn_in must be smaller than T")
    n_c = len(order.cutset_positions)
    K = min(chains, T) if T is not None else chains
    t0 = time.perf_counter()

    init = lwlc_run(net, order, rng, samples=max(K * 4, 64), collect=True, batch=max(K * 4, 64))
    good = init.extras["values"][init.extras["log_weights"] > -np.inf]
    for _ in range(init_attempts):
        if good.shape[0] >= K:
            break
        more = lwlc_run(net, order, rng, samples=K * 4, collect=True, batch=K * 4)
        ok = more.extras["values"][more.extras["log_weights"] > -np.inf]
        good = np.concatenate([good, ok]) if ok.size else good
    if good.shape[0] < K:
        from .sampling import UnresolvedEstimateError

        raise UnresolvedEstimateError("could not initialize cutset chains with positive-mass states")
    vals = good[:K].copy()  # (K, m) full order values

    mass_plan = order.mass_plan()
    memo = MixingMemo(order)
    delta_vars = {v: int(net.cards[v]) for v in order.cutset_vars}
    state = EstimatorState(delta_vars, {v: int(net.cards[v]) for v in memo.vars})
    delta_cols = [order.cutset_vars.index(v) for v in state.delta_order]
    cut_cols = list(order.cutset_positions)

    checkpoints: list[Checkpoint] = []
    kept = 0
    next_cp = checkpoint_every or 0
    sweep = 0
    while (kept < T) if seconds is None else (time.perf_counter() - t0 < seconds or kept == 0):
        for d in range(n_c):
            pos = order.cutset_positions[d]
            card = int(net.cards[order.positions[pos][0]])
            tiled = np.repeat(vals, card, axis=0)
            tiled[:, pos] = np.tile(np.arange(card, dtype=np.int64), K)
            logm = mass_plan.run_mass(tiled).reshape(K, card)
            mx = logm.max(axis=1)
            ok = mx > -np.inf
            p = np.exp(logm - np.where(ok, mx, 0.0)[:, None])
            norm = p.sum(axis=1)
            p = np.divide(p, norm[:, None], out=np.zeros_like(p), where=ok[:, None])
            if not ok.all():
                cur = vals[:, pos]
                p[~ok] = 0.0
                p[np.nonzero(~ok)[0], cur[~ok]] = 1.0
            vals[:, pos] = draw_categorical(p, rng.random(K))
        sweep += 1
        if sweep <= burn_in:
            continue
        take = min(K, T - kept) if seconds is None else K
        rows = vals[:take]
        state.add_batch(
            rows[:, cut_cols][:, delta_cols], np.zeros(take),
            lambda w: memo.weighted_rows(rows, w),
        )
        kept += take
        if checkpoint_every and kept >= next_cp:
            checkpoints.append(
                Checkpoint(kept, time.perf_counter() - t0, state.rejected, _snapshot(state))
            )
            next_cp += checkpoint_every
    elapsed = time.perf_counter() - t0
    if not checkpoints or checkpoints[-1].samples != kept:
        checkpoints.append(Checkpoint(kept, elapsed, state.rejected, _snapshot(state)))
    return RunResult("lcs", state, checkpoints, elapsed, {"chains": K, "burn_in": burn_in})
