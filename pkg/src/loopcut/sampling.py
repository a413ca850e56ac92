"""Full-space samplers: likelihood weighting and Gibbs, plus shared estimator state.

Weights are carried in log space (-inf marks an exact-zero weight, i.e. a
rejected sample).  Estimator tallies are kept relative to a running scale so
that runs whose weights underflow linear floats still produce estimates; the
normalized estimate is invariant under any common rescaling of the weights.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import BayesNet, Evidence, check_evidence
from .graphs import topological_order


class UnresolvedEstimateError(RuntimeError):
    """Every sample was rejected (total weight zero): no estimate available."""


def draw_categorical(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one value per row of `p` using uniforms `u`.

    Zero-probability values are never selected.  Shared by every sampler so
    identical distributions and uniforms yield identical draws everywhere.
    """
    cdf = np.cumsum(p, axis=1)
    v = (u[:, None] >= cdf).sum(axis=1)
    k = p.shape[1]
    v = np.minimum(v, k - 1)
    # guard against cdf[-1] rounding below u: walk left off zero-prob cells
    bad = p[np.arange(p.shape[0]), v] == 0.0
    while np.any(bad):
        v = np.where(bad & (v > 0), v - 1, v)
        newbad = p[np.arange(p.shape[0]), v] == 0.0
        if np.array_equal(newbad, bad):
            break
        bad = newbad
    return v


@dataclass(eq=False)
class WeightedSample:
    """One draw: assignment, log weight and the probabilities used per draw.

    `dead_position`, when set, is the order position whose factor first hit
    exactly zero; the assignment prefix up to it is the dead-end path.
    """

    assignment: np.ndarray          # value per position (scheme-dependent layout)
    log_weight: float
    step_probs: np.ndarray          # draw probability per sampled variable
    dead_position: int | None = None

    @property
    def weight(self) -> float:
        return float(np.exp(self.log_weight))

    @property
    def is_rejected(self) -> bool:
        return self.log_weight == -np.inf


class EstimatorState:
    """Weighted tallies sum_t w_t * delta(x_i, x_t) plus total weight, count, rejects.

    `mix_vars` get row accumulators sum_t w_t * P(x_i | sample_t) instead of
    delta tallies (the mixing estimator for variables that are never sampled).
    """

    def __init__(self, delta_vars: dict[int, int], mix_vars: dict[int, int] | None = None):
        self.delta_order = tuple(sorted(delta_vars))
        self.delta = {v: np.zeros(delta_vars[v]) for v in self.delta_order}
        self.mix = {v: np.zeros(c) for v, c in (mix_vars or {}).items()}
        self.log_scale = -np.inf
        self.total = 0.0
        self.count = 0
        self.rejected = 0

    def _rescale(self, new_scale: float) -> None:
        f = math.exp(self.log_scale - new_scale) if self.log_scale > -np.inf else 0.0
        for row in self.delta.values():
            row *= f
        for row in self.mix.values():
            row *= f
        self.total *= f
        self.log_scale = new_scale

    def add_batch(self, values: np.ndarray, log_w: np.ndarray, mix_fn=None) -> None:
        """values: (B, len(delta_order)) ints; log_w: (B,).

        `mix_fn`, when given, maps the rescaled weight vector to per-variable
        contribution rows sum_t w_t * P(x_i | sample_t).
        """
        B = log_w.shape[0]
        self.count += B
        finite = log_w > -np.inf
        self.rejected += int(B - finite.sum())
        if not finite.any():
            return
        m = float(log_w[finite].max())
        if m > self.log_scale:
            self._rescale(m)
        w = np.exp(log_w - self.log_scale)
        self.total += float(w.sum())
        for k, v in enumerate(self.delta_order):
            self.delta[v] += np.bincount(values[:, k], weights=w, minlength=self.delta[v].size)
        if mix_fn is not None:
            for v, row in mix_fn(w).items():
                self.mix[v] += row

    def merge(self, other: "EstimatorState") -> None:
        if other.total > 0.0 and other.log_scale > self.log_scale:
            self._rescale(other.log_scale)
        f = (
            math.exp(other.log_scale - self.log_scale)
            if other.log_scale > -np.inf and self.log_scale > -np.inf
            else 0.0
        )
        for v, row in other.delta.items():
            self.delta[v] += f * row
        for v, row in other.mix.items():
            self.mix[v] += f * row
        self.total += f * other.total
        self.count += other.count
        self.rejected += other.rejected

    def log_mean_weight(self) -> float:
        """log of the running P(e) estimate (Eq.-1 style mean of weights)."""
        if self.count == 0 or self.total == 0.0:
            return -np.inf
        return self.log_scale + math.log(self.total) - math.log(self.count)


def estimate_marginals(state: EstimatorState) -> dict[int, np.ndarray]:
    """Normalized posterior estimates; raises UnresolvedEstimateError on zero mass."""
    if state.count == 0 or state.total == 0.0:
        raise UnresolvedEstimateError("all samples rejected; instance unresolved")
    out = {v: row / state.total for v, row in state.delta.items()}
    out.update({v: row / state.total for v, row in state.mix.items()})
    return out


def rejection_rate(state: EstimatorState) -> float:
    if state.count == 0:
        raise ValueError("no samples drawn")
    return state.rejected / state.count


@dataclass
class Checkpoint:
    samples: int
    elapsed_s: float
    rejected: int
    marginals: dict[int, np.ndarray] | None  # None while unresolved


@dataclass
class RunResult:
    scheme: str
    state: EstimatorState
    checkpoints: list[Checkpoint]
    elapsed_s: float
    extras: dict = field(default_factory=dict)

    def marginals(self) -> dict[int, np.ndarray]:
        return estimate_marginals(self.state)

    @property
    def unresolved(self) -> bool:
        return self.state.count == 0 or self.state.total == 0.0


def _resolve_budget(samples: int | None, seconds: float | None) -> tuple[int | None, float | None]:
    if (samples is None) == (seconds is None):
        raise ValueError("exactly one of samples/seconds must be set")
    if samples is not None and samples < 0:
        raise ValueError("sample budget must be >= 0")
    return samples, seconds


def _snapshot(state: EstimatorState) -> dict[int, np.ndarray] | None:
    try:
        return {v: row.copy() for v, row in estimate_marginals(state).items()}
    except UnresolvedEstimateError:
        return None


class _Chunker:
    """Carves a budget into batches aligned on checkpoint boundaries."""

    def __init__(self, samples, seconds, checkpoint_every, batch):
        self.samples, self.seconds = samples, seconds
        self.every = checkpoint_every
        self.batch = batch
        self.done = 0
        self.t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def next_chunk(self) -> int:
        if self.samples is not None:
            left = self.samples - self.done
            if left <= 0:
                return 0
        else:
            if self.elapsed() >= self.seconds:
                return 0
            left = self.batch
        b = min(self.batch, left)
        if self.every:
            to_cp = self.every - (self.done % self.every)
            b = min(b, to_cp)
        return b

    def advance(self, b: int) -> bool:
        """Record b samples; return True when a checkpoint is due."""
        self.done += b
        if self.every:
            return self.done % self.every == 0
        return self.samples is None  # time-budget runs checkpoint every chunk


# ---------------------------------------------------------------------------
# Likelihood weighting
# ---------------------------------------------------------------------------

class _LwPlan:
    def __init__(self, net: BayesNet, evidence: Evidence):
        check_evidence(net, evidence)
        self.net = net
        self.evidence = dict(evidence)
        self.topo = topological_order(net)
        self.sampled = [v for v in self.topo if v not in evidence]
        self.tables = [net.cpts[i].table for i in range(net.n)]
        self.cards = net.cards

    def run_chunk(self, B: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        net = self.net
        values = np.empty((B, net.n), dtype=np.int64)
        log_w = np.zeros(B)
        U = rng.random((B, len(self.sampled)))
        k = 0
        with np.errstate(divide="ignore"):
            for v in self.topo:
                rows = np.zeros(B, dtype=np.int64)
                for p in net.cpts[v].parents:
                    rows = rows * int(self.cards[p]) + values[:, p]
                probs = self.tables[v][rows]
                if v in self.evidence:
                    values[:, v] = self.evidence[v]
                    log_w += np.log(probs[:, self.evidence[v]])
                else:
                    values[:, v] = draw_categorical(probs, U[:, k])
                    k += 1
        return values, log_w


def lw_sample(net: BayesNet, evidence: Evidence, rng: np.random.Generator) -> WeightedSample:
    """One forward draw with evidence clamped; weight is the product of the
    evidence CPT entries seen along the way."""
    plan = _LwPlan(net, evidence)
    values, log_w = plan.run_chunk(1, rng)
    row = values[0]
    step_probs = np.array(
        [net.cpts[v].table[net.cpts[v].row_index(row[list(net.cpts[v].parents)], net.cards), row[v]]
         for v in plan.sampled]
    )
    return WeightedSample(row, float(log_w[0]), step_probs)


def lw_run(
    net: BayesNet,
    evidence: Evidence,
    rng: np.random.Generator,
    samples: int | None = None,
    seconds: float | None = None,
    checkpoint_every: int | None = None,
    batch: int = 4096,
    collect: bool = False,
) -> RunResult:
    samples, seconds = _resolve_budget(samples, seconds)
    plan = _LwPlan(net, evidence)
    state = EstimatorState({v: int(net.cards[v]) for v in plan.sampled})
    col = [v for v in state.delta_order]
    checkpoints: list[Checkpoint] = []
    collected_v, collected_w = [], []
    chunker = _Chunker(samples, seconds, checkpoint_every, batch)
    while True:
        B = chunker.next_chunk()
        if B == 0:
            break
        values, log_w = plan.run_chunk(B, rng)
        state.add_batch(values[:, col], log_w)
        if collect:
            collected_v.append(values)
            collected_w.append(log_w)
        if chunker.advance(B):
            checkpoints.append(
                Checkpoint(state.count, chunker.elapsed(), state.rejected, _snapshot(state))
            )
    elapsed = chunker.elapsed()
    if not checkpoints or checkpoints[-1].samples != state.count:
        checkpoints.append(Checkpoint(state.count, elapsed, state.rejected, _snapshot(state)))
    extras = {}
    if collect:
        extras["values"] = np.concatenate(collected_v) if collected_v else np.empty((0, net.n), np.int64)
        extras["log_weights"] = np.concatenate(collected_w) if collected_w else np.empty(0)
    return RunResult("lw", state, checkpoints, elapsed, extras)


# ---------------------------------------------------------------------------
# Gibbs sampling
# ---------------------------------------------------------------------------

class _GibbsSite:
    __slots__ = ("var", "card", "table", "parents", "children")

    def __init__(self, net: BayesNet, v: int):
        self.var = v
        self.card = int(net.cards[v])
        self.table = net.cpts[v].table
        self.parents = net.cpts[v].parents
        # child factors: (flat child table, base strides, stride of v, child id)
        self.children = []
        for c in net.children[v]:
            cpt = net.cpts[c]
            strides = {}
            s = 1
            for p in reversed(cpt.parents):
                strides[p] = s
                s *= int(net.cards[p])
            self.children.append((cpt.table, cpt.parents, strides, c))


def _markov_blanket_dist(site: _GibbsSite, X: np.ndarray, cards: np.ndarray) -> np.ndarray:
    B = X.shape[0]
    rows = np.zeros(B, dtype=np.int64)
    for p in site.parents:
        rows = rows * int(cards[p]) + X[:, p]
    p = site.table[rows].copy()
    vr = np.arange(site.card, dtype=np.int64)
    for table, parents, strides, c in site.children:
        base = np.zeros(B, dtype=np.int64)
        for q in parents:
            if q != site.var:
                base += X[:, q] * strides[q]
        rows_v = base[:, None] + vr[None, :] * strides[site.var]
        p *= table.reshape(-1)[rows_v * table.shape[1] + X[:, c][:, None]]
    norm = p.sum(axis=1)
    ok = norm > 0
    p = np.divide(p, norm[:, None], out=p, where=ok[:, None])
    if not ok.all():
        # zero-mass state (deterministic net): keep the current value
        cur = X[:, site.var]
        p[~ok] = 0.0
        p[np.nonzero(~ok)[0], cur[~ok]] = 1.0
    return p


def gibbs_run(
    net: BayesNet,
    evidence: Evidence,
    T: int | None,
    burn_in: int,
    rng: np.random.Generator,
    chains: int = 32,
    checkpoint_every: int | None = None,
    init_attempts: int = 200,
    seconds: float | None = None,
) -> RunResult:
    """Systematic-scan Gibbs over non-evidence variables, vectorized across
    lockstep chains; marginals are empirical frequencies after burn-in."""
    if seconds is None:
        if T is None or T < 1:
            raise ValueError("T must be >= 1")
        if burn_in >= T:
            raise ValueError("burn_in must be smaller than T")
    check_evidence(net, evidence)
    if any(np.any(c.table == 0.0) for c in net.cpts):
        warnings.warn("network contains deterministic entries; Gibbs may not converge")

    K = min(chains, T) if T is not None else chains
    lw_plan = _LwPlan(net, evidence)
    t0 = time.perf_counter()
    X = np.empty((K, net.n), dtype=np.int64)
    filled = 0
    for _ in range(init_attempts):
        vals, log_w = lw_plan.run_chunk(K, rng)
        good = vals[log_w > -np.inf]
        take = min(K - filled, good.shape[0])
        if take:
            X[filled : filled + take] = good[:take]
            filled += take
        if filled == K:
            break
    if filled < K:
        raise UnresolvedEstimateError("could not initialize Gibbs chains with positive-weight states")

    sites = [_GibbsSite(net, v) for v in range(net.n) if v not in evidence]
    free = [s.var for s in sites]
    state = EstimatorState({v: int(net.cards[v]) for v in free})
    checkpoints: list[Checkpoint] = []
    kept = 0
    next_cp = checkpoint_every or 0
    sweep = 0
    while (kept < T) if seconds is None else (time.perf_counter() - t0 < seconds or kept == 0):
        for s in sites:
            p = _markov_blanket_dist(s, X, net.cards)
            X[:, s.var] = draw_categorical(p, rng.random(K))
        sweep += 1
        if sweep <= burn_in:
            continue
        take = min(K, T - kept) if seconds is None else K
        rows = X[:take][:, free]
        state.add_batch(rows, np.zeros(take))
        kept += take
        if checkpoint_every and kept >= next_cp:
            checkpoints.append(
                Checkpoint(kept, time.perf_counter() - t0, state.rejected, _snapshot(state))
            )
            next_cp += checkpoint_every
    elapsed = time.perf_counter() - t0
    if not checkpoints or checkpoints[-1].samples != kept:
        checkpoints.append(Checkpoint(kept, elapsed, state.rejected, _snapshot(state)))
    return RunResult("gibbs", state, checkpoints, elapsed, {"chains": K, "burn_in": burn_in})
