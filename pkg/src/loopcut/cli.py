"""Command-line interface: validation, cutset discovery, exact/approximate
inference, sampling runs, comparisons, and random-network generation.

Exit codes: 0 success, 2 usage/config, 3 I/O, 4 parse/format, 5 semantic
validation, 6 infeasible computation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import graphs
from .cache import lwlc_buf_run
from .cutset import InvalidCutsetError, build_cutset_order, lcs_run, lwlc_run
from .evaluation import (
    SCHEMES,
    TraceRow,
    result_to_rows,
    run_comparison,
    run_scheme,
    summarize,
    write_trace_csv,
)
from .exact import (
    DEFAULT_STATE_CAP,
    StateSpaceError,
    bucket_elimination_query,
    enumerate_joint_query,
    QueryResult,
)
from .ibp import iterative_bp
from .model import (
    EvidenceError,
    NetworkFormatError,
    NetworkValidationError,
    generate_random_network,
    parse_evidence,
    parse_network,
    serialize_network,
)
from .sampling import estimate_marginals, UnresolvedEstimateError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_SEMANTIC = 5
EXIT_INFEASIBLE = 6


@dataclass(frozen=True)
class RunConfig:
    """One sampling run: exactly one budget kind; scheme from the known set."""

    network: str
    evidence: str | None
    scheme: str
    samples: int | None
    seconds: float | None
    seed: int
    checkpoint_every: int | None
    cutset_source: str  # 'auto' or a file path
    learn_dead_ends: bool
    cache_cap: int
    burn_in: int
    chains: int
    batch: int
    mse_mode: str  # auto | on | off
    trace_path: str | None
    summary_path: str | None
    dump_weights: str | None
    stable_output: bool

    def __post_init__(self):
        if (self.samples is None) == (self.seconds is None):
            raise ValueError("exactly one of --samples/--seconds must be set")
        if self.scheme not in SCHEMES + ("exact",):
            raise ValueError(f"unknown scheme '{self.scheme}'")


def _load_network(path: str):
    with open(path) as fh:
        return parse_network(fh.read())


def _load_evidence(path: str | None, net):
    if path is None:
        return {}
    with open(path) as fh:
        return parse_evidence(fh.read(), net)


def _marginals_json(net, marginals) -> dict | None:
    if marginals is None:
        return None
    out = {}
    for v in sorted(marginals):
        var = net.variables[v]
        out[var.name] = {lab: float(marginals[v][k]) for k, lab in enumerate(var.domain)}
    return out


def _query_json(net, res: QueryResult) -> dict:
    return {
        "evidence_probability": res.evidence_probability,
        "marginals": _marginals_json(net, res.marginals),
        "converged": res.converged,
        "approximate": res.approximate,
    }


def _resolve_cutset(net, evidence, source: str):
    if source == "auto":
        return graphs.find_loop_cutset(net, evidence)
    with open(source) as fh:
        doc = json.load(fh)
    if not isinstance(doc, list) or not all(isinstance(x, str) for x in doc):
        raise NetworkFormatError("cutset file must be a JSON list of variable names")
    ids = []
    for name in doc:
        if name not in net.name_to_id:
            raise NetworkValidationError(f"cutset names unknown variable '{name}'")
        ids.append(net.name_to_id[name])
    return graphs.Cutset(tuple(sorted(ids)))


def cmd_validate(args) -> int:
    net = _load_network(args.network)
    print(f"ok: {net.n} variables, {sum(len(p) for p in net.parents)} edges", file=sys.stderr)
    return EXIT_OK


def cmd_gen(args) -> int:
    net = generate_random_network(args.n, args.max_parents, args.max_card,
                                  args.determinism, args.seed)
    text = serialize_network(net)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_cutset(args) -> int:
    net = _load_network(args.network)
    evidence = _load_evidence(args.evidence, net)
    cs = _resolve_cutset(net, evidence, args.cutset)
    zs = sorted(set(cs.members) | set(evidence))
    valid = graphs.validate_loop_cutset(net, set(zs))
    pos = {v: k for k, v in enumerate(graphs.topological_order(net))}
    ordered = sorted(zs, key=lambda v: pos[v])
    prefix_ok = valid and graphs.check_prefix_polytrees(net, ordered)
    print(json.dumps({
        "members": [net.variables[v].name for v in cs.members],
        "size": len(cs.members),
        "split_valid": valid,
        "prefix_polytrees": prefix_ok,
    }, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_infer_exact(args) -> int:
    net = _load_network(args.network)
    evidence = _load_evidence(args.evidence, net)
    if args.method == "enumerate":
        res = enumerate_joint_query(net, evidence, cap=args.state_cap)
    else:
        res = bucket_elimination_query(net, evidence)
    print(json.dumps(_query_json(net, res), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_infer_ibp(args) -> int:
    net = _load_network(args.network)
    evidence = _load_evidence(args.evidence, net)
    res = iterative_bp(net, evidence, max_iters=args.max_iters, tol=args.tol)
    print(json.dumps(_query_json(net, res), indent=2, sort_keys=True))
    return EXIT_OK


def _exact_reference(net, evidence, mode: str):
    if mode == "off":
        return None
    if net.state_space_size() > DEFAULT_STATE_CAP and mode == "auto":
        return None
    try:
        ref = bucket_elimination_query(net, evidence)
    except MemoryError as exc:
        if mode == "on":
            raise StateSpaceError("exact reference infeasible") from exc
        return None
    return ref.marginals  # None when P(e) = 0: MSE undefined


def cmd_sample(args) -> int:
    cfg = RunConfig(
        network=args.network, evidence=args.evidence, scheme=args.scheme,
        samples=args.samples, seconds=args.seconds, seed=args.seed,
        checkpoint_every=args.checkpoint_every, cutset_source=args.cutset,
        learn_dead_ends=not args.no_dead_end_learning, cache_cap=args.cache_cap,
        burn_in=args.burn_in, chains=args.chains, batch=args.batch,
        mse_mode=args.mse, trace_path=args.trace, summary_path=args.summary,
        dump_weights=args.dump_weights, stable_output=args.stable_output,
    )
    net = _load_network(cfg.network)
    evidence = _load_evidence(cfg.evidence, net)
    exact_ref = _exact_reference(net, evidence, cfg.mse_mode)

    summary: dict = {"scheme": cfg.scheme, "seed": cfg.seed}
    rng = np.random.default_rng(cfg.seed)
    if cfg.scheme == "exact":
        res = bucket_elimination_query(net, evidence)
        rows = [TraceRow("exact", cfg.seed, 0.0, 0, 0,
                         0.0 if exact_ref is not None and res.marginals is not None else None,
                         res.marginals is None)]
        summary["marginals"] = _marginals_json(net, res.marginals)
        summary["evidence_probability"] = res.evidence_probability
        summary["unresolved"] = res.marginals is None
    elif cfg.scheme == "ibp":
        result = run_scheme("ibp", net, evidence, cfg.seed)
        rows = result_to_rows(result, cfg.seed, exact_ref)
        summary["marginals"] = _marginals_json(net, result.checkpoints[-1].marginals)
        summary["converged"] = result.extras["converged"]
        summary["unresolved"] = result.checkpoints[-1].marginals is None
    else:
        collect = cfg.dump_weights is not None
        if collect and cfg.scheme not in ("lwlc", "lwlc-buf"):
            raise ValueError("--dump-weights is only available for lwlc and lwlc-buf")
        if cfg.scheme in ("lwlc", "lcs", "lwlc-buf"):
            cs = _resolve_cutset(net, evidence, cfg.cutset_source)
            order = build_cutset_order(net, evidence, cs)
            if cfg.scheme == "lwlc":
                result = lwlc_run(net, order, rng, samples=cfg.samples, seconds=cfg.seconds,
                                  checkpoint_every=cfg.checkpoint_every, batch=cfg.batch,
                                  collect=collect)
            elif cfg.scheme == "lcs":
                result = lcs_run(net, order, cfg.samples, cfg.burn_in, rng, chains=cfg.chains,
                                 checkpoint_every=cfg.checkpoint_every, seconds=cfg.seconds)
            else:
                result = lwlc_buf_run(net, order, rng, samples=cfg.samples, seconds=cfg.seconds,
                                      checkpoint_every=cfg.checkpoint_every, batch=cfg.batch,
                                      learn_dead_ends=cfg.learn_dead_ends,
                                      node_cap=cfg.cache_cap, collect=collect)
        else:
            result = run_scheme(cfg.scheme, net, evidence, cfg.seed, samples=cfg.samples,
                                seconds=cfg.seconds, checkpoint_every=cfg.checkpoint_every,
                                burn_in=cfg.burn_in, chains=cfg.chains, batch=cfg.batch)
        rows = result_to_rows(result, cfg.seed, exact_ref)
        summary["unresolved"] = result.unresolved
        try:
            summary["marginals"] = _marginals_json(net, estimate_marginals(result.state))
        except UnresolvedEstimateError:
            summary["marginals"] = None
        if "cache_stats" in result.extras:
            summary["cache"] = result.extras["cache_stats"]
        if cfg.dump_weights and "log_weights" in result.extras:
            with open(cfg.dump_weights, "w") as fh:
                fh.write("t,weight,q\n")
                lw = result.extras["log_weights"]
                q = np.prod(result.extras["step_probs"], axis=1) if result.extras[
                    "step_probs"].size else np.ones_like(lw)
                for t in range(lw.shape[0]):
                    fh.write(f"{t},{math.exp(lw[t])!r},{float(q[t])!r}\n")

    summary["schemes"] = summarize(rows)
    if cfg.trace_path:
        write_trace_csv(rows, cfg.trace_path, stable=cfg.stable_output)
    else:
        write_trace_csv(rows, sys.stdout, stable=cfg.stable_output)
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if cfg.summary_path:
        with open(cfg.summary_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args) -> int:
    net = _load_network(args.network)
    evidence = _load_evidence(args.evidence, net)
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    seeds = list(range(args.seed, args.seed + args.seeds))
    ref = bucket_elimination_query(net, evidence)
    if ref.marginals is None:
        raise StateSpaceError("P(e) = 0: exact reference undefined, MSE traces infeasible")
    rows, summary = run_comparison(
        net, evidence, schemes, seeds, samples=args.samples, seconds=args.seconds,
        checkpoint_every=args.checkpoint_every, exact_marginals=ref.marginals,
        threads=args.threads, burn_in=args.burn_in, chains=args.chains,
    )
    if args.trace:
        write_trace_csv(rows, args.trace, stable=args.stable_output)
    else:
        write_trace_csv(rows, sys.stdout, stable=args.stable_output)
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loopcut",
                                description="Loop-cutset sampling engine for discrete Bayesian networks")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_net(sp, evidence=True):
        sp.add_argument("network", help="network JSON file")
        if evidence:
            sp.add_argument("--evidence", help="evidence JSON file ({name: value-label})")

    sp = sub.add_parser("validate", help="parse and validate a network file")
    add_net(sp, evidence=False)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("gen", help="generate a random network")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--max-parents", type=int, default=3)
    sp.add_argument("--max-card", type=int, default=2)
    sp.add_argument("--determinism", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_gen)

    sp = sub.add_parser("cutset", help="find or check a loop cutset")
    add_net(sp)
    sp.add_argument("--cutset", default="auto", help="'auto' or a JSON file of names")
    sp.set_defaults(fn=cmd_cutset)

    sp = sub.add_parser("infer-exact", help="exact inference")
    add_net(sp)
    sp.add_argument("--method", choices=["be", "enumerate"], default="be")
    sp.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP)
    sp.set_defaults(fn=cmd_infer_exact)

    sp = sub.add_parser("infer-ibp", help="iterative belief propagation")
    add_net(sp)
    sp.add_argument("--max-iters", type=int, default=200)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.set_defaults(fn=cmd_infer_ibp)

    def add_run_common(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--samples", type=int)
        g.add_argument("--seconds", type=float)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--checkpoint-every", type=int)
        sp.add_argument("--burn-in", type=int, default=200)
        sp.add_argument("--chains", type=int, default=32)
        sp.add_argument("--batch", type=int, default=1024)
        sp.add_argument("--stable-output", action="store_true",
                        help="zero timing columns for byte-stable goldens")
        sp.add_argument("--trace", help="trace CSV output path (default stdout)")
        sp.add_argument("--summary", help="summary JSON output path (default stdout)")

    sp = sub.add_parser("sample", help="run one sampling scheme")
    add_net(sp)
    sp.add_argument("--scheme", required=True,
                    choices=["lw", "gibbs", "lwlc", "lcs", "lwlc-buf", "ibp", "exact"])
    add_run_common(sp)
    sp.add_argument("--cutset", default="auto")
    sp.add_argument("--no-dead-end-learning", action="store_true")
    sp.add_argument("--cache-cap", type=int, default=1_000_000)
    sp.add_argument("--mse", choices=["auto", "on", "off"], default="auto")
    sp.add_argument("--dump-weights", help="per-sample (t, weight, Q) CSV path")
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("compare", help="run several schemes across seeds")
    add_net(sp)
    sp.add_argument("--schemes", required=True, help="comma-separated scheme list")
    sp.add_argument("--seeds", type=int, default=1, help="number of seeds")
    add_run_common(sp)
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(fn=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except NetworkFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NetworkValidationError, EvidenceError, InvalidCutsetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SEMANTIC
    except StateSpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
