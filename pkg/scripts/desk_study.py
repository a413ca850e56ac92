#!/usr/bin/env python3
"""Desk-scale convergence study.

Generates two random instances and writes trace CSVs:

  mse_trace.csv        LW / LWLC / LWLC-BUF / IBP on a positive-CPT network,
                       several seeds, MSE per checkpoint (curve style of the
                       accuracy figures)
  rejection_trace.csv  LWLC-BUF with dead-end learning on a deterministic
                       network, rejection per checkpoint (curve style of the
                       rejection-rate figure), plus plain LWLC for reference

Render them with the plots package:
  node plots/dist/plot-mse-vs-time.js out/mse_trace.csv --out mse.svg --logy
  node plots/dist/plot-rejection-vs-samples.js out/rejection_trace.csv --out rej.svg
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from loopcut.model import generate_random_network
from loopcut import graphs
from loopcut.exact import bucket_elimination_query
from loopcut.evaluation import (
    random_leaf_evidence,
    result_to_rows,
    run_comparison,
    summarize,
    write_trace_csv,
)
from loopcut.cutset import build_cutset_order, lwlc_run
from loopcut.cache import lwlc_buf_run
from loopcut.sampling import rejection_rate


def positive_instance(seed: int):
    rng = np.random.default_rng(seed)
    while True:
        net = generate_random_network(11, 3, 2, 0.0, seed=int(rng.integers(2**31)))
        if graphs.is_singly_connected(net):
            continue
        ev = random_leaf_evidence(net, rng, k=2)
        if graphs.find_loop_cutset(net, ev).members:
            return net, ev


def deterministic_instance(seed: int):
    rng = np.random.default_rng(seed)
    while True:
        net = generate_random_network(12, 3, 2, 0.5, seed=int(rng.integers(2**31)))
        if graphs.is_singly_connected(net):
            continue
        ev = random_leaf_evidence(net, rng, k=3)
        ref = bucket_elimination_query(net, ev)
        if ref.marginals is None:
            continue
        cs = graphs.find_loop_cutset(net, ev)
        if not cs.members:
            continue
        order = build_cutset_order(net, ev, cs)
        probe = lwlc_run(net, order, np.random.default_rng(0), samples=2000)
        if not probe.unresolved and rejection_rate(probe.state) > 0.05:
            return net, ev, order


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--samples", type=int, default=40_000)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--seed0", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    net, ev = positive_instance(7)
    rows, summary = run_comparison(
        net, ev, ["lw", "lwlc", "lwlc-buf", "ibp"],
        seeds=range(args.seed0, args.seed0 + args.seeds),
        samples=args.samples, checkpoint_every=max(args.samples // 10, 1),
    )
    write_trace_csv(rows, str(out / "mse_trace.csv"))
    (out / "mse_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out/'mse_trace.csv'} ({len(rows)} rows)")

    net, ev, order = deterministic_instance(11)
    ref = bucket_elimination_query(net, ev)
    rej_rows = []
    for seed in range(args.seed0, args.seed0 + args.seeds):
        buf = lwlc_buf_run(net, order, np.random.default_rng(seed),
                           samples=args.samples, checkpoint_every=max(args.samples // 20, 1),
                           batch=512)
        rej_rows += result_to_rows(buf, seed, ref.marginals)
        plain = lwlc_run(net, order, np.random.default_rng(seed),
                         samples=args.samples, checkpoint_every=max(args.samples // 20, 1))
        rej_rows += result_to_rows(plain, seed, ref.marginals)
    write_trace_csv(rej_rows, str(out / "rejection_trace.csv"))
    (out / "rejection_summary.json").write_text(
        json.dumps(summarize(rej_rows), indent=2, sort_keys=True) + "\n")
    print(f"wrote {out/'rejection_trace.csv'} ({len(rej_rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
