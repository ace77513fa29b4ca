#!/usr/bin/env python3
"""Benchmark the numba tree kernels against the pure-numpy fallback.

Scores (and backpropagates through) a batch of random trees with both kernel
implementations and reports per-tree times. Run from a checkout:

    python3 benchmarks/bench_kernels.py --sentences 200 --length 25
"""

import argparse
import statistics
import time

import numpy as np

from deprerank import kernels
from deprerank.params import Hyperparams, init_random
from deprerank.rcnn import build_plan
from deprerank.synth import DEFAULT_TAGS, random_tree


def _forward_args(params, plan):
    return (plan.order, plan.arc_start, plan.arc_child, plan.node_word,
            plan.arc_dist, plan.arc_pair, params.words.vectors,
            params.distances.vectors, params.pos_pairs.W, params.pos_pairs.v)


def _backward_args(params, plan, fwd):
    _, p, _, z, amax, _, _ = fwd
    return (plan.order, plan.arc_start, plan.arc_child, plan.node_word,
            plan.arc_dist, plan.arc_pair, plan.wloc, plan.dloc, plan.ploc,
            len(plan.word_rows), len(plan.dist_rows), len(plan.pair_slots),
            p, z, amax, params.pos_pairs.W, params.pos_pairs.v, 1.0)


def bench(forward, backward, params, plans, repeats):
    # one untimed pass to trigger jit compilation / cache warm
    fwd = forward(*_forward_args(params, plans[0]))
    backward(*_backward_args(params, plans[0], fwd))
    fwd_times, both_times = [], []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for plan in plans:
            forward(*_forward_args(params, plan))
        fwd_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        for plan in plans:
            fwd = forward(*_forward_args(params, plan))
            backward(*_backward_args(params, plan, fwd))
        both_times.append(time.perf_counter() - t0)
    n = len(plans)
    return (statistics.median(fwd_times) / n, statistics.median(both_times) / n)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sentences", type=int, default=200)
    ap.add_argument("--length", type=int, default=25)
    ap.add_argument("--m", type=int, default=25)
    ap.add_argument("--m-d", dest="m_d", type=int, default=25)
    ap.add_argument("--vocab", type=int, default=500)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    vocab = [f"word{i:04d}" for i in range(args.vocab)]
    params = init_random(Hyperparams(m=args.m, m_d=args.m_d), vocab,
                         list(DEFAULT_TAGS), seed=args.seed)
    trees = [random_tree(rng, args.length, vocab) for _ in range(args.sentences)]
    plans = [build_plan(params, t, create_pairs=True) for t in trees]
    print(f"{args.sentences} trees of length {args.length}, "
          f"m={args.m}, m_d={args.m_d}, {len(params.pos_pairs)} pair slots")

    results = {}
    results["numpy"] = bench(kernels.forward_numpy, kernels.backward_numpy,
                             params, plans, args.repeats)
    if kernels.forward_numba is not None:
        results["numba"] = bench(kernels.forward_numba, kernels.backward_numba,
                                 params, plans, args.repeats)
    else:
        print("numba unavailable; benchmarking the numpy path only")

    print(f"{'backend':<10}{'forward/tree':>16}{'fwd+bwd/tree':>16}")
    for name, (fwd, both) in results.items():
        print(f"{name:<10}{fwd * 1e6:>13.1f} us{both * 1e6:>13.1f} us")
    if "numba" in results:
        f_speed = results["numpy"][0] / results["numba"][0]
        b_speed = results["numpy"][1] / results["numba"][1]
        print(f"{'speedup':<10}{f_speed:>14.1f}x{b_speed:>15.1f}x")


if __name__ == "__main__":
    main()
