"""Benchmark the rank/top-k kernels: numba @njit loops vs the pure numpy
fallback (the path selected at import time by PROBE_PURE_NUMPY=1).

Run:  python benchmarks/bench_rank.py [--vocab 21000] [--queries 2000]

Both paths must produce identical results; the benchmark asserts that
before timing.
"""

import argparse
import time

import numpy as np

from clozeprobe._kernels import (
    _make_numba_kernels,
    _rank_numpy,
    _topk_numpy,
)


def make_workload(n_queries, vocab_size, topk, seed=7):
    rng = np.random.default_rng(seed)
    scores = rng.standard_normal((n_queries, vocab_size))
    masks = rng.random((n_queries, vocab_size)) < 0.05
    golds = rng.integers(0, vocab_size, size=n_queries)
    for i in range(n_queries):
        masks[i, golds[i]] = False
    return scores, masks, golds, topk


def run_numpy(scores, masks, golds, topk):
    ranks = np.empty(len(golds), dtype=np.int64)
    tops = []
    for i in range(len(golds)):
        ranks[i] = _rank_numpy(scores[i], masks[i], int(golds[i]))
        tops.append(_topk_numpy(scores[i], masks[i], topk))
    return ranks, tops


def run_numba(scores, masks, golds, topk):
    rank_kernel, topk_kernel = _NUMBA
    ranks = np.empty(len(golds), dtype=np.int64)
    tops = []
    for i in range(len(golds)):
        ranks[i] = rank_kernel(scores[i], masks[i], int(golds[i]))
        tops.append(topk_kernel(scores[i], masks[i], topk))
    return ranks, tops


def time_it(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--vocab", type=int, default=21000)
    parser.add_argument("--queries", type=int, default=2000)
    parser.add_argument("--topk", type=int, default=10)
    args = parser.parse_args()

    global _NUMBA
    _NUMBA = _make_numba_kernels()

    scores, masks, golds, topk = make_workload(args.queries, args.vocab, args.topk)

    # warm the jit, then check both paths agree before timing anything
    run_numba(scores[:2], masks[:2], golds[:2], topk)
    ranks_np, tops_np = run_numpy(scores[:50], masks[:50], golds[:50], topk)
    ranks_nb, tops_nb = run_numba(scores[:50], masks[:50], golds[:50], topk)
    assert np.array_equal(ranks_np, ranks_nb)
    assert all(np.array_equal(a, b) for a, b in zip(tops_np, tops_nb))

    t_np, _ = time_it(run_numpy, scores, masks, golds, topk)
    t_nb, _ = time_it(run_numba, scores, masks, golds, topk)

    per_np = 1e6 * t_np / args.queries
    per_nb = 1e6 * t_nb / args.queries
    print(f"workload: {args.queries} queries x {args.vocab} candidates, "
          f"top-{args.topk}")
    print(f"  pure numpy : {t_np:8.3f} s   ({per_np:8.1f} us/query)")
    print(f"  numba njit : {t_nb:8.3f} s   ({per_nb:8.1f} us/query)")
    print(f"  speedup    : {t_np / t_nb:8.2f}x")


if __name__ == "__main__":
    main()
