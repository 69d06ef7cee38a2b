"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--points N] [--length L] [--repeat R]

Times max-min string evaluation and the ReLU forward pass on random inputs,
checks that both backends agree, and prints the best of ``repeat`` runs.
"""

import argparse
import timeit

import numpy as np

from narrownet.affine import MaxMinString, eval_string
from narrownet.compiler import compile_string
from narrownet.domain import Ball
from narrownet.kernels import compiled_available
from narrownet.net import forward


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=40_000)
    p.add_argument("--length", type=int, default=2_000)
    p.add_argument("--din", type=int, default=2)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    if not compiled_available():
        print("compiled kernels are not built; only the numpy fallback can run")
    backends = ["python"] + (["cython"] if compiled_available() else [])

    rng = np.random.default_rng(args.seed)
    L, d = args.length, args.din
    g = MaxMinString(rng.normal(size=(L, 1, d)), rng.normal(size=(L, 1)), rng.random(L - 1) < 0.5)
    ball = Ball(np.zeros(d), 1.0)
    net = compile_string(g, ball)
    pts = ball.sample(args.points, rng)

    print(f"string length {L}, d_in {d}, {args.points} points, best of {args.repeat}")
    print(f"{'kernel':<14}{'backend':<10}{'seconds':>10}{'speedup':>10}")
    for name, fn in (("eval_string", lambda b: eval_string(g, pts, backend=b)),
                     ("forward", lambda b: forward(net, pts, backend=b))):
        ref = fn("python")
        base = None
        for b in backends:
            np.testing.assert_allclose(fn(b), ref, rtol=1e-12, atol=1e-12)
            t = best_time(lambda fn=fn, b=b: fn(b), args.repeat)
            base = t if base is None else base
            print(f"{name:<14}{b:<10}{t:>10.4f}{base / t:>9.1f}x")


if __name__ == "__main__":
    main()
