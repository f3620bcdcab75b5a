"""Compare the compiled and numpy kernel backends on square-energy workloads.

    python3 benchmarks/bench_core.py [--sizes 1024,2048,4096] [--functions 1,16] [--repeat 3]
"""

import argparse
import time

import numpy as np

from sqfn import backend
from sqfn.dyadic import whitney_cover
from sqfn.geometry import GeometrySpec, generate
from sqfn.kernels import kernel_by_name


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="1024,2048,4096")
    ap.add_argument("--functions", default="1,16")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    theta = kernel_by_name("riesz-grad", 2)
    impls = ["python"] + (["cython"] if backend.NAME == "cython" else [])
    print(f"{'N':>6} {'nodes':>7} {'nf':>4} " + " ".join(f"{i:>10}" for i in impls) + "   speedup  max_rel_diff")
    rng = np.random.default_rng(0)
    for N in map(int, args.sizes.split(",")):
        E = generate(GeometrySpec("lipschitz_graph", {"profile": "sawtooth"}, N))
        cover = whitney_cover(E.space, E, eps_min=2.0 ** -8)
        X = cover.node_center
        for nf in map(int, args.functions.split(",")):
            F = rng.standard_normal((N, nf)) * E.weights[:, None]
            times, outs = [], []
            for impl in impls:
                t, out = best_time(lambda: backend.riesz_apply(X, E.points, F, 1, 1, True, impl),
                                   args.repeat)
                times.append(t)
                outs.append(out)
            diff = (np.abs(outs[-1] - outs[0]).max() / np.abs(outs[0]).max()) if len(outs) > 1 else 0.0
            speed = times[0] / times[-1]
            print(f"{N:>6} {X.shape[0]:>7} {nf:>4} " + " ".join(f"{t:>9.3f}s" for t in times)
                  + f"   {speed:6.2f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
