"""Timing comparison of the compiled kernel core against the numpy
fallback. Run: python benchmarks/bench_kernels.py [--sizes 500,2000]
"""
import argparse
import time

import numpy as np

from driftguard.kernels import _numpy as knp

try:
    from driftguard.kernels import _core as kcore
except ImportError:
    kcore = None


def timeit(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(n, d=32, k=8):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, d))
    c = rng.standard_normal((k, d))
    bandwidth = 2.0
    cases = {
        "pairwise_sqdist": lambda b: b.pairwise_sqdist(x, c),
        "assign_nearest": lambda b: b.assign_nearest(x, c),
        "knn_mean_dist(k=5)": lambda b: b.knn_mean_dist(x, 5),
        "meanshift_sweep": lambda b: b.meanshift_sweep(x, x, bandwidth),
    }
    print(f"\nn={n}, d={d}, k={k}")
    print(f"{'kernel':<22}{'numpy':>12}{'cython':>12}{'speedup':>10}")
    for name, call in cases.items():
        t_np = timeit(lambda: call(knp))
        if kcore is None:
            print(f"{name:<22}{t_np * 1e3:>10.2f}ms{'n/a':>12}{'n/a':>10}")
            continue
        t_cy = timeit(lambda: call(kcore))
        ref = call(knp)
        got = call(kcore)
        ref0 = ref[0] if isinstance(ref, tuple) else ref
        got0 = got[0] if isinstance(got, tuple) else got
        assert np.allclose(np.asarray(ref0, dtype=np.float64),
                           np.asarray(got0, dtype=np.float64), atol=1e-8)
        print(f"{name:<22}{t_np * 1e3:>10.2f}ms{t_cy * 1e3:>10.2f}ms{t_np / t_cy:>9.1f}x")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="500,2000,5000")
    args = parser.parse_args()
    if kcore is None:
        print("compiled backend not available; timing numpy only")
    for n in (int(s) for s in args.sizes.split(",")):
        bench(n)


if __name__ == "__main__":
    main()
