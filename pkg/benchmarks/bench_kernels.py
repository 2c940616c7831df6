"""Compiled kernels vs the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 1e4 1e5 1e6] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from slsbounds import _kernels_py as py

try:
    from slsbounds import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None


def cases(n, rng):
    a = np.sort(rng.standard_normal(n))
    b = np.sort(rng.standard_normal(n) * 1.05)
    w = rng.random(n)
    w /= w.sum()
    g = np.linspace(0, 1, n)
    s = np.sort(rng.chisquare(5, n))
    return {
        "ecdf_sup_two": lambda m: m.ecdf_sup_two(a, b),
        "weighted_cdf_sup": lambda m: m.weighted_cdf_sup(a, w, g),
        "band_max_count": lambda m: m.band_max_count(s, 1.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=float, nargs="+", default=[1e4, 1e5, 1e6])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'n':>10}{'python [ms]':>14}{'compiled [ms]':>15}{'speedup':>9}  agree")
    for n in map(int, args.sizes):
        for name, call in cases(n, rng).items():
            tp = min(timeit.repeat(lambda: call(py), number=1, repeat=args.repeat)) * 1e3
            if cy is None:
                print(f"{name:<18}{n:>10}{tp:>14.2f}{'n/a':>15}")
                continue
            tc = min(timeit.repeat(lambda: call(cy), number=1, repeat=args.repeat)) * 1e3
            ok = np.isclose(call(py), call(cy), rtol=1e-12, atol=1e-15)
            print(f"{name:<18}{n:>10}{tp:>14.2f}{tc:>15.2f}{tp / tc:>9.1f}  {ok}")


if __name__ == "__main__":
    main()
