"""Pure numpy versions of the compiled kernels (same results)."""
import numpy as np


def ecdf_sup_two(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        return 0.0
    x = np.union1d(a, b)
    fa = np.searchsorted(a, x, side="right") / a.size
    fb = np.searchsorted(b, x, side="right") / b.size
    return float(np.abs(fa - fb).max())


def weighted_cdf_sup(x, w, g):
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    if x.size == 0:
        return 0.0
    cum = np.cumsum(w)
    # collapse ties: CDF after the last atom of each distinct value
    last = np.r_[x[1:] != x[:-1], True]
    first = np.r_[True, x[1:] != x[:-1]]
    after = cum[last]
    before = np.r_[0.0, after[:-1]]
    gg = g[first]
    return float(max(np.abs(after - gg).max(), np.abs(before - gg).max()))


def band_max_count(s, eps):
    s = np.asarray(s, dtype=float)
    if eps <= 0 or s.size == 0:
        return 0
    j = np.searchsorted(s, s + eps, side="left")
    return int((j - np.arange(s.size)).max())
