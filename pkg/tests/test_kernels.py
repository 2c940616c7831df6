import numpy as np
from hypothesis import given, strategies as st
from scipy.stats import norm

from slsbounds import _kernels_py as py, kernels

try:
    from slsbounds import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None


def brute_two(a, b):
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return np.abs(fa - fb).max()


def brute_band(s, eps):
    # open band (x, x + eps) slid just below each point
    return max(np.sum((s >= x) & (s < x + eps)) for x in s)


arrays = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=60)


@given(arrays, arrays)
def test_ecdf_sup_two(a, b):
    a, b = np.sort(a), np.sort(b)
    ref = brute_two(a, b)
    assert np.isclose(py.ecdf_sup_two(a, b), ref)
    assert np.isclose(kernels.ecdf_sup_two(a, b), ref)
    if cy is not None:
        assert np.isclose(cy.ecdf_sup_two(a, b), ref)


@given(arrays, st.floats(0.01, 3))
def test_band_count(s, eps):
    s = np.sort(np.round(s, 2))
    ref = brute_band(s, eps)
    assert py.band_max_count(s, eps) == ref
    assert kernels.band_max_count(s, eps) == ref


@given(st.integers(1, 50), st.integers(0, 1000))
def test_weighted_cdf_sup_backends_agree(n, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(np.round(rng.standard_normal(n), 1))
    w = rng.random(n)
    w /= w.sum()
    g = norm.cdf(x)
    ref = py.weighted_cdf_sup(x, w, g)
    # brute: both one-sided limits of the weighted CDF against the continuous g
    F = np.array([w[x <= t].sum() for t in x])
    Fm = np.array([w[x < t].sum() for t in x])
    assert np.isclose(ref, max(np.abs(F - g).max(), np.abs(Fm - g).max()))
    if cy is not None:
        assert np.isclose(cy.weighted_cdf_sup(x, w, g), ref)


def test_backend_flag():
    assert kernels.BACKEND in ("compiled", "python")
