# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: ECDF sup distances and sliding-window band counts."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def ecdf_sup_two(const double[::1] a, const double[::1] b):
    """sup_x |F_a(x) - F_b(x)| for two sorted samples (merge scan)."""
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], i = 0, j = 0
    cdef double fa, fb, d, best = 0.0, x
    if na == 0 or nb == 0:
        return 0.0
    while i < na or j < nb:
        if j >= nb or (i < na and a[i] <= b[j]):
            x = a[i]
        else:
            x = b[j]
        while i < na and a[i] <= x:
            i += 1
        while j < nb and b[j] <= x:
            j += 1
        fa = <double>i / na
        fb = <double>j / nb
        d = fa - fb
        if d < 0:
            d = -d
        if d > best:
            best = d
    return best


def weighted_cdf_sup(const double[::1] x, const double[::1] w, const double[::1] g):
    """sup over sorted atoms x with weights w of |W - G|, both one-sided limits.

    ``g[i]`` is the reference CDF evaluated at ``x[i]``; ties in ``x`` are
    accumulated before comparison.
    """
    cdef Py_ssize_t n = x.shape[0], i = 0, k
    cdef double cum = 0.0, before, best = 0.0, d
    while i < n:
        before = cum
        k = i
        while k < n and x[k] == x[i]:
            cum += w[k]
            k += 1
        d = before - g[i]
        if d < 0:
            d = -d
        if d > best:
            best = d
        d = cum - g[i]
        if d < 0:
            d = -d
        if d > best:
            best = d
        i = k
    return best


def band_max_count(const double[::1] s, double eps):
    """Max number of sorted points inside an open window (x, x + eps)."""
    cdef Py_ssize_t n = s.shape[0], i, j = 0, best = 0
    if eps <= 0:
        return 0
    # window anchored just left of s[i]: counts points in [s[i], s[i] + eps)
    for i in range(n):
        if j < i:
            j = i
        while j < n and s[j] < s[i] + eps:
            j += 1
        if j - i > best:
            best = j - i
    return best
