"""Kernel dispatch: compiled extension when importable, numpy fallback otherwise.

Set ``SLSBOUNDS_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("SLSBOUNDS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def ecdf_sup_two(a_sorted, b_sorted) -> float:
    return float(_impl.ecdf_sup_two(_c(a_sorted), _c(b_sorted)))


def weighted_cdf_sup(x_sorted, w, g) -> float:
    return float(_impl.weighted_cdf_sup(_c(x_sorted), _c(w), _c(g)))


def band_max_count(s_sorted, eps) -> int:
    return int(_impl.band_max_count(_c(s_sorted), float(eps)))
