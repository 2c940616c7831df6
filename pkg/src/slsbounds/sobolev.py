"""Penalty calibration: effective dimension in the scale, trade-off solver,
Sobolev penalties and rate experiments in the sequence model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from .linalg import PsdOperator, as_operator
from .sls import make_rng

W_LO, W_HI, BISECT_ITER = 1e-8, 1e12, 200


class BracketError(RuntimeError):
    pass


class SmoothnessMismatch(ValueError):
    pass


def _diag_or_op(a):
    a = np.asarray(getattr(a, "matrix", a), dtype=float)
    return a if a.ndim == 1 else None


def effective_dim_of_scale(D2, G02, w) -> float:
    """``tr{D^2 (D^2 + w G0^2)^{-1}}``; vectors are read as diagonals."""
    d, g = _diag_or_op(D2), _diag_or_op(G02)
    if d is not None and g is not None:
        den = d + w * g
        if np.any(den <= 0):
            raise np.linalg.LinAlgError("D2 + w G02 is singular")
        return float(np.sum(d / den))
    D2 = as_operator(np.diag(d) if d is not None else D2)
    G02 = as_operator(np.diag(g) if g is not None else G02)
    S = PsdOperator(D2.matrix + w * G02.matrix)
    S.check_invertible()
    return float(np.trace(S.solve(D2.matrix)))


@dataclass(frozen=True)
class PenaltyFamily:
    D2: object
    G02: object

    def effective(self, w) -> float:
        return effective_dim_of_scale(self.D2, self.G02, w)


def solve_tradeoff(D2, G02, x, C0, p_fun=None, lo=W_LO, hi=W_HI) -> float:
    """Unique ``w`` with ``sqrt(p(w)) + sqrt(2x) = C0 sqrt(w)``.

    Bisection on the gap ``C0 sqrt(w) - sqrt(p(w)) - sqrt(2x)``, which is
    strictly increasing.  ``p_fun`` overrides ``p(w)`` (used for the
    degenerate case ``p = 0``).
    """
    p_fun = p_fun or (lambda w: effective_dim_of_scale(D2, G02, w))

    def gap(w):
        return C0 * np.sqrt(w) - np.sqrt(max(p_fun(w), 0.0)) - np.sqrt(2 * x)

    glo, ghi = gap(lo), gap(hi)
    if glo > 0 or ghi < 0:
        raise BracketError(f"no sign change on [{lo:g}, {hi:g}]: gap {glo:.3g}, {ghi:.3g}")
    # bisection in log scale; the bracket spans 20 decades
    a, b = np.log(lo), np.log(hi)
    for _ in range(BISECT_ITER):
        m = 0.5 * (a + b)
        if gap(np.exp(m)) < 0:
            a = m
        else:
            b = m
        if b - a < 1e-15:
            break
    return float(np.exp(0.5 * (a + b)))


def sobolev_penalty(s0, C0_ball, w, p) -> np.ndarray:
    """Eigenvalues ``g_j^2 = w j^{2 s0} / C0``, ``j = 1..p``."""
    j = np.arange(1, int(p) + 1, dtype=float)
    return w * j ** (2 * s0) / C0_ball


def aware_scale(s0, C0_ball, n) -> float:
    """Rate-optimal scale ``(C0 n)^{1/(2 s0 + 1)}``."""
    return float((C0_ball * n) ** (1 / (2 * s0 + 1)))


def mismatch_scale(s, s0, C0_ball, n) -> float:
    """``w = n^{-1} (C0 n)^{2s/(2 s0 + 1)}`` for the penalty ``j^{2s}/w``."""
    if s < s0:
        raise SmoothnessMismatch(f"penalty smoothness s={s} below the true s0={s0}")
    if s <= 0.5:
        raise SmoothnessMismatch("need s > 1/2")
    return float((C0_ball * n) ** (2 * s / (2 * s0 + 1)) / n)


def mismatch_penalty(s, w, p) -> np.ndarray:
    j = np.arange(1, int(p) + 1, dtype=float)
    return j ** (2 * s) / w


def cutoff(s, w, n) -> float:
    """Index where the penalty ``j^{2s}/w`` reaches the noise level ``n``."""
    return float((w * n) ** (1 / (2 * s)))


def ball_boundary_signal(s0, C0_ball, p) -> np.ndarray:
    """``v_j ~ j^{-s0-1/2-0.01}`` scaled to ``sum j^{2 s0} v_j^2 = C0``."""
    j = np.arange(1, int(p) + 1, dtype=float)
    v = j ** (-s0 - 0.51)
    return v * np.sqrt(C0_ball / np.sum(j ** (2 * s0) * v * v))


def sequence_pmle(y, n, g2) -> np.ndarray:
    """Closed-form penalized fit with ``D^2 = n I``: ``n y / (n + g^2)``."""
    return n * y / (n + g2)


def rate_experiment(s0, n_list, reps=200, seed=0, C0_ball=1.0, s=None, p=2000) -> dict:
    """Mean squared error of the penalized fit over ``n`` and its log-log slope.

    ``s=None`` uses the aware penalty; otherwise the penalty ``j^{2s}/w`` with
    the mismatch scale.  Each ``n`` draws ``reps`` replicates from its own
    derived seed.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4:
        raise ValueError("need at least four sample sizes")
    ups = ball_boundary_signal(s0, C0_ball, p)
    seeds = np.random.SeedSequence(int(seed)).spawn(len(n_list))
    rows = []
    for n, ss in zip(n_list, seeds):
        if s is None:
            g2 = sobolev_penalty(s0, C0_ball, aware_scale(s0, C0_ball, n), p)
        else:
            g2 = mismatch_penalty(s, mismatch_scale(s, s0, C0_ball, n), p)
        rng = np.random.Generator(np.random.Philox(ss))
        y = ups + rng.standard_normal((reps, p)) / np.sqrt(n)
        err = np.sum((sequence_pmle(y, n, g2) - ups) ** 2, axis=1)
        rows.append({"n": n, "mean_mse": float(err.mean()),
                     "se": float(err.std(ddof=1) / np.sqrt(reps))})
    fit = linregress(np.log([r["n"] for r in rows]), np.log([r["mean_mse"] for r in rows]))
    return {"slope": float(fit.slope), "slope_se": float(fit.stderr),
            "intercept": float(fit.intercept), "target": -2 * s0 / (2 * s0 + 1),
            "per_n_mse": rows}


def pG_over_n(s0, C0_ball, n, p=2000) -> float:
    """``p_G / n`` for the aware penalty with ``D^2 = n I``."""
    g2 = sobolev_penalty(s0, C0_ball, aware_scale(s0, C0_ball, n), p)
    return effective_dim_of_scale(np.full(p, float(n)), g2, 1.0) / n
