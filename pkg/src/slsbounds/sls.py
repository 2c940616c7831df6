"""Penalized objectives ``f = l - |G u|^2 / 2`` and their smoothness probes."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import norm, qmc

from .linalg import PsdOperator, as_operator

EPS = np.finfo(float).eps


class ModelError(ValueError):
    pass


class ProbeFailure(RuntimeError):
    pass


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class SlsModel:
    """Smooth concave-ish objective with a declared quadratic penalty.

    ``smooth`` is the unpenalized part l, ``smooth_grad`` its gradient and
    ``smooth_hess`` returns ``-nabla^2 l``.  Optional ``d3``/``d4`` give exact
    third/fourth directional derivatives of l; otherwise finite differences
    are used.  ``smooth_batch`` evaluates l on the rows of a matrix.
    """

    dim: int
    smooth: Callable
    smooth_grad: Callable
    smooth_hess: Callable
    penalty: PsdOperator
    d3: Optional[Callable] = None
    d4: Optional[Callable] = None
    quadratic: bool = False
    kind: str = "custom"
    info: Optional[dict] = None
    smooth_batch: Optional[Callable] = None

    def eval(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(self.smooth(u) - 0.5 * self.penalty.quad(u))

    def eval_batch(self, U) -> np.ndarray:
        """Objective at each row of ``U``."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        pen = 0.5 * np.einsum("ij,jk,ik->i", U, self.penalty.matrix, U)
        if self.smooth_batch is not None:
            return self.smooth_batch(U) - pen
        return np.array([self.smooth(u) for u in U]) - pen

    def grad(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.asarray(self.smooth_grad(u), dtype=float) - self.penalty.matrix @ u

    def hess(self, u) -> np.ndarray:
        """Negative Hessian of f (unclamped)."""
        u = np.asarray(u, dtype=float)
        h = np.asarray(self.smooth_hess(u), dtype=float) + self.penalty.matrix
        return 0.5 * (h + h.T)

    def fisher(self, u) -> PsdOperator:
        return PsdOperator(self.hess(u))

    def with_penalty(self, G2) -> "SlsModel":
        return replace(self, penalty=as_operator(G2))


def _design(design):
    X = np.atleast_2d(np.asarray(design, dtype=float))
    return X


def builtin_linear_gaussian(design, response, noise_sd=1.0, G2=None) -> SlsModel:
    """Gaussian regression ``y = X u + sigma eps`` with ridge penalty."""
    X = _design(design)
    y = np.asarray(response, dtype=float).ravel()
    s2 = float(noise_sd) ** 2
    p = X.shape[1]
    G2 = as_operator(np.zeros((p, p)) if G2 is None else G2)
    XtX = X.T @ X / s2
    if np.linalg.matrix_rank(XtX + G2.matrix) < p:
        raise ModelError("ill-posed: design is rank deficient and penalty does not fix it")
    Xty = X.T @ y / s2

    def smooth(u):
        r = y - X @ u
        return -0.5 * float(r @ r) / s2

    def zero_d(u, h):
        return 0.0

    def batch(U):
        R = y[None, :] - U @ X.T
        return -0.5 * np.sum(R * R, axis=1) / s2

    return SlsModel(p, smooth, lambda u: Xty - XtX @ u, lambda u: XtX, G2,
                    d3=zero_d, d4=zero_d, quadratic=True, kind="linear_gaussian",
                    info={"V2": XtX, "noise_sd": float(noise_sd)}, smooth_batch=batch)


def builtin_logistic(design, labels, G2=None, mean_labels=False) -> SlsModel:
    """Logistic regression log-likelihood with ridge penalty.

    ``mean_labels=True`` accepts labels in [0, 1], which gives the expected
    log-likelihood when the labels are success probabilities.
    """
    X = _design(design)
    y = np.asarray(labels, dtype=float).ravel()
    if mean_labels:
        if not np.all((y >= 0) & (y <= 1)):
            raise ModelError("mean labels must lie in [0, 1]")
    elif not np.all((y == 0) | (y == 1)):
        raise ModelError("labels must be 0/1")
    p = X.shape[1]
    G2 = as_operator(np.zeros((p, p)) if G2 is None else G2)
    Xty = X.T @ y

    def smooth(u):
        s = X @ u
        # y s - log(1 + e^s) = y s + log sigma(-s)
        return float(Xty @ u + np.sum(log_expit(-s)))

    def sgrad(u):
        return X.T @ (y - expit(X @ u))

    def shess(u):
        m = expit(X @ u)
        return (X.T * (m * (1 - m))) @ X

    def d3(u, h):
        m = expit(X @ u)
        s = X @ h
        return float(-np.sum(m * (1 - m) * (1 - 2 * m) * s ** 3))

    def d4(u, h):
        m = expit(X @ u)
        s = X @ h
        return float(-np.sum(m * (1 - m) * (1 - 6 * m + 6 * m * m) * s ** 4))

    def batch(U, chunk=4096):
        out = np.empty(U.shape[0])
        for k in range(0, U.shape[0], chunk):
            Uk = U[k:k + chunk]
            out[k:k + chunk] = Uk @ Xty + np.sum(log_expit(-(Uk @ X.T)), axis=1)
        return out

    return SlsModel(p, smooth, sgrad, shess, G2, d3=d3, d4=d4, kind="logistic",
                    info={"n": X.shape[0]}, smooth_batch=batch)


def polynomial_model(dim, terms, G2=None) -> SlsModel:
    """Polynomial smooth part ``l(u) = sum c * prod u[idx]``.

    ``terms`` is a list of ``(coef, indices)``; e.g. ``(-0.5, (0, 0))`` is
    ``-u0^2/2``.  Used for closed-form fixtures and small custom models.
    """
    terms = [(float(c), tuple(int(i) for i in idx)) for c, idx in terms]
    G2 = as_operator(np.zeros((dim, dim)) if G2 is None else G2)

    def mono(u, idx, skip=()):
        out = 1.0
        for k, i in enumerate(idx):
            if k not in skip:
                out *= u[i]
        return out

    def smooth(u):
        return float(sum(c * mono(u, idx) for c, idx in terms))

    def sgrad(u):
        g = np.zeros(dim)
        for c, idx in terms:
            for k, i in enumerate(idx):
                g[i] += c * mono(u, idx, (k,))
        return g

    def shess(u):
        h = np.zeros((dim, dim))
        for c, idx in terms:
            for k, i in enumerate(idx):
                for l, j in enumerate(idx):
                    if l != k:
                        h[i, j] -= c * mono(u, idx, (k, l))
        return h

    def dk(order):
        # k-th directional derivative: sum over ordered k-subsets of positions
        from itertools import permutations

        def d(u, h):
            tot = 0.0
            for c, idx in terms:
                if len(idx) < order:
                    continue
                for pos in permutations(range(len(idx)), order):
                    v = c
                    for k, i in enumerate(idx):
                        v *= h[i] if k in pos else u[i]
                    tot += v
            return float(tot)
        return d

    def batch(U):
        out = np.zeros(U.shape[0])
        for c, idx in terms:
            out += c * np.prod(U[:, list(idx)], axis=1) if idx else c
        return out

    quad = all(len(idx) <= 2 for _, idx in terms)
    return SlsModel(dim, smooth, sgrad, shess, G2, d3=dk(3), d4=dk(4),
                    quadratic=quad, kind="custom_grid", info={"terms": terms},
                    smooth_batch=batch)


# --------------------------------------------------------------------------
# smoothness probes


@dataclass(frozen=True)
class SmoothnessProbe:
    """Configuration and results of a local smoothness probe.

    Directions are drawn inside ``{u : |D u| <= radius}``; results are
    lower estimates of the corresponding suprema.
    """

    center: np.ndarray
    local_metric: PsdOperator
    radius: float = 1.0
    n_directions: int = 512
    seed: int = 0
    n_shells: int = 8
    omega_hat: Optional[float] = None
    tau3_hat: Optional[float] = None
    tau4_hat: Optional[float] = None
    c3_hat: Optional[float] = None
    c4_hat: Optional[float] = None


def sphere_directions(dim, n, seed) -> np.ndarray:
    """Quasi-random unit directions, antithetic pairs plus coordinate axes."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    m = max(int(n) // 2, 1)
    sob = qmc.Sobol(d=dim, scramble=True, seed=make_rng(seed))
    pts = sob.random(1 << int(np.ceil(np.log2(m))))[:m]
    z = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    eye = np.eye(dim)
    return np.vstack([z, -z, eye, -eye])


def _metric_dirs(metric, dim, n, seed):
    """Directions with |D u| = 1 in the supplied metric."""
    s = sphere_directions(dim, n, seed)
    inv_root = metric.func(lambda w: 1.0 / np.sqrt(w))
    return s @ inv_root


def delta3(model, center, u, f0=None, g0=None, H0=None) -> float:
    """Third-order Taylor remainder of f at ``center`` along ``u``.

    Values below the rounding floor of the four terms are reported as 0.
    """
    f0 = model.eval(center) if f0 is None else f0
    g0 = model.grad(center) if g0 is None else g0
    H0 = model.hess(center) if H0 is None else H0
    f1 = model.eval(center + u)
    lin = float(g0 @ u)
    quad = -0.5 * float(u @ H0 @ u)
    val = f1 - f0 - lin - quad
    floor = 64 * EPS * (abs(f1) + abs(f0) + abs(lin) + abs(quad))
    return 0.0 if abs(val) <= floor else val


def estimate_omega(model: SlsModel, probe: SmoothnessProbe) -> float:
    """Sampled sup of ``2 |delta3(x,u)| / |D u|^2`` over ``|D u| <= r``."""
    center = np.asarray(probe.center, dtype=float)
    if model.quadratic:
        return 0.0
    metric = as_operator(probe.local_metric)
    dirs = _metric_dirs(metric, model.dim, probe.n_directions, probe.seed)
    f0, g0, H0 = model.eval(center), model.grad(center), model.hess(center)
    best = 0.0
    for k in range(1, probe.n_shells + 1):
        t = probe.radius * k / probe.n_shells
        for j, d in enumerate(dirs):
            v = delta3(model, center, t * d, f0, g0, H0)
            if not np.isfinite(v):
                raise ProbeFailure(f"non-finite objective along direction {j}: {d.tolist()}")
            best = max(best, 2 * abs(v) / t ** 2)
    return float(best)


def _fd_derivs(fun, center, u, order):
    """Central finite-difference directional derivative of order 3 or 4."""
    h = EPS ** 0.2 * (1.0 + np.linalg.norm(center))
    if h <= 0 or not np.isfinite(h):
        raise ProbeFailure("finite-difference step underflow")
    g = {k: fun(center + k * h * u) for k in (-2, -1, 0, 1, 2)}
    if order == 3:
        val = (g[2] - 2 * g[1] + 2 * g[-1] - g[-2]) / (2 * h ** 3)
    else:
        val = (g[2] - 4 * g[1] + 6 * g[0] - 4 * g[-1] + g[-2]) / h ** 4
    if not np.isfinite(val):
        raise ProbeFailure("finite-difference stencil became unstable")
    return val


def directional_derivative(model, center, u, order) -> float:
    fn = model.d3 if order == 3 else model.d4
    if fn is not None:
        return float(fn(center, u))
    return float(_fd_derivs(model.smooth, center, u, order))


def estimate_self_concordance(model: SlsModel, probe: SmoothnessProbe, n: float,
                              directions=None) -> dict:
    """Sampled ``c3``, ``c4`` with ``tau3 = c3 n^{-1/2}``, ``tau4 = c4 n^{-1}``."""
    center = np.asarray(probe.center, dtype=float)
    metric = as_operator(probe.local_metric)
    if directions is None:
        directions = _metric_dirs(metric, model.dim, probe.n_directions, probe.seed)
    t3 = t4 = 0.0
    if not model.quadratic:
        for u in directions:
            du = np.sqrt(metric.quad(u))
            t3 = max(t3, abs(directional_derivative(model, center, u, 3)) / du ** 3)
            t4 = max(t4, abs(directional_derivative(model, center, u, 4)) / du ** 4)
    return {"tau3_hat": t3, "tau4_hat": t4,
            "c3_hat": t3 * np.sqrt(n), "c4_hat": t4 * n}


def run_probe(model, probe: SmoothnessProbe, n: float = 1.0) -> SmoothnessProbe:
    """Fill every estimate of a probe."""
    om = estimate_omega(model, probe)
    sc = estimate_self_concordance(model, probe, n)
    return replace(probe, omega_hat=om, **sc)


# --------------------------------------------------------------------------
# JSON model specs


def load_model(spec) -> SlsModel:
    """Build a model from ``{kind, payload}`` (dict, JSON string or path)."""
    if isinstance(spec, str):
        spec = json.loads(spec) if spec.lstrip().startswith("{") else json.load(open(spec))
    kind = spec.get("kind")
    pl = spec.get("payload", {})
    if kind == "linear_gaussian":
        return builtin_linear_gaussian(pl["design"], pl["response"], pl.get("noise_sd", 1.0),
                                       pl.get("G2"))
    if kind == "logistic":
        return builtin_logistic(pl["design"], pl["labels"], pl.get("G2"))
    if kind == "custom_grid":
        return polynomial_model(pl["dim"], [(c, tuple(i)) for c, i in pl["terms"]], pl.get("G2"))
    if kind == "eio":
        from .eio import EioProblem, eio_model
        return eio_model(EioProblem.from_json(pl))
    raise ModelError(f"unknown model kind {kind!r}")
