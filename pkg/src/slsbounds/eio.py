"""Error-in-operator model: the image ``z`` is observed through an operator
``A`` known only up to a pilot ``A_hat`` with noise scale ``1/mu``.

The parameter is ``u = (theta, vec A)`` with ``A`` stacked row by row, and

    f(theta, A) = -|z - A theta|^2/2 - mu^2 |A_hat - A|_Fr^2 / 2
                  - theta' G^2 theta / 2 - sum_m A_m' K_m^2 A_m / 2 .
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import BlockOperator, PsdOperator, as_operator, psd_leq
from .marginal import dominance, marginal_tv_bound, separability
from .pmle import PmleResult, RegionExit, newton_maximize
from .sls import SlsModel, SmoothnessProbe, estimate_self_concordance


class EioError(ValueError):
    pass


class WarmStartError(RuntimeError):
    pass


def _mat(a):
    return np.atleast_2d(np.asarray(getattr(a, "matrix", a), dtype=float))


@dataclass(frozen=True, eq=False)
class EioProblem:
    z: np.ndarray
    A_hat: np.ndarray
    mu: float
    G2: PsdOperator
    G02: PsdOperator
    K2: list
    rho: float = 0.5
    info: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.A_hat.shape[1]

    @property
    def q(self) -> int:
        return self.A_hat.shape[0]

    @property
    def dim(self) -> int:
        return self.p + self.p * self.q

    @classmethod
    def build(cls, z, A_hat, mu, G2=None, G02=None, K2=None, rho=0.5, info=None):
        A_hat = np.atleast_2d(np.asarray(A_hat, dtype=float))
        q, p = A_hat.shape
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (q,):
            raise EioError(f"z has shape {z.shape}, expected ({q},)")
        if not mu > 0:
            raise EioError("mu must be positive")
        if not 0 < rho < 1:
            raise EioError("rho must lie in (0, 1)")
        G2 = PsdOperator(np.zeros((p, p))) if G2 is None else as_operator(G2)
        G02 = G2 if G02 is None else as_operator(G02)
        if G2.dim != p or G02.dim != p:
            raise EioError("penalty dimension does not match the operator")
        if not psd_leq(G02.matrix, G2.matrix):
            raise EioError("identifiability floor G02 must satisfy G02 <= G2")
        if K2 is None:
            K2 = [PsdOperator(np.zeros((p, p))) for _ in range(q)]
        else:
            K2 = [as_operator(k) for k in K2]
        if len(K2) != q or any(k.dim != p for k in K2):
            raise EioError("need q operator-smoothness blocks of size p")
        return cls(z, A_hat, float(mu), G2, G02, K2, float(rho), dict(info or {}))

    def to_json(self) -> dict:
        return {"z": self.z.tolist(), "A_hat": self.A_hat.tolist(), "mu": self.mu,
                "G2": self.G2.matrix.tolist(), "G02": self.G02.matrix.tolist(),
                "K2": [k.matrix.tolist() for k in self.K2], "rho": self.rho}

    @classmethod
    def from_json(cls, d) -> "EioProblem":
        return cls.build(d["z"], d["A_hat"], d["mu"], d.get("G2"), d.get("G02"), d.get("K2"),
                         d.get("rho", 0.5))


@dataclass
class EioState:
    theta: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.A))):
            raise EioError("state has non-finite entries")

    def stack(self) -> np.ndarray:
        return np.concatenate([self.theta, self.A.ravel()])

    @classmethod
    def unstack(cls, u, p, q) -> "EioState":
        u = np.asarray(u, dtype=float)
        return cls(u[:p].copy(), u[p:].reshape(q, p).copy())


def _check_state(pb: EioProblem, st: EioState):
    if st.theta.shape != (pb.p,) or st.A.shape != (pb.q, pb.p):
        raise EioError(f"state shapes {st.theta.shape}, {st.A.shape} do not match "
                       f"p={pb.p}, q={pb.q}")


# --------------------------------------------------------------------------
# objective and derivatives


def objective_grad_hess(pb: EioProblem, st: EioState) -> dict:
    """Penalized objective, gradient in (theta, A) and the negative-Hessian blocks.

    ``F_tt = A'A + G^2``, ``F_{A_m A_m} = theta theta' + mu^2 I + K_m^2`` and
    ``F_{theta A_m} = (A_m' theta - z_m) I + A_m theta'``.  ``hess`` is the
    assembled matrix on the stacked parameter.
    """
    _check_state(pb, st)
    p, q, mu2 = pb.p, pb.q, pb.mu ** 2
    th, A = st.theta, st.A
    res = pb.z - A @ th
    dA = A - pb.A_hat
    f = (-0.5 * res @ res - 0.5 * mu2 * np.sum(dA * dA) - 0.5 * pb.G2.quad(th)
         - 0.5 * sum(k.quad(a) for k, a in zip(pb.K2, A)))
    g_th = A.T @ res - pb.G2.matrix @ th
    g_A = np.outer(res, th) - mu2 * dA - np.array([k.matrix @ a for k, a in zip(pb.K2, A)])
    F_tt = A.T @ A + pb.G2.matrix
    F_AA = [np.outer(th, th) + mu2 * np.eye(p) + k.matrix for k in pb.K2]
    F_tA = [(a @ th - zm) * np.eye(p) + np.outer(a, th) for a, zm in zip(A, pb.z)]
    H = np.zeros((pb.dim, pb.dim))
    H[:p, :p] = F_tt
    for m in range(q):
        sl = slice(p + m * p, p + (m + 1) * p)
        H[sl, sl] = F_AA[m]
        H[:p, sl] = F_tA[m]
        H[sl, :p] = F_tA[m].T
    return {"f": float(f), "grad_theta": g_th, "grad_A": g_A,
            "grad": np.concatenate([g_th, g_A.ravel()]),
            "F_tt": F_tt, "F_AA": F_AA, "F_tA": F_tA, "hess": H}


def eio_model(pb: EioProblem) -> SlsModel:
    """The problem as an :class:`SlsModel` on the stacked parameter.

    The declared penalty is ``block{G^2, K_1^2, ..., K_q^2}``; the operator
    fidelity ``mu^2 |A_hat - A|^2`` stays in the smooth part.
    """
    p, q, mu2 = pb.p, pb.q, pb.mu ** 2
    pen = np.zeros((pb.dim, pb.dim))
    pen[:p, :p] = pb.G2.matrix
    for m, k in enumerate(pb.K2):
        pen[p + m * p:p + (m + 1) * p, p + m * p:p + (m + 1) * p] = k.matrix
    penalty = PsdOperator(pen)

    def split(u):
        return u[:p], u[p:].reshape(q, p)

    def smooth(u):
        th, A = split(u)
        r = pb.z - A @ th
        d = A - pb.A_hat
        return float(-0.5 * r @ r - 0.5 * mu2 * np.sum(d * d))

    def sgrad(u):
        th, A = split(u)
        r = pb.z - A @ th
        return np.concatenate([A.T @ r, (np.outer(r, th) - mu2 * (A - pb.A_hat)).ravel()])

    def shess(u):
        return objective_grad_hess(pb, EioState.unstack(u, p, q))["hess"] - pen

    def d3(u, h):
        th, A = split(u)
        xi, Om = split(np.asarray(h, dtype=float))
        return float(-6.0 * (Om @ th + A @ xi) @ (Om @ xi))

    def d4(u, h):
        xi, Om = split(np.asarray(h, dtype=float))
        v = Om @ xi
        return float(-12.0 * v @ v)

    def batch(U):
        th = U[:, :p]
        A = U[:, p:].reshape(-1, q, p)
        r = pb.z - np.einsum("nij,nj->ni", A, th)
        d = A - pb.A_hat
        return -0.5 * np.sum(r * r, axis=1) - 0.5 * mu2 * np.sum(d * d, axis=(1, 2))

    return SlsModel(pb.dim, smooth, sgrad, shess, penalty, d3=d3, d4=d4, kind="eio",
                    info={"p": p, "q": q, "mu": pb.mu}, smooth_batch=batch)


# --------------------------------------------------------------------------
# warm start region and dimensions


def warm_start_check(pb: EioProblem, st: EioState, tol=1e-12) -> dict:
    """``4|theta|^2 <= rho mu^2`` and ``4|A theta - z|^2 I <= rho mu^2 (A'A + 2 G0^2)``."""
    _check_state(pb, st)
    rm2 = pb.rho * pb.mu ** 2
    m1 = rm2 - 4 * float(st.theta @ st.theta)
    r = st.A @ st.theta - pb.z
    lo = float(np.linalg.eigvalsh(rm2 * (st.A.T @ st.A + 2 * pb.G02.matrix))[0])
    m2 = lo - 4 * float(r @ r)
    scale = max(rm2, 1.0)
    ok = m1 >= -tol * scale and m2 >= -tol * scale * max(1.0, abs(lo))
    return {"in_region": bool(ok), "margins": {"theta": m1, "residual": m2}}


def dims(pb: EioProblem, st: EioState) -> dict:
    """Target and nuisance effective dimensions and the full-dimension bound."""
    _check_state(pb, st)
    AtA = st.A.T @ st.A
    F = PsdOperator(AtA + pb.G2.matrix)
    F.check_invertible()
    p_target = float(np.trace(F.solve(AtA + pb.G02.matrix)))
    mu2 = pb.mu ** 2
    q_nuis = float(sum(mu2 * np.trace(np.linalg.inv(mu2 * np.eye(pb.p) + k.matrix))
                       for k in pb.K2))
    rho = pb.rho
    p_bar = p_target / (1 - rho) + (1 + rho / 4) * q_nuis / (1 - rho)
    return {"p_target": p_target, "q_nuis": q_nuis, "p_full_bound": float(p_bar)}


def plug_in(pb: EioProblem) -> np.ndarray:
    """Penalized solve with the pilot operator, ``(A_hat'A_hat + G^2)^{-1} A_hat' z``."""
    F = PsdOperator(pb.A_hat.T @ pb.A_hat + pb.G2.matrix)
    F.check_invertible()
    return F.solve(pb.A_hat.T @ pb.z)


def self_concordance_constants(pb: EioProblem) -> dict:
    return {"c3": 6.0 / pb.mu, "c4": 3.0 / pb.mu ** 2}


def concentration_condition(mu, r_bar, n) -> dict:
    """``c3 r_bar / sqrt(n) <= 1/3`` with ``c3 = 6/mu``."""
    v = 6.0 / mu * r_bar / np.sqrt(n)
    return {"value": float(v), "ok": bool(v <= 1 / 3)}


def local_metric(pb: EioProblem, st: EioState):
    """``block{A'A + G0^2, mu^2 I}`` and ``n = lambda_min(A'A + G0^2)``."""
    D2 = st.A.T @ st.A + pb.G02.matrix
    M = np.zeros((pb.dim, pb.dim))
    M[:pb.p, :pb.p] = D2
    M[pb.p:, pb.p:] = pb.mu ** 2 * np.eye(pb.p * pb.q)
    return PsdOperator(M), float(np.linalg.eigvalsh(D2)[0])


def empirical_self_concordance(pb: EioProblem, st: EioState, n_directions=10_000, seed=0) -> dict:
    """Sampled ``c3``, ``c4`` in the local metric, beside the analytic constants."""
    metric, n = local_metric(pb, st)
    if n <= 0:
        raise EioError("A'A + G0^2 is singular; effective sample size undefined")
    probe = SmoothnessProbe(st.stack(), metric, n_directions=n_directions, seed=seed)
    est = estimate_self_concordance(eio_model(pb), probe, n)
    est.update(self_concordance_constants(pb), n_eff=n)
    return est


# --------------------------------------------------------------------------
# fitting


def _default_init(pb: EioProblem) -> EioState:
    for th in (plug_in(pb), np.zeros(pb.p)):
        st = EioState(th, pb.A_hat.copy())
        if warm_start_check(pb, st)["in_region"]:
            return st
    raise WarmStartError("neither the plug-in nor theta = 0 lies in the warm-start region")


def fit_joint(pb: EioProblem, init: Optional[EioState] = None, tol=1e-8, max_iter=200):
    """Joint maximizer over (theta, A) by Newton on the stacked parameter.

    The operator coordinates are rescaled by ``mu`` (and centred at ``init``)
    internally so the Hessian stays well conditioned for large ``mu``;
    ``grad_norm`` of the result is measured in these coordinates.  Trial points outside the
    warm-start region are rejected (step halved).
    """
    init = _default_init(pb) if init is None else init
    _check_state(pb, init)
    if not warm_start_check(pb, init)["in_region"]:
        raise WarmStartError("initial state is outside the warm-start region")
    p, q = pb.p, pb.q
    s = np.concatenate([np.ones(p), np.full(p * q, pb.mu)])
    u0 = init.stack()

    def state(v):
        return EioState.unstack(u0 + v / s, p, q)

    def fun(v):
        return objective_grad_hess(pb, state(v))["f"]

    def grad(v):
        return objective_grad_hess(pb, state(v))["grad"] / s

    def nhess(v):
        return objective_grad_hess(pb, state(v))["hess"] / np.outer(s, s)

    def feasible(v):
        return warm_start_check(pb, state(v))["in_region"]

    try:
        v, f, g, H, it, trace = newton_maximize(fun, grad, nhess, np.zeros(u0.size), tol,
                                                max_iter, feasible)
    except RegionExit as e:
        raise WarmStartError(str(e)) from e
    st = state(v)
    og = objective_grad_hess(pb, st)
    # gradient norm in the rescaled coordinates (operator part divided by mu)
    res = PmleResult(st.stack(), float(f), float(np.linalg.norm(g)),
                     PsdOperator(og["hess"], allow_indefinite=True), it, True, trace)
    return st, res


# --------------------------------------------------------------------------
# regression ingestion


def _features(F, X, name):
    if callable(F):
        out = np.asarray(F(X), dtype=float)
    else:
        out = np.column_stack([np.asarray([fk(x) for x in X], dtype=float) for fk in F])
    if out.ndim == 1:
        out = out[:, None]
    if not np.all(np.isfinite(out)):
        raise EioError(f"{name} features are not finite")
    return out


def ingest_regression(X, Y, Psi, Phi, sigma=1.0, sigma_X=1.0, G2=None, G02=None, K2=None,
                      rho=0.5) -> EioProblem:
    """Regression with an unknown design as an error-in-operator problem.

    ``Psi`` (p features) and ``Phi`` (q features) are either a callable on
    the whole design or a list of scalar functions.  Builds
    ``A_hat = sum_i Phi(X_i) Psi(X_i)'``, ``z_k = sum_i Y_i Phi_k(X_i)`` and
    ``mu = sqrt(n) / sigma_X``.  ``sigma`` is recorded only.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0] if X.ndim else 0
    if n == 0:
        raise EioError("no observations")
    Y = np.asarray(Y, dtype=float).ravel()
    if Y.size != n:
        raise EioError("X and Y have different lengths")
    P = _features(Psi, X, "Psi")
    H = _features(Phi, X, "Phi")
    A_hat = H.T @ P
    z = H.T @ Y
    mu = np.sqrt(n) / sigma_X
    return EioProblem.build(z, A_hat, mu, G2, G02, K2, rho,
                            info={"n": n, "sigma": float(sigma), "sigma_X": float(sigma_X),
                                  "mu_sq": float(mu ** 2)})


# --------------------------------------------------------------------------
# certificate


def eio_laplace_certificate(pb: EioProblem, st: EioState, Q=None, x=3.0, C=2.0, C0=None) -> dict:
    """Marginal Laplace certificate for the target ``theta`` at the joint fit.

    Uses ``c3 = 6/mu``, ``n = lambda_min(A'A + G0^2)`` and ``F_eff`` from the
    separability of the full negative Hessian.  When the condition
    ``c3 r_bar / sqrt(n) <= 1/3`` fails the report is marked inapplicable.
    """
    p = pb.p
    Q = np.eye(p) if Q is None else _mat(Q)
    region = warm_start_check(pb, st)
    d = dims(pb, st)
    _, n = local_metric(pb, st)
    if n <= 0:
        raise EioError("A'A + G0^2 is singular; effective sample size undefined")
    c3 = self_concordance_constants(pb)["c3"]
    r_target = 2 * np.sqrt(d["p_target"]) + np.sqrt(2 * x)
    r_bar = 2 * np.sqrt(d["p_full_bound"]) + np.sqrt(2 * x)
    cond = concentration_condition(pb.mu, r_bar, n)["value"]
    H = objective_grad_hess(pb, st)["hess"]
    sep = separability(BlockOperator.split(H, p))
    F_eff = sep["efficient"]
    dom = dominance(Q, F_eff, C0)
    bound = marginal_tv_bound(c3, n, r_target, d["p_target"], r_bar, dom["dimQ"], x, C,
                              dom.get("ok", True))
    return {"applicable": bool(cond <= 1 / 3 and region["in_region"]),
            "condition": float(cond), "in_region": region["in_region"],
            "margins": region["margins"], "n_eff": n, "c3": c3, "r_target": float(r_target),
            "r_bar": float(r_bar), **d, "rho_sep": sep["rho"], "sandwich_ok": sep["sandwich_ok"],
            "F_eff": F_eff.matrix, "dominance": dom, **bound}
