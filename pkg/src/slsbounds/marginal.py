"""Semiparametric marginals: nuisance profiles, Gaussian mixtures, orthogonalization."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .gauss_compare import gaussian_ball_prob
from .linalg import BlockOperator, PsdOperator, as_operator, psd_leq, schur_efficient, sqrt_inv_sqrt, sym_norms
from .pmle import newton_maximize
from .sls import SlsModel

NU = 2.0 / 3.0


class MarginalError(ValueError):
    pass


@dataclass
class NuisanceProfile:
    eta: np.ndarray
    theta_eta: np.ndarray
    F_eta: PsdOperator
    phi_eta: float
    delta_eta: float

    @property
    def weight(self) -> float:
        return float(np.exp(self.phi_eta + self.delta_eta))


def _split(model: SlsModel, p):
    q = model.dim - p
    if p <= 0 or q <= 0:
        raise MarginalError("need target and nuisance blocks of positive size")
    return q


def profile(model: SlsModel, p, eta, warm=None, ups_star=None, F_ref=None, tol=1e-10):
    """Profile maximizer in the target ``theta`` at fixed nuisance ``eta``.

    ``phi`` and ``delta`` are measured against the global maximizer
    ``ups_star``; ``F_ref`` defaults to the target block of the negative
    Hessian there, so that the profile at ``eta*`` has ``delta = 0``.
    """
    _split(model, p)
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    warm = np.zeros(p) if warm is None else np.asarray(warm, dtype=float)

    def full(t):
        return np.concatenate([t, eta])

    x, fx, _, H, _, _ = newton_maximize(lambda t: model.eval(full(t)),
                                        lambda t: model.grad(full(t))[:p],
                                        lambda t: model.hess(full(t))[:p, :p], warm, tol)
    F_eta = PsdOperator(H)
    if ups_star is None:
        phi = 0.0
        delta = 0.0
    else:
        ups_star = np.asarray(ups_star, dtype=float)
        phi = fx - model.eval(ups_star)
        F = as_operator(F_ref) if F_ref is not None else PsdOperator(model.hess(ups_star)[:p, :p])
        _, inv_root = sqrt_inv_sqrt(F_eta)
        M = PsdOperator(inv_root @ F.matrix @ inv_root)
        delta = 0.5 * M.logdet()
    return NuisanceProfile(eta, x, F_eta, float(phi), float(delta))


def nuisance_grid(eta_star, scales, resolution=21, width=8.0):
    """Tensor grid ``eta* +- width * scale`` per axis and the cell volume."""
    eta_star = np.atleast_1d(np.asarray(eta_star, dtype=float))
    scales = np.broadcast_to(np.asarray(scales, dtype=float), eta_star.shape)
    axes = [np.linspace(c - width * s, c + width * s, resolution) for c, s in zip(eta_star, scales)]
    pts = np.array(list(itertools.product(*axes)))
    vol = float(np.prod([a[1] - a[0] for a in axes])) if resolution > 1 else 1.0
    return pts, vol


def profile_grid(model: SlsModel, p, ups_star, resolution=21, width=8.0, scales=None):
    """Profiles over a nuisance grid covering the nuisance marginal.

    Default scales are the marginal posterior standard deviations of the
    nuisance under the Laplace approximation at ``ups_star``.
    """
    ups_star = np.asarray(ups_star, dtype=float)
    Ffull = PsdOperator(model.hess(ups_star))
    if scales is None:
        scales = np.sqrt(np.diag(Ffull.inv())[p:])
    pts, vol = nuisance_grid(ups_star[p:], scales, resolution, width)
    F_ref = PsdOperator(Ffull.matrix[:p, :p])
    out = []
    warm = ups_star[:p]
    for eta in pts:
        pr = profile(model, p, eta, warm, ups_star, F_ref)
        out.append(pr)
    return out, np.full(len(out), vol)


def _weights(profiles, quadrature_weights=None):
    w = np.array([pr.phi_eta + pr.delta_eta for pr in profiles])
    w = np.exp(w - w.max())
    if quadrature_weights is not None:
        w = w * np.asarray(quadrature_weights, dtype=float)
    if w.sum() <= 0:
        raise MarginalError("mixture weights vanish")
    return w / w.sum()


def mixture_weights(profiles, quadrature_weights=None) -> np.ndarray:
    """Normalized mixture weights ``e^{phi + delta}`` times cell volumes."""
    if not profiles:
        raise MarginalError("empty nuisance grid")
    return _weights(profiles, quadrature_weights)


def mixture_moments(profiles, quadrature_weights=None):
    """Mean and covariance of the Gaussian mixture."""
    w = mixture_weights(profiles, quadrature_weights)
    means = np.array([pr.theta_eta for pr in profiles])
    m = w @ means
    cov = sum(wi * (pr.F_eta.inv() + np.outer(pr.theta_eta - m, pr.theta_eta - m))
              for wi, pr in zip(w, profiles))
    return m, cov


def mixture_marginal(profiles, Q, r, theta_star, quadrature_weights=None, n_samples=100_000,
                     seed=0):
    """``sum w P(|Q(theta_eta - theta* + F_eta^{-1/2} gamma)| <= r) / sum w``.

    Common random numbers across profiles (same seed) keep the mixture
    smooth in ``eta``.
    """
    w = mixture_weights(profiles, quadrature_weights)
    Q = np.atleast_2d(np.asarray(getattr(Q, "matrix", Q), dtype=float))
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    for wi, pr in zip(w, profiles):
        if wi < 1e-300:
            continue
        S = Q @ pr.F_eta.inv() @ Q.T
        out += wi * gaussian_ball_prob(S, r, Q @ (pr.theta_eta - theta_star), n_samples, seed)
    return out


def separability(F: BlockOperator) -> dict:
    """rho, efficient block and the sandwich check ``(1-rho) F_tt <= F_eff <= F_tt``."""
    tt = PsdOperator(F.tt)
    ee = PsdOperator(F.ee)
    tt.check_invertible()
    ee.check_invertible()
    _, tir = sqrt_inv_sqrt(tt)
    M = tir @ F.te @ ee.solve(F.et) @ tir
    rho = float(np.abs(np.linalg.eigvalsh(0.5 * (M + M.T))).max())
    eff = schur_efficient(F)
    ok = psd_leq((1 - rho) * F.tt, eff.matrix) and psd_leq(eff.matrix, F.tt)
    return {"rho": rho, "efficient": eff, "sandwich_ok": bool(ok)}


def orthogonalize(model: SlsModel, p, ups_star, F: BlockOperator | None = None):
    """One-point orthogonalization ``nu = eta + C (theta - theta*)``.

    Returns ``(new_model, C, to_new)`` where ``new_model(theta, nu) =
    model(theta, nu - C (theta - theta*))`` and ``to_new`` maps old
    coordinates to new ones.
    """
    q = _split(model, p)
    ups_star = np.asarray(ups_star, dtype=float)
    if F is None:
        F = BlockOperator.split(model.hess(ups_star), p)
    ee = PsdOperator(F.ee)
    C = ee.solve(F.et)
    th_star = ups_star[:p]
    M = np.eye(p + q)
    M[p:, :p] = -C
    c = np.zeros(p + q)
    c[p:] = C @ th_star
    G2 = model.penalty.matrix
    G2n = PsdOperator(M.T @ G2 @ M)

    def back(v):
        return M @ v + c

    def smooth(v):
        return model.eval(back(v)) + 0.5 * G2n.quad(v)

    def sgrad(v):
        return M.T @ model.grad(back(v)) + G2n.matrix @ v

    def shess(v):
        return M.T @ model.hess(back(v)) @ M - G2n.matrix

    d3 = d4 = None
    if model.d3 is not None:
        d3 = lambda v, h: model.d3(back(v), M @ h)  # noqa: E731
    if model.d4 is not None:
        d4 = lambda v, h: model.d4(back(v), M @ h)  # noqa: E731
    batch = None
    if model.smooth_batch is not None:
        def batch(V):
            B = V @ M.T + c
            return model.eval_batch(B) + 0.5 * np.einsum("ij,jk,ik->i", V, G2n.matrix, V)

    new = SlsModel(model.dim, smooth, sgrad, shess, G2n, d3=d3, d4=d4,
                   quadratic=model.quadratic, kind=model.kind + "+orth",
                   info={"C": C, "base": model.info}, smooth_batch=batch)

    def to_new(theta, eta):
        theta = np.asarray(theta, dtype=float)
        return np.concatenate([theta, np.asarray(eta, dtype=float) + C @ (theta - th_star)])

    return new, C, to_new


def homogenization_error(profiles, Q, F_ref, quadrature_weights=None) -> dict:
    """Weighted nuclear-norm spread of ``F_eta^{-1}`` around ``F_ref^{-1}``."""
    w = mixture_weights(profiles, quadrature_weights)
    Q = np.atleast_2d(np.asarray(getattr(Q, "matrix", Q), dtype=float))
    F_ref = as_operator(F_ref)
    Fi = F_ref.inv()
    QFQ = Q @ Fi @ Q.T
    fr = sym_norms(QFQ)["frobenius"]
    _, rir = sqrt_inv_sqrt(F_ref)
    terms, dp = [], 0.0
    for pr in profiles:
        terms.append(sym_norms(Q @ (Fi - pr.F_eta.inv()) @ Q.T)["nuclear"])
        M = rir @ pr.F_eta.matrix @ rir - np.eye(F_ref.dim)
        dp = max(dp, float(np.abs(np.linalg.eigvalsh(0.5 * (M + M.T))).max()))
    delta_F = float(w @ np.array(terms)) / fr
    bound = dp / (1 - dp) * float(np.trace(QFQ)) / fr if dp < 1 else np.inf
    return {"Delta_F": delta_F, "bound": float(bound), "delta_plus": dp}


def shift_terms(profiles, Q, F_ref, theta_star, quadrature_weights=None) -> dict:
    """Weighted average of ``(|Q(F^-1 - F_eta^-1)Q'|_1 + |Q(theta_eta - theta*)|^2) / |QF^-1Q'|_Fr``."""
    w = mixture_weights(profiles, quadrature_weights)
    Q = np.atleast_2d(np.asarray(getattr(Q, "matrix", Q), dtype=float))
    Fi = as_operator(F_ref).inv()
    fr = sym_norms(Q @ Fi @ Q.T)["frobenius"]
    vals = []
    for pr in profiles:
        b = Q @ (pr.theta_eta - theta_star)
        vals.append((sym_norms(Q @ (Fi - pr.F_eta.inv()) @ Q.T)["nuclear"] + float(b @ b)) / fr)
    return {"Delta": float(w @ np.array(vals)), "max": float(max(vals))}


def weighted_laplace_error(profiles, D2_target, c3, n, quadrature_weights=None) -> float:
    """Mixture average of ``(c3/2) sqrt((dimA_eta + 1)^3 / n)``."""
    w = mixture_weights(profiles, quadrature_weights)
    D2 = as_operator(D2_target).matrix
    vals = [0.5 * c3 * np.sqrt((np.trace(pr.F_eta.solve(D2)) + 1) ** 3 / n) for pr in profiles]
    return float(w @ np.array(vals))


def dominance(Q, F_eff, C0=None) -> dict:
    """``B_Q = Q F^-1 Q' / |Q F^-1 Q'|``, ``dimQ = tr B_Q`` and the check ``tr B_Q^2 >= C0^2 dimQ``."""
    Q = np.atleast_2d(np.asarray(getattr(Q, "matrix", Q), dtype=float))
    S = Q @ as_operator(F_eff).inv() @ Q.T
    w = np.linalg.eigvalsh(0.5 * (S + S.T))
    B = w / w.max()
    dimQ = float(B.sum())
    c0max = float(np.sqrt((B ** 2).sum() / dimQ))
    out = {"dimQ": dimQ, "trB2": float((B ** 2).sum()), "C0_max": c0max}
    if C0 is not None:
        out["ok"] = bool(C0 <= c0max * (1 + 1e-12))
        out["C0"] = float(C0)
    return out


def marginal_tv_bound(c3, n, r_star, dimA_star, r_bar, dimQ, x=3.0, C=2.0, dominance_ok=True):
    """Four-term marginal bound; terms reported separately.

    ``total = C (t1 + t2 + t3) + e^{-x}``, ``pre_constant_total`` is the
    same sum with ``C = 1``.
    """
    if not dominance_ok:
        raise MarginalError("Frobenius dominance precondition fails")
    t1 = c3 * r_star * dimA_star / np.sqrt(n)
    t2 = c3 * r_bar * np.sqrt(dimQ) / np.sqrt(n)
    t3 = c3 ** 2 * r_bar ** 4 / (n * np.sqrt(dimQ))
    tail = np.exp(-x)
    return {"bound_terms": {"laplace_target": float(t1), "comparison": float(t2),
                            "bias": float(t3), "tail": float(tail)},
            "pre_constant_total": float(t1 + t2 + t3 + tail),
            "total": float(C * (t1 + t2 + t3) + tail), "C": C}


def marginal_concentration(profiles, D_ref, theta_star, C0, r_target, nu=NU) -> dict:
    """Threshold ``C0^2 r / nu + b`` with ``b`` the largest observed ``|D(theta_eta - theta*)|``."""
    D = np.atleast_2d(np.asarray(getattr(D_ref, "matrix", D_ref), dtype=float))
    theta_star = np.atleast_1d(theta_star)
    b = max(float(np.linalg.norm(D @ (pr.theta_eta - theta_star))) for pr in profiles) \
        if profiles else 0.0
    return {"threshold": float(C0 ** 2 * r_target / nu + b), "bias_sup": b}


def concentration_threshold(C0, r_target, bias_sup, nu=NU) -> float:
    return float(C0 ** 2 * r_target / nu + bias_sup)


def write_profiles_csv(path, profiles):
    """CSV with eta..., theta_eta..., phi, delta, weight."""
    if not profiles:
        return
    q, p = profiles[0].eta.size, profiles[0].theta_eta.size
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"eta{i}" for i in range(q)] + [f"theta_eta{i}" for i in range(p)]
                    + ["phi", "delta", "weight"])
        for pr in profiles:
            wr.writerow([repr(float(v)) for v in pr.eta] + [repr(float(v)) for v in pr.theta_eta]
                        + [repr(pr.phi_eta), repr(pr.delta_eta), repr(pr.weight)])
