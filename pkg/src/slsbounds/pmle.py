"""Penalized MLE: fitting, concentration, Fisher/Wilks, bias and risk bounds."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .certs import upper
from .linalg import PsdOperator, as_operator, sqrt_inv_sqrt
from .sls import SlsModel, make_rng, sphere_directions

ARMIJO_FACTOR = 0.5
ARMIJO_SLOPE = 0.1
MAX_ITER = 200


class NonConcavityError(RuntimeError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


class RegionExit(NonConcavityError):
    """Every damped trial step left the feasible region."""


class InvalidRegime(ValueError):
    pass


@dataclass
class PmleResult:
    maximizer: np.ndarray
    objective_at_max: float
    grad_norm: float
    FG_at_max: PsdOperator
    iterations: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)


def _scale(H, x, g0):
    return 1.0 + np.abs(H).max() * (1.0 + np.abs(x).max()) + np.abs(g0).max()


def newton_maximize(fun, grad, nhess, init, tol=1e-8, max_iter=MAX_ITER, feasible=None):
    """Damped Newton ascent with Armijo backtracking.

    ``nhess`` returns the negative Hessian.  Falls back to gradient ascent
    when the Cholesky solve fails.  ``feasible`` optionally rejects trial
    points (step is halved until accepted).
    Returns ``(x, f, g, H, iterations, trace)``.
    """
    x = np.array(init, dtype=float)
    f, g = fun(x), grad(x)
    g0 = g.copy()
    trace = []
    for it in range(max_iter + 1):
        H = nhess(x)
        trace.append((it, f, float(np.linalg.norm(g))))
        if np.linalg.norm(g) <= tol * _scale(H, x, g0):
            return x, f, g, H, it, trace
        if it == max_iter:
            break
        try:
            d = cho_solve(cho_factor(H), g)
            newton = True
        except LinAlgError:
            d = g / max(np.abs(np.linalg.eigvalsh(H)).max(), 1.0)
            newton = False
        slope = float(g @ d)
        if slope <= 0:
            d, slope, newton = g, float(g @ g), False
        t = 1.0
        any_feasible = False
        for _ in range(80):
            xn = x + t * d
            if feasible is None or feasible(xn):
                any_feasible = True
                fn = fun(xn)
                if np.isfinite(fn) and fn >= f + ARMIJO_SLOPE * t * slope:
                    break
                # Newton step landing at rounding level of the optimum
                if newton and np.isfinite(fn) and abs(fn - f) <= 1e-15 * max(abs(f), 1.0) \
                        and np.linalg.norm(grad(xn)) < np.linalg.norm(g):
                    break
            t *= ARMIJO_FACTOR
        else:
            if not any_feasible:
                raise RegionExit(f"iterate {it}: every trial step leaves the feasible region")
            lo = float(np.linalg.eigvalsh(H)[0])
            raise NonConcavityError(
                f"no ascent step after maximal damping; smallest eigenvalue of -Hessian {lo:.6e}")
        x, f, g = xn, fn, grad(xn)
    raise NonConvergenceError(f"no convergence in {max_iter} iterations", trace)


def fit(model: SlsModel, init=None, tol=1e-8, max_iter=MAX_ITER) -> PmleResult:
    """Maximize the penalized objective of ``model``."""
    init = np.zeros(model.dim) if init is None else init
    x, f, g, H, it, trace = newton_maximize(model.eval, model.grad, model.hess, init,
                                            tol, max_iter)
    return PmleResult(x, float(f), float(np.linalg.norm(g)), PsdOperator(H, allow_indefinite=True),
                      it, True, trace)


@dataclass
class ConcentrationSpec:
    pG: float
    lambdaG: float
    x: float
    rG: float
    nu: float
    n_eff: float


def concentration_spec(DG2, V2, x=3.0, nu=2.0 / 3.0, FG=None) -> ConcentrationSpec:
    """Effective dimension, spectral norm and concentration radius."""
    DG2, V2 = as_operator(DG2), as_operator(V2)
    _, inv_root = sqrt_inv_sqrt(DG2)
    pG = float(np.trace(DG2.solve(V2.matrix)))
    lam = float(np.linalg.eigvalsh(inv_root @ V2.matrix @ inv_root)[-1])
    rG = np.sqrt(pG) + np.sqrt(2 * x * lam)
    FG = DG2 if FG is None else as_operator(FG)
    n_eff = FG.min_eig()
    return ConcentrationSpec(pG, lam, float(x), float(rG), float(nu), float(n_eff))


def fisher_wilks_certificate(model: SlsModel, result: PmleResult, population_max,
                             grad_noise, omega) -> dict:
    """Fisher and Wilks expansions at the fitted maximizer.

    ``grad_noise`` is the stochastic gradient at the population maximizer;
    ``xi = D_G^{-1} grad_noise`` with ``D_G^2`` the negative Hessian there.
    """
    if omega >= 1:
        raise InvalidRegime("omega must be < 1")
    ups = np.asarray(population_max, dtype=float)
    DG2 = model.fisher(ups)
    root, inv_root = sqrt_inv_sqrt(DG2)
    xi = inv_root @ np.asarray(grad_noise, dtype=float)
    xi2 = float(xi @ xi)
    u = result.maximizer
    wilks = 2 * (model.eval(u) - model.eval(ups)) - xi2
    fisher = float(np.sum((root @ (u - ups) - xi) ** 2))
    lo, hi = -omega * xi2, omega * xi2 / (1 - omega)
    fb = 3 * omega * xi2 / (1 - omega) ** 2
    loss = float(np.linalg.norm(root @ (u - ups)))
    lb = (1 + np.sqrt(2 * omega)) / (1 - omega) * np.sqrt(xi2)
    tol = 1e-9 * max(1.0, xi2)
    return {
        "xi_norm_sq": xi2,
        "wilks_residual": float(wilks),
        "wilks_bounds": [float(lo), float(hi)],
        "fisher_residual": fisher,
        "fisher_bound": float(fb),
        "wilks_holds": bool(lo - tol <= wilks <= hi + tol),
        "fisher_holds": bool(fisher <= fb + tol),
        "certificates": [
            upper("wilks_upper", wilks, hi, "wilks expansion", tol, omega=omega),
            upper("wilks_lower", -wilks, -lo, "wilks expansion", tol, omega=omega),
            upper("fisher_expansion", fisher, fb, "fisher expansion", tol, omega=omega),
            upper("loss_vs_xi", loss, lb, "fisher expansion, loss form", tol, omega=omega),
        ],
    }


def hessian_stability(FG_star, FG_hat, n_probes=1000, seed=0) -> dict:
    """``delta_plus = |D^{-1} F_hat D^{-1} - I|`` and a probe check of the sandwich."""
    FG_star, FG_hat = as_operator(FG_star), as_operator(FG_hat)
    _, inv_root = sqrt_inv_sqrt(FG_star)
    M = inv_root @ FG_hat.matrix @ inv_root - np.eye(FG_star.dim)
    dp = float(np.abs(np.linalg.eigvalsh(0.5 * (M + M.T))).max())
    U = make_rng(seed).standard_normal((n_probes, FG_star.dim))
    a = np.einsum("ij,jk,ik->i", U, FG_star.matrix, U)
    b = np.einsum("ij,jk,ik->i", U, FG_hat.matrix, U)
    tol = 1e-10 * a
    ok = np.all((1 - dp) * a - tol <= b) and np.all(b <= (1 + dp) * a + tol)
    return {"delta_plus": dp, "sandwich_ok": bool(ok)}


@dataclass
class BiasCertificate:
    Q: PsdOperator
    bG: float
    delta_star: float
    bound: float
    refined_residual_bound: float


def bias_certificate(Q, ups_star, G2, F_at_star, delta_star=0.0) -> BiasCertificate:
    """Bias bound in the ``Q``-norm.

    ``F_at_star`` is the unpenalized information at the true parameter; the
    penalized one is ``F + G^2``.
    """
    if delta_star >= 1:
        raise InvalidRegime(f"delta_star = {delta_star} >= 1")
    Q = as_operator(Q)
    G2 = as_operator(G2)
    FG = PsdOperator(as_operator(F_at_star).matrix + G2.matrix)
    v = G2.matrix @ np.asarray(ups_star, dtype=float)
    bG = float(np.linalg.norm(Q.matrix @ FG.solve(v)))
    return BiasCertificate(Q, bG, float(delta_star), bG / (1 - delta_star),
                           delta_star * bG / (1 - delta_star))


def estimate_delta_star(model: SlsModel, ups_star, Q, bG, nu=2.0 / 3.0, n_directions=512,
                        n_shells=8, seed=0) -> float:
    """Sampled sup of ``|D^{-1} F_G(ups*+u) D^{-1} - I|`` over ``|Q u| <= bG/nu``."""
    ups = np.asarray(ups_star, dtype=float)
    _, inv_root = sqrt_inv_sqrt(model.fisher(ups))
    Q = as_operator(Q)
    qinv = np.linalg.pinv(Q.matrix)
    dirs = sphere_directions(model.dim, n_directions, seed) @ qinv.T
    nq = np.linalg.norm(dirs @ Q.matrix.T, axis=1, keepdims=True)
    dirs = dirs / np.where(nq > 0, nq, 1.0)
    best = 0.0
    R = bG / nu
    for k in range(1, n_shells + 1):
        for d in dirs:
            M = inv_root @ model.hess(ups + R * k / n_shells * d) @ inv_root
            best = max(best, float(np.abs(np.linalg.eigvalsh(M - np.eye(model.dim))).max()))
    return best


def risk_certificate(spec: ConcentrationSpec, omega, delta_star, bias_norm, x=None,
                     C1=1.0) -> dict:
    """Loss and risk bounds; ``bias_norm = |D_G^{-1} G^2 ups*|``."""
    if omega >= 1 or delta_star >= 1:
        raise InvalidRegime("need omega < 1 and delta_star < 1")
    x = spec.x if x is None else x
    b = bias_norm / (1 - delta_star)
    loss = (1 + np.sqrt(2 * omega)) / (1 - omega) * spec.rG + b
    tail = C1 * np.exp(-x) if np.isfinite(x) else 0.0
    risk = (1 + np.sqrt(2 * omega) / (1 - omega)) ** 2 * spec.pG \
        + (b + np.sqrt(3 * omega) / (1 - omega) * np.sqrt(spec.pG) + tail) ** 2
    return {"loss_bound": float(loss), "risk_bound": float(risk),
            "bias_variance_sum": float(spec.pG + bias_norm ** 2)}


def linear_gaussian_replicates(X, sigma, G2, ups_star, reps, seed=0, x=3.0, nu=2.0 / 3.0):
    """Monte-Carlo replicates of the ridge pMLE in a linear Gaussian model.

    Returns per-replicate losses ``|D_G(u - ups*_G)|`` and ``|D_G(u - ups*)|^2``
    together with the concentration spec and the exact risk.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    G2 = as_operator(G2)
    ups_star = np.asarray(ups_star, dtype=float)
    V2 = X.T @ X / sigma ** 2
    DG2 = PsdOperator(V2 + G2.matrix)
    root, _ = sqrt_inv_sqrt(DG2)
    spec = concentration_spec(DG2, V2, x, nu)
    ups_G = DG2.solve(V2 @ ups_star)
    eps = make_rng(seed).standard_normal((reps, X.shape[0]))
    Y = X @ ups_star + sigma * eps
    U = DG2.solve((Y @ X).T / sigma ** 2).T
    stoch = np.linalg.norm((U - ups_G) @ root, axis=1)
    risk = np.sum(((U - ups_star) @ root) ** 2, axis=1)
    bias_norm = float(np.linalg.norm(np.linalg.solve(root, G2.matrix @ ups_star)))
    return {"spec": spec, "stoch_loss": stoch, "sq_loss": risk,
            "exact_risk": spec.pG + bias_norm ** 2, "bias_norm": bias_norm}
