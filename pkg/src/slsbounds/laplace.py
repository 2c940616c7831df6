"""Finite-sample certificates for the Laplace (Gaussian) approximation of a posterior."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .certs import upper
from .linalg import PsdOperator, as_operator, sqrt_inv_sqrt, sym_norms
from .sls import SlsModel, SmoothnessProbe, estimate_omega, estimate_self_concordance

NU = 2.0 / 3.0


class LaplaceError(ValueError):
    pass


def diamond2(omega, dimA):
    return 0.75 * omega * dimA / (1 - omega)


def omega_tau(tau3, r, nu=NU):
    return tau3 * r / (3 * nu)


def diamond3(tau3, dimA, alpha, r, nu=NU):
    w = omega_tau(tau3, r, nu)
    return tau3 * (dimA + alpha) ** 1.5 / (4 * (1 - w) ** 1.5)


def diamond4(tau3, tau4, dimA, alpha, r, nu=NU):
    w = omega_tau(tau3, r, nu)
    return (tau3 ** 2 * (dimA + 2 * alpha) ** 3 + 2 * tau4 * (dimA + alpha) ** 2) / (16 * (1 - w) ** 2)


def tv_bound(diamond, x):
    """``4 (diamond + e^{-x})``."""
    return 4 * (diamond + np.exp(-x))


def tv_bound_sharp(diamond, x):
    """``2 (d + e^{-x}) / (1 - d - e^{-x})``; infinite when the denominator is not positive."""
    s = diamond + np.exp(-x)
    return 2 * s / (1 - s) if s < 1 else np.inf


@dataclass
class LaplaceReport:
    center: np.ndarray
    F: PsdOperator
    D2: PsdOperator
    G2: PsdOperator
    dimA: float
    alpha: float
    x: float
    r: float
    nu: float
    omega: float
    omega_tau: float
    tau3: float
    tau4: float
    diamond2: float
    diamond3: float
    diamond4: float
    conditions: dict
    probe: dict = field(default_factory=dict)

    @property
    def tv_bound2(self):
        return tv_bound(self.diamond2, self.x)

    @property
    def tv_bound3(self):
        return tv_bound(self.diamond3, self.x)

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in
               ("dimA", "alpha", "x", "r", "nu", "omega", "omega_tau", "tau3", "tau4",
                "diamond2", "diamond3", "diamond4")}
        out = {k: float(v) for k, v in out.items()}
        out["center"] = np.asarray(self.center).tolist()
        out["F"] = self.F.to_json()
        out["conditions"] = dict(self.conditions)
        out["tv_bound2"] = float(self.tv_bound2)
        out["tv_bound3"] = float(self.tv_bound3)
        out["probe"] = dict(self.probe)
        return out


def laplace_quantities(D2, G2):
    """``dimA = tr(D^2 F^{-1})`` and ``alpha = |D F^{-1} D|`` with ``F = D^2 + G^2``."""
    D2, G2 = as_operator(D2), as_operator(G2)
    F = PsdOperator(D2.matrix + G2.matrix)
    dimA = float(np.trace(F.solve(D2.matrix)))
    _, fir = sqrt_inv_sqrt(F)
    alpha = float(np.linalg.eigvalsh(fir @ D2.matrix @ fir)[-1])
    return F, dimA, alpha


def build_report(center, D2, G2, x, omega, tau3, tau4, nu=NU, probe=None) -> LaplaceReport:
    """Assemble a report from already measured smoothness quantities."""
    F, dimA, alpha = laplace_quantities(D2, G2)
    r = 2 * np.sqrt(dimA) + np.sqrt(2 * x)
    wt = omega_tau(tau3, r, nu)
    d2 = diamond2(omega, dimA) if omega < 1 else np.inf
    d3 = diamond3(tau3, dimA, alpha, r, nu) if wt < 1 else np.inf
    d4 = diamond4(tau3, tau4, dimA, alpha, r, nu) if wt < 1 else np.inf
    cond = {
        "omega_ok": bool(omega <= 1 / 3),
        "prod_ok": bool(omega * dimA <= 2 / 3),
        "conc3_ok": bool(tau3 * r / nu <= 0.75),
        "taylor_ok": bool(tau3 * r / nu * dimA <= 2),
    }
    cond["diamond2_valid"] = cond["omega_ok"] and cond["prod_ok"]
    cond["diamond3_valid"] = cond["conc3_ok"] and cond["taylor_ok"]
    return LaplaceReport(np.asarray(center, dtype=float), F, as_operator(D2), as_operator(G2),
                         dimA, alpha, float(x), float(r), float(nu), float(omega), float(wt),
                         float(tau3), float(tau4), float(d2), float(d3), float(d4), cond,
                         probe or {})


def laplace_report(model: SlsModel, center, x=3.0, probe_cfg=None, nu=NU) -> LaplaceReport:
    """Laplace report at a stationary point of ``model``.

    ``probe_cfg`` may set ``n_directions``, ``seed``, ``n_shells``.  The
    vicinity is ``{|D u| <= r / nu}`` with ``D^2 = F - G^2``.
    """
    cfg = dict(n_directions=512, seed=0, n_shells=8)
    cfg.update(probe_cfg or {})
    center = np.asarray(center, dtype=float)
    F = model.fisher(center)
    F.check_invertible()
    g = model.grad(center)
    if np.linalg.norm(g) > 1e-6 * (1 + np.linalg.norm(F.matrix @ center)):
        raise LaplaceError(f"center is not stationary: |grad| = {np.linalg.norm(g):.3e}")
    D2 = PsdOperator(F.matrix - model.penalty.matrix)
    _, dimA, _ = laplace_quantities(D2, model.penalty)
    r = 2 * np.sqrt(dimA) + np.sqrt(2 * x)
    metric, metric_name = D2, "D"
    if D2.min_eig() <= 1e-12 * max(D2.max_eig(), 1e-300):
        metric, metric_name = F, "F"
    probe = SmoothnessProbe(center, metric, r / nu, cfg["n_directions"], cfg["seed"],
                            cfg["n_shells"])
    om = estimate_omega(model, probe)
    sc = estimate_self_concordance(model, probe, 1.0)
    meta = {"n_directions": cfg["n_directions"], "seed": cfg["seed"],
            "n_shells": cfg["n_shells"], "metric": metric_name,
            "estimator": "sampled sup (lower estimate)"}
    return build_report(center, D2, model.penalty, x, om, sc["tau3_hat"], sc["tau4_hat"],
                        nu, meta)


def tv_certificate(report: LaplaceReport, tv_observed, variant="diamond3"):
    """Compare an oracle TV distance to ``4 (diamond + e^{-x})``."""
    d = report.diamond3 if variant == "diamond3" else report.diamond2
    valid = report.conditions[f"{variant}_valid"]
    bound = tv_bound(d, report.x)
    c = upper(f"laplace_tv_{variant}", tv_observed, bound, "laplace TV theorem",
              applicable=valid, diamond=d, x=report.x)
    return {"tv_observed": float(tv_observed), "bound": float(bound), "holds": c.holds,
            "applicable": valid, "certificate": c}


def kl_bounds(c3, dimA, alpha, n, x) -> dict:
    return {"kl_forward_bound": float(2 * c3 * np.sqrt((dimA + alpha) ** 3 / n) + 4 * np.exp(-x))}


def posterior_mean_bound(c3, dimA, alpha, n, x, QFQ_norm=1.0) -> float:
    return float(2.4 * c3 * np.sqrt(QFQ_norm) * np.sqrt((dimA + alpha) ** 3 / n)
                 + 4 * np.exp(-x))


def inexact_tv_bound(report: LaplaceReport, center_used, F_used, Q, C=2.0,
                     check_dominance=True) -> dict:
    """Elliptic-set bound when a proxy centre/precision replaces the exact ones."""
    Q = np.atleast_2d(np.asarray(getattr(Q, "matrix", Q), dtype=float))
    Finv = report.F.inv()
    Fu_inv = as_operator(F_used).inv()
    QFQ = Q @ Finv @ Q.T
    nm = sym_norms(QFQ)
    if check_dominance and 3 * nm["operator_norm"] ** 2 > nm["frobenius"] ** 2 * (1 + 1e-12):
        raise LaplaceError("dominance precondition 3|QF^-1Q|^2 <= |QF^-1Q|_Fr^2 fails")
    shift = Q @ (np.asarray(center_used, dtype=float) - report.center)
    nuc = sym_norms(Q @ (Finv - Fu_inv) @ Q.T)["nuclear"]
    extra = C * (nuc + float(shift @ shift)) / nm["frobenius"]
    return {"extra_term": float(extra), "total_bound": float(report.tv_bound3 + extra),
            "C": C}


def gaussian_kl(m1, S1, m2, S2) -> float:
    """KL(N(m1,S1) || N(m2,S2))."""
    S1, S2 = np.atleast_2d(S1), np.atleast_2d(S2)
    d = np.asarray(m2, dtype=float) - np.asarray(m1, dtype=float)
    S2i = np.linalg.inv(S2)
    k = S1.shape[0]
    return 0.5 * float(np.trace(S2i @ S1) + d @ S2i @ d - k
                       + np.linalg.slogdet(S2)[1] - np.linalg.slogdet(S1)[1])


def pinsker_tv(m1, S1, m2, S2) -> float:
    """Pinsker upper bound on TV between two Gaussians (display only)."""
    return float(min(1.0, np.sqrt(max(gaussian_kl(m1, S1, m2, S2), 0.0) / 2)))
