"""One function per CLI command.

Each takes the validated config and one seed and returns
``(results, certificates, tables)``; ``results`` holds groups made with
:func:`sourced`, certificates are :class:`Certificate` records whose
``params["hard"]`` marks whether a violation should fail the run.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .. import eio, gauss_compare, marginal, oracle, sobolev
from ..certs import upper
from ..laplace import laplace_report, tv_certificate
from ..linalg import BlockOperator, PsdOperator, as_operator
from ..pmle import concentration_spec, fisher_wilks_certificate, fit
from ..sls import (ModelError, SmoothnessProbe, builtin_linear_gaussian, builtin_logistic,
                   estimate_omega, load_model, make_rng)
from .report import sourced

NU = 2.0 / 3.0
GRID_RESOLUTION = {1: 4001, 2: 401, 3: 81, 4: 33}


def _hard(cert, hard=True):
    cert.params["hard"] = bool(hard)
    return cert


def _grid_oracle(model, center, cov, opts):
    d = model.dim
    res = opts.get("resolution", GRID_RESOLUTION[d])
    box = oracle.gaussian_box(center, cov, opts.get("box_width", 8.0))
    return oracle.grid_posterior(model, box, res)


# --------------------------------------------------------------------------


def pmle_cert(cfg, seed):
    """Simulate data from ``ups_star``, fit, and check the Fisher/Wilks expansions."""
    spec, opts, x = cfg["model_spec"], cfg["options"], cfg["x"]
    kind, pl = spec["kind"], spec["payload"]
    if kind not in ("linear_gaussian", "logistic"):
        raise ModelError("pmle-cert supports linear_gaussian and logistic models")
    X = np.atleast_2d(np.asarray(pl["design"], dtype=float))
    n, p = X.shape
    G2 = as_operator(np.zeros((p, p)) if pl.get("G2") is None else pl["G2"])
    base = load_model(spec)
    ups = np.asarray(opts["ups_star"], dtype=float) if "ups_star" in opts \
        else fit(base).maximizer
    rng = make_rng(seed)
    if kind == "linear_gaussian":
        sd = float(pl.get("noise_sd", 1.0))
        V2 = X.T @ X / sd ** 2
        ups_G = PsdOperator(V2 + G2.matrix).solve(V2 @ ups)
        eps = rng.standard_normal(n)
        model = builtin_linear_gaussian(X, X @ ups + sd * eps, sd, G2)
        noise = X.T @ eps / sd
        omega = 0.0
        omega_src = "quadratic model: omega = 0"
    else:
        prob = expit(X @ ups)
        pop = builtin_logistic(X, prob, G2, mean_labels=True)
        ups_G = fit(pop, init=ups).maximizer
        y = (rng.random(n) < prob).astype(float)
        model = builtin_logistic(X, y, G2)
        noise = X.T @ (y - prob)
        V2 = (X.T * (prob * (1 - prob))) @ X
    DG2 = model.fisher(ups_G)
    cs = concentration_spec(DG2, V2, x, NU)
    if kind == "logistic":
        probe = SmoothnessProbe(ups_G, DG2, cs.rG / NU, opts.get("n_directions", 256), seed)
        omega = estimate_omega(pop, probe)
        omega_src = "sampled sup of 2|delta3|/|D u|^2 on the concentration set"
    res = fit(model, init=ups_G)
    fw = fisher_wilks_certificate(model, res, ups_G, noise, omega)
    loss = float(np.sqrt(DG2.quad(res.maximizer - ups_G)))
    certs = [_hard(c) for c in fw["certificates"]]
    certs.append(_hard(upper("concentration", loss, cs.rG / NU, "concentration of the pMLE",
                             holds_with_prob=1 - 3 * np.exp(-x)), hard=False))
    results = {
        "fit": sourced("newton pMLE", maximizer=res.maximizer, grad_norm=res.grad_norm,
                       iterations=res.iterations),
        "population": sourced("penalized population maximizer", ups_star=ups, ups_star_G=ups_G),
        "concentration": sourced("effective dimension p_G = tr(D_G^-2 V^2)", pG=cs.pG,
                                 lambdaG=cs.lambdaG, rG=cs.rG, radius=cs.rG / NU,
                                 n_eff=cs.n_eff, loss=loss),
        "omega": sourced(omega_src, omega=omega),
        "fisher_wilks": sourced("fisher and wilks expansions",
                                xi_norm_sq=fw["xi_norm_sq"], wilks_residual=fw["wilks_residual"],
                                wilks_bounds=fw["wilks_bounds"],
                                fisher_residual=fw["fisher_residual"],
                                fisher_bound=fw["fisher_bound"]),
    }
    row = {"seed": seed, "wilks_residual": fw["wilks_residual"],
           "fisher_residual": fw["fisher_residual"], "xi_norm_sq": fw["xi_norm_sq"],
           "loss": loss, "radius": cs.rG / NU}
    return results, certs, {"pmle": [row]}


def laplace_cert(cfg, seed):
    """Laplace report at the posterior mode plus the grid TV oracle."""
    opts, x = cfg["options"], cfg["x"]
    model = load_model(cfg["model_spec"])
    res = fit(model, init=opts.get("init"))
    rep = laplace_report(model, res.maximizer, x,
                         {"n_directions": opts.get("n_directions", 512), "seed": seed})
    results = {"laplace": sourced("laplace error terms", **{
        k: v for k, v in rep.to_json().items() if k not in ("center", "F", "conditions", "probe")}),
        "mode": sourced("newton pMLE", center=rep.center, grad_norm=res.grad_norm),
        "conditions": rep.conditions,
        "probe": sourced("sampled smoothness probe settings", **rep.probe)}
    certs = []
    if model.dim <= oracle.MAX_GRID_DIM:
        cov = rep.F.inv()
        grid = _grid_oracle(model, rep.center, cov, opts)
        tv = oracle.total_variation(grid, (rep.center, cov))
        qerr = oracle.tv_quadrature_error(grid, (rep.center, cov))
        results["oracle"] = sourced("grid quadrature oracle", tv_observed=tv,
                                    quadrature_error=qerr,
                                    boundary_mass=grid.boundary_mass_estimate,
                                    resolution=list(grid.resolution))
        for variant in ("diamond2", "diamond3"):
            tc = tv_certificate(rep, tv, variant)
            certs.append(_hard(tc["certificate"], tc["applicable"]))
    row = {"seed": seed, "dimA": rep.dimA, "omega": rep.omega, "tau3": rep.tau3,
           "diamond2": rep.diamond2, "diamond3": rep.diamond3,
           "tv_observed": results.get("oracle", {}).get("values", {}).get("tv_observed")}
    return results, certs, {"laplace": [row]}


def marginal_cert(cfg, seed):
    """Target marginal vs ``N(theta*, F_eff^{-1})`` with the mixture and its bound."""
    opts, x, tol = cfg["options"], cfg["x"], cfg["tolerances"]
    model = load_model(cfg["model_spec"])
    if "target_dim" not in opts:
        raise ModelError("marginal-cert needs options.target_dim")
    p = int(opts["target_dim"])
    q = model.dim - p
    res = fit(model, init=opts.get("init"))
    ups = res.maximizer
    H = model.hess(ups)
    F = BlockOperator.split(H, p)
    sep = marginal.separability(F)
    F_eff = sep["efficient"]
    Q = np.atleast_2d(np.asarray(opts.get("Q", np.eye(p)), dtype=float))
    rep = laplace_report(model, ups, x, {"n_directions": opts.get("n_directions", 512),
                                         "seed": seed})
    D2t = F.tt - model.penalty.matrix[:p, :p]
    dimA_t = float(np.trace(F_eff.solve(D2t)))
    r_star = 2 * np.sqrt(dimA_t) + np.sqrt(2 * x)
    r_bar = 2 * np.sqrt(rep.dimA) + np.sqrt(2 * x)
    dom = marginal.dominance(Q, F_eff, opts.get("C0"))
    bound = marginal.marginal_tv_bound(rep.tau3, 1.0, r_star, dimA_t, r_bar, dom["dimQ"], x,
                                       tol["calibration_C"], dom.get("ok", True))
    pres = opts.get("profile_resolution", {1: 41, 2: 15}.get(q, 7))
    profiles, vols = marginal.profile_grid(model, p, ups, pres, opts.get("profile_width", 6.0))
    F_ref = PsdOperator(F.tt)
    hom = marginal.homogenization_error(profiles, Q, F_ref, vols)
    m_mean, m_cov = marginal.mixture_moments(profiles, vols)

    Qfull = np.hstack([Q, np.zeros((Q.shape[0], q))])
    Sigma_full = PsdOperator(H).inv()
    if model.dim <= oracle.MAX_GRID_DIM:
        src = _grid_oracle(model, ups, Sigma_full, opts)
        oracle_id = "grid quadrature oracle"
        P, w = src.points(), src.cell_mass.ravel()
    else:
        src = oracle.mcmc_sample(model.eval, ups, opts.get("n_draws", 100_000), seed)
        oracle_id = "adaptive random-walk MCMC oracle"
        P, w = src.draws, np.full(src.draws.shape[0], 1.0 / src.draws.shape[0])
    observed = oracle.empirical_tv_elliptic(src, Qfull, ups, Sigma_full, seed)
    # mixture vs oracle on a radius grid
    rad = np.linalg.norm((P - ups) @ Qfull.T, axis=1)
    radii = np.quantile(rad, np.linspace(0.01, 0.99, 50))
    emp = np.array([w[rad <= r].sum() for r in radii])
    mix = marginal.mixture_marginal(profiles, Q, radii, ups[:p], vols,
                                    opts.get("n_samples", 100_000), seed)
    applicable = bool(rep.conditions["diamond3_valid"] and dom.get("ok", True))
    certs = [
        _hard(upper("marginal_tv", observed, bound["total"], "marginal Laplace theorem",
                    applicable=applicable, C=tol["calibration_C"]), applicable),
        _hard(upper("homogenization", hom["Delta_F"], hom["bound"], "homogenization lemma",
                    tol=1e-12 * max(1.0, hom["bound"]))),
        _hard(upper("sandwich_violation", 0.0 if sep["sandwich_ok"] else 1.0, 0.0,
                    "separability sandwich")),
    ]
    results = {
        "mode": sourced("newton pMLE", center=ups, grad_norm=res.grad_norm),
        "separability": sourced("schur complement", rho=sep["rho"], F_eff=F_eff.matrix),
        "dimensions": sourced("laplace effective dimensions", dimA_full=rep.dimA,
                              dimA_target=dimA_t, r_star=r_star, r_bar=r_bar,
                              tau3=rep.tau3),
        "dominance": sourced("frobenius dominance", **dom),
        "bound": sourced("marginal Laplace theorem", terms=bound["bound_terms"],
                         total=bound["total"], pre_constant_total=bound["pre_constant_total"],
                         C=bound["C"]),
        "homogenization": sourced("homogenization lemma", **hom),
        "mixture": sourced("gaussian mixture over nuisance profiles", mean=m_mean, cov=m_cov,
                           sup_gap_to_oracle=float(np.abs(mix - emp).max()),
                           n_profiles=len(profiles)),
        "oracle": sourced(oracle_id, observed_sup_distance=observed),
        "conditions": rep.conditions,
    }
    rows = []
    for pr, v in zip(profiles, vols):
        row = {"seed": seed}
        row.update({f"eta{i}": e for i, e in enumerate(pr.eta)})
        row.update({f"theta{i}": t for i, t in enumerate(pr.theta_eta)})
        row.update(phi=pr.phi_eta, delta=pr.delta_eta, volume=v)
        rows.append(row)
    curve = [{"seed": seed, "radius": r, "oracle": e, "mixture": m}
             for r, e, m in zip(radii, emp, mix)]
    return results, certs, {"profiles": rows, "marginal_curve": curve}


def eio_demo(cfg, seed):
    """Joint fit, smoothness constants and the marginal certificate for an EIO problem."""
    spec, opts, x, tol = cfg["model_spec"], cfg["options"], cfg["x"], cfg["tolerances"]
    if spec["kind"] != "eio":
        raise ModelError("eio-demo needs a model_spec of kind 'eio'")
    pb = eio.EioProblem.from_json(spec["payload"])
    st, res = eio.fit_joint(pb)
    plug = eio.plug_in(pb)
    sc = eio.empirical_self_concordance(pb, st, opts.get("n_directions", 10_000), seed)
    Q = np.atleast_2d(np.asarray(opts.get("Q", np.eye(pb.p)), dtype=float))
    rep = eio.eio_laplace_certificate(pb, st, Q, x, tol["calibration_C"], opts.get("C0"))
    slack = 1 + tol["sampling_slack"]
    certs = [
        _hard(upper("c3_sampled", sc["c3_hat"], sc["c3"] * slack, "third-derivative lemma",
                    slack=slack)),
        _hard(upper("c4_sampled", sc["c4_hat"], sc["c4"] * slack, "fourth-derivative lemma",
                    slack=slack)),
    ]
    results = {
        "fit": sourced("newton on the stacked parameter", theta=st.theta, A=st.A,
                       grad_norm=res.grad_norm, iterations=res.iterations,
                       plug_in=plug, distance_to_plug_in=float(np.linalg.norm(st.theta - plug))),
        "dimensions": sourced("target and nuisance effective dimensions",
                              p_target=rep["p_target"], q_nuis=rep["q_nuis"],
                              p_full_bound=rep["p_full_bound"], n_eff=rep["n_eff"],
                              r_target=rep["r_target"], r_bar=rep["r_bar"]),
        "self_concordance": sourced("sampled derivatives in the local metric",
                                    c3_hat=sc["c3_hat"], c4_hat=sc["c4_hat"], c3=sc["c3"],
                                    c4=sc["c4"]),
        "region": sourced("warm-start region", in_region=rep["in_region"], **rep["margins"]),
        "bound": sourced("marginal Laplace theorem for the operator model",
                         condition=rep["condition"], applicable=rep["applicable"],
                         terms=rep["bound_terms"], total=rep["total"],
                         pre_constant_total=rep["pre_constant_total"], rho_sep=rep["rho_sep"],
                         F_eff=rep["F_eff"]),
    }
    if opts.get("oracle", True):
        model = eio.eio_model(pb)
        S = oracle.mcmc_sample(model.eval, st.stack(), opts.get("n_draws", 100_000), seed)
        Qfull = np.hstack([Q, np.zeros((Q.shape[0], pb.dim - pb.p))])
        Sigma = np.zeros((pb.dim, pb.dim))
        Sigma[:pb.p, :pb.p] = np.linalg.inv(rep["F_eff"])
        obs = oracle.empirical_tv_elliptic(S, Qfull, st.stack(), Sigma, seed)
        results["oracle"] = sourced("adaptive random-walk MCMC oracle", observed_sup_distance=obs,
                                    acceptance=S.acceptance_rate,
                                    min_ess=float(np.min(S.ess_per_dim)))
        certs.append(_hard(upper("marginal_tv", obs, rep["total"], "marginal Laplace theorem",
                                 applicable=rep["applicable"]), rep["applicable"]))
    row = {"seed": seed, "c3_hat": sc["c3_hat"], "c4_hat": sc["c4_hat"], "bound": rep["total"],
           "observed": results.get("oracle", {}).get("values", {}).get("observed_sup_distance")}
    return results, certs, {"eio": [row]}


def gauss_suite(cfg, seed):
    """Randomized Gaussian comparison suite and the kappa sandwich."""
    opts, tol = cfg["options"], cfg["tolerances"]
    dims = tuple(opts.get("dims", (3, 50)))
    rows = gauss_compare.comparison_suite(opts.get("n_cases", 50), opts.get("n_samples", 100_000),
                                          seed, dims)
    rng = make_rng(seed + 1)
    vals = []
    for _ in range(opts.get("n_spectra", 1000)):
        lam = gauss_compare.random_spectrum(rng, int(rng.integers(2, dims[1] + 1)))
        k = gauss_compare.kappa(lam)
        vals.append(k.kappa * np.sqrt(k.Lambda1 * k.Lambda2))
    vals = np.array(vals)
    n_bad = int(np.sum((vals < 0.9) | (vals > 1.8)))
    ratios = np.array([r["ratio"] for r in rows])
    bands = np.array([r["band_ratio"] for r in rows])
    certs = [
        _hard(upper("comparison_ratio", ratios.max(), tol["ratio_max"],
                    "explicit Gaussian comparison, empirical constant")),
        _hard(upper("band_ratio", bands.max(), tol["band_ratio_max"], "anti-concentration")),
        _hard(upper("kappa_sandwich_violations", n_bad, 0, "kappa sandwich [0.9, 1.8]")),
    ]
    results = {
        "comparison": sourced("Monte-Carlo sup distance over analytic bound",
                              max_ratio=ratios.max(), median_ratio=float(np.median(ratios)),
                              max_band_ratio=bands.max(), n_cases=len(rows)),
        "kappa": sourced("kappa sqrt(Lambda1 Lambda2)", min=vals.min(), max=vals.max(),
                         violations=n_bad, n_spectra=vals.size),
    }
    return results, certs, {"suite": [dict(seed=seed, **r) for r in rows]}


def sobolev_rate(cfg, seed):
    """Log-log slope of the penalized-fit risk in the sequence model."""
    opts, tol = cfg["options"], cfg["tolerances"]
    s0 = opts.get("s0", 1.0)
    n_list = opts.get("n_list", [2 ** k for k in range(7, 14)])
    out = sobolev.rate_experiment(s0, n_list, opts.get("reps", 200), seed,
                                  opts.get("C0_ball", 1.0), opts.get("s"), opts.get("p", 2000))
    dev = abs(out["slope"] - out["target"])
    certs = [_hard(upper("slope_deviation", dev, tol["slope_tol"], "rate-optimal penalty",
                         target=out["target"]))]
    results = {"rate": sourced("sequence-model simulation, OLS on log-log means",
                               slope=out["slope"], slope_se=out["slope_se"],
                               intercept=out["intercept"], target=out["target"],
                               pG_over_n_at_max=sobolev.pG_over_n(s0, opts.get("C0_ball", 1.0),
                                                                  max(n_list),
                                                                  opts.get("p", 2000)))}
    return results, certs, {"rate": [dict(seed=seed, **r) for r in out["per_n_mse"]]}


COMMANDS = {"pmle-cert": pmle_cert, "laplace-cert": laplace_cert, "marginal-cert": marginal_cert,
            "eio-demo": eio_demo, "gauss-suite": gauss_suite, "sobolev-rate": sobolev_rate}
