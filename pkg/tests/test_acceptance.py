"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run with pytest (lines are repeated in the terminal summary) or directly as
``python tests/test_acceptance.py``.
"""
import json
import os
import sys
import tempfile
import time

import numpy as np
from scipy.special import expit

sys.path.insert(0, os.path.dirname(__file__))

from slsbounds import gauss_compare, oracle  # noqa: E402
from slsbounds.eio import (EioProblem, eio_laplace_certificate, eio_model,  # noqa: E402
                           empirical_self_concordance, fit_joint, plug_in)
from slsbounds.harness import load_config, run  # noqa: E402
from slsbounds.laplace import laplace_report, tv_bound  # noqa: E402
from slsbounds.linalg import BlockOperator  # noqa: E402
from slsbounds.marginal import (mixture_marginal, mixture_moments, orthogonalize,  # noqa: E402
                                profile_grid, separability)
from slsbounds.pmle import fisher_wilks_certificate, fit, linear_gaussian_replicates  # noqa: E402
from slsbounds.sls import (builtin_linear_gaussian, builtin_logistic, make_rng,  # noqa: E402
                           polynomial_model)
from slsbounds.sobolev import rate_experiment  # noqa: E402
from conftest import random_spd  # noqa: E402

X_LEVEL = 3.0
CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")
LINES = []


def report(k, ok, detail, t0):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({time.time() - t0:.1f}s) {detail}"
    LINES.append(line)
    print(line, flush=True)
    return ok


def quadratic_model(H, b, quartic=0.0):
    d = len(b)
    terms = [(float(b[i]), (i,)) for i in range(d)]
    for i in range(d):
        terms.append((-0.5 * H[i, i], (i, i)))
        if quartic:
            terms.append((-quartic / 12, (i, i, i, i)))
        for j in range(i + 1, d):
            terms.append((-H[i, j], (i, j)))
    return polynomial_model(d, terms)


# --------------------------------------------------------------------------


def criterion_1():
    t0 = time.time()
    rng = make_rng(1)
    fw_max = 0.0
    for d in range(1, 7):
        X = rng.standard_normal((3 * d + 5, d))
        eps = rng.standard_normal(X.shape[0])
        ups = rng.standard_normal(d)
        G2 = 0.3 * np.eye(d)
        m = builtin_linear_gaussian(X, X @ ups + eps, 1.0, G2)
        V2 = X.T @ X
        ups_G = np.linalg.solve(V2 + G2, V2 @ ups)
        fw = fisher_wilks_certificate(m, fit(m), ups_G, X.T @ eps, 0.0)
        fw_max = max(fw_max, abs(fw["wilks_residual"]), fw["fisher_residual"])
    tv_max = 0.0
    for d in range(1, 5):
        X = rng.standard_normal((4 * d, d))
        m = builtin_linear_gaussian(X, rng.standard_normal(4 * d), 1.0, np.eye(d))
        rep = laplace_report(m, fit(m).maximizer, X_LEVEL, {"n_directions": 64})
        cov = rep.F.inv()
        res = {1: 2001, 2: 401, 3: 81, 4: 41}[d]
        g = oracle.grid_posterior(m, oracle.gaussian_box(rep.center, cov), res)
        tv_max = max(tv_max, oracle.total_variation(g, (rep.center, cov)))
    # (c) mixture vs efficient Gaussian, 3 target + 2 nuisance coordinates
    H = random_spd(rng, 5)
    m = quadratic_model(H, rng.standard_normal(5))
    u = fit(m).maximizer
    prs, vols = profile_grid(m, 3, u, resolution=15)
    eff = separability(BlockOperator.split(H, 3))["efficient"]
    n = 200_000
    scale = np.sqrt(np.trace(eff.inv()))
    r = np.linspace(0.1, 3, 30) * scale
    mix = mixture_marginal(prs, np.eye(3), r, u[:3], vols, n, seed=0)
    exact = gauss_compare.gaussian_ball_prob(eff.inv(), r, None, n, seed=1)
    mix_gap = float(np.max(np.abs(mix - exact)))
    mix_tol = 2 * oracle.dkw_envelope(n) + 1e-3
    # (d) [[2,1],[1,2]]: target variance 2/3
    H2 = np.array([[2.0, 1.0], [1.0, 2.0]])
    m2 = quadratic_model(H2, np.zeros(2))
    prs2, vols2 = profile_grid(m2, 1, np.zeros(2), resolution=41)
    var = mixture_moments(prs2, vols2)[1][0, 0]
    ok = fw_max <= 1e-9 and tv_max <= 1e-4 and mix_gap <= mix_tol and abs(var - 2 / 3) <= 1e-9
    return report(1, ok, f"fisher/wilks residual {fw_max:.1e} (tol 1e-9); grid TV {tv_max:.1e} "
                  f"(tol 1e-4); mixture gap {mix_gap:.4f} (tol {mix_tol:.4f}); "
                  f"variance {var:.12f} vs 2/3", t0)


def criterion_2():
    t0 = time.time()
    rng = make_rng(2)
    applicable = viol = viol_any = 0
    worst = 0.0
    for case in range(20):
        p = int(rng.choice([2, 3]))
        n = int(rng.integers(50, 501))
        X = rng.standard_normal((n, p))
        ups = 0.5 * rng.standard_normal(p)
        y = (rng.random(n) < expit(X @ ups)).astype(float)
        m = builtin_logistic(X, y, np.eye(p))
        rep = laplace_report(m, fit(m).maximizer, X_LEVEL, {"n_directions": 512, "seed": case})
        cov = rep.F.inv()
        g = oracle.grid_posterior(m, oracle.gaussian_box(rep.center, cov, 9.0),
                                  {2: 401, 3: 81}[p])
        tv = oracle.total_variation(g, (rep.center, cov))
        b2, b3 = tv_bound(rep.diamond2, X_LEVEL), tv_bound(rep.diamond3, X_LEVEL)
        bad = tv > b2 or tv > b3
        worst = max(worst, tv / min(b2, b3))
        viol_any += bad
        if rep.conditions["diamond2_valid"] and rep.conditions["diamond3_valid"]:
            applicable += 1
            viol += bad
    return report(2, viol == 0, f"{applicable}/20 posteriors with all condition flags; "
                  f"{viol} violations among them; {viol_any} violations over all 20 "
                  f"(max TV/bound {worst:.3f})", t0)


def criterion_3():
    t0 = time.time()
    rng = make_rng(3)
    X = rng.standard_normal((60, 4))
    out = linear_gaussian_replicates(X, 1.0, 0.5 * np.eye(4), [1.0, -1.0, 0.5, 2.0], 10_000,
                                     seed=3, x=X_LEVEL)
    sp = out["spec"]
    freq = float(np.mean(out["stoch_loss"] > sp.rG / sp.nu))
    p0 = 3 * np.exp(-X_LEVEL)
    ok1 = freq <= p0 + 3 * np.sqrt(p0 * (1 - p0) / 10_000)
    sq = out["sq_loss"]
    se = sq.std(ddof=1) / np.sqrt(sq.size)
    gap = abs(sq.mean() - out["exact_risk"])
    return report(3, ok1 and gap <= 3 * se,
                  f"exceedance {freq:.4f} vs {p0:.4f}+3sd; risk {sq.mean():.4f} vs exact "
                  f"{out['exact_risk']:.4f} ({gap / se:.2f} SE)", t0)


def criterion_4():
    t0 = time.time()
    ns = [2 ** k for k in range(7, 14)]
    a = rate_experiment(1.0, ns, reps=200, seed=4)
    b = rate_experiment(1.0, ns, reps=200, seed=5, s=2.0)
    ok = abs(a["slope"] + 2 / 3) <= 0.15 and abs(b["slope"] + 2 / 3) <= 0.15
    return report(4, ok, f"aware slope {a['slope']:.3f}, mismatch slope {b['slope']:.3f} "
                  f"(target -0.667 +- 0.15)", t0)


def criterion_5():
    t0 = time.time()
    rng = make_rng(6)
    vals = []
    for _ in range(1000):
        k = gauss_compare.kappa(gauss_compare.random_spectrum(rng, int(rng.integers(2, 51))))
        vals.append(k.kappa * np.sqrt(k.Lambda1 * k.Lambda2))
    vals = np.array(vals)
    n_bad = int(np.sum((vals < 0.9) | (vals > 1.8)))
    rows = gauss_compare.comparison_suite(50, 100_000, seed=6)
    rmax = max(r["ratio"] for r in rows)
    bmax = max(r["band_ratio"] for r in rows)
    ok = n_bad == 0 and rmax <= 5 and bmax <= 5
    return report(5, ok, f"kappa sandwich violations {n_bad}/1000 (range {vals.min():.3f}-"
                  f"{vals.max():.3f}); max MC/bound ratio {rmax:.3f}; max band ratio {bmax:.3f}",
                  t0)


def _desk():
    with open(os.path.join(CONFIGS, "eio_desk.json")) as fh:
        return EioProblem.from_json(json.load(fh)["model_spec"]["payload"])


def criterion_6():
    t0 = time.time()
    pb = _desk()
    st, _ = fit_joint(pb)
    m = eio_model(pb)
    u = st.stack()
    # (a) Hessian vs finite differences of the gradient
    H = m.hess(u)
    h = 1e-5
    J = np.column_stack([-(m.grad(u + h * e) - m.grad(u - h * e)) / (2 * h)
                         for e in np.eye(pb.dim)])
    fd_rel = float(np.max(np.abs(J - H)) / np.abs(H).max())
    # (b) sampled constants
    sc = empirical_self_concordance(pb, st, 10_000, 0)
    ok_b = sc["c3_hat"] <= sc["c3"] and sc["c4_hat"] <= sc["c4"]
    # (c) p = q = 1 against a two-stage dense grid
    pb1 = EioProblem.build([4.3], [[4.0]], 30.0, [[0.5]])
    st1, _ = fit_joint(pb1)
    m1 = eio_model(pb1)
    c = np.array([0.0, 4.0])
    for half in (2.0, 0.02, 2e-4):
        t = np.linspace(c[0] - half, c[0] + half, 401)
        a = np.linspace(c[1] - half, c[1] + half, 401)
        P = np.stack([g.ravel() for g in np.meshgrid(t, a, indexing="ij")], axis=1)
        c = P[np.argmax(m1.eval_batch(P))]
    grid_gap = float(np.max(np.abs(c - st1.stack())))
    # (d) desk marginal via MCMC
    cert = eio_laplace_certificate(pb, st, x=X_LEVEL, C=2.0)
    S = oracle.mcmc_sample(m.eval, u, 100_000, seed=0)
    Q = np.hstack([np.eye(pb.p), np.zeros((pb.p, pb.dim - pb.p))])
    Sigma = np.zeros((pb.dim, pb.dim))
    Sigma[:pb.p, :pb.p] = np.linalg.inv(cert["F_eff"])
    obs = oracle.empirical_tv_elliptic(S, Q, u, Sigma, 0)
    ok_d = cert["applicable"] and obs <= cert["total"]
    # (e) large mu
    big = EioProblem.build(pb.z, pb.A_hat, 1e6, pb.G2)
    plug_gap = float(np.linalg.norm(fit_joint(big)[0].theta - plug_in(big)))
    ok = fd_rel <= 1e-5 and ok_b and grid_gap <= 1e-4 and ok_d and plug_gap <= 1e-6
    return report(6, ok, f"(a) FD rel {fd_rel:.1e}; (b) c3 {sc['c3_hat']:.4f}<={sc['c3']:.4f}, "
                  f"c4 {sc['c4_hat']:.2e}<={sc['c4']:.2e}; (c) grid gap {grid_gap:.1e}; "
                  f"(d) observed {obs:.4f} <= bound {cert['total']:.4f} "
                  f"(condition {cert['condition']:.3f}); (e) plug-in gap {plug_gap:.1e}", t0)


def criterion_7():
    t0 = time.time()
    rng = make_rng(7)
    cross = point = 0.0
    for k in range(10):
        p, q = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        H = random_spd(rng, p + q)
        m = quadratic_model(H, rng.standard_normal(p + q), quartic=0.5)
        u = fit(m).maximizer
        new, C, to_new = orthogonalize(m, p, u)
        Hn = new.hess(to_new(u[:p], u[p:]))
        cross = max(cross, float(np.linalg.norm(Hn[:p, p:]) / np.linalg.norm(Hn)))
        for w in u + rng.standard_normal((20, p + q)):
            point = max(point, abs(new.eval(to_new(w[:p], w[p:])) - m.eval(w)))
    return report(7, cross <= 1e-8 and point <= 1e-12,
                  f"max relative cross block {cross:.1e} (tol 1e-8); max pointwise gap "
                  f"{point:.1e} (tol 1e-12) over 10 fixtures", t0)


def criterion_8():
    t0 = time.time()
    names = sorted(f for f in os.listdir(CONFIGS) if f.endswith(".json"))
    same = []
    with tempfile.TemporaryDirectory() as tmp:
        for name in names:
            blobs = []
            for rep in range(2):
                out = os.path.join(tmp, f"{name}-{rep}")
                run(load_config(os.path.join(CONFIGS, name), output_dir=out))
                with open(os.path.join(out, "report.json"), "rb") as fh:
                    blobs.append(fh.read())
            same.append(blobs[0] == blobs[1])
    return report(8, all(same), f"{sum(same)}/{len(same)} configs bit-identical on rerun", t0)


# --------------------------------------------------------------------------


def test_criterion_1():
    assert criterion_1()


def test_criterion_2():
    assert criterion_2()


def test_criterion_3():
    assert criterion_3()


def test_criterion_4():
    assert criterion_4()


def test_criterion_5():
    assert criterion_5()


def test_criterion_6():
    assert criterion_6()


def test_criterion_7():
    assert criterion_7()


def test_criterion_8():
    assert criterion_8()


if __name__ == "__main__":
    results = [f() for f in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                             criterion_6, criterion_7, criterion_8)]
    sys.exit(0 if all(results) else 1)
