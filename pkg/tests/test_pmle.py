import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq
from scipy.special import expit

from slsbounds.linalg import PsdOperator
from slsbounds.pmle import (ConcentrationSpec, InvalidRegime, NonConcavityError,
                            NonConvergenceError, bias_certificate,
                            concentration_spec, fisher_wilks_certificate, fit,
                            hessian_stability, linear_gaussian_replicates, newton_maximize,
                            risk_certificate)
from slsbounds.sls import (SmoothnessProbe, builtin_linear_gaussian, builtin_logistic,
                           estimate_omega, make_rng, polynomial_model)
from conftest import random_spd


def test_ridge_fit():
    m = builtin_linear_gaussian(np.eye(2), [1.0, 2.0], G2=np.eye(2))
    r = fit(m)
    assert np.allclose(r.maximizer, [0.5, 1.0]) and r.converged


def test_logistic_scalar_bisection_oracle():
    m = builtin_logistic([[1.0]], [1], G2=[[1.0]])
    ref = brentq(lambda v: 1 - expit(v) - v, -5, 5)
    assert np.isclose(fit(m).maximizer[0], ref, atol=1e-9)
    # root of sigma(v) - 1 + v = 0
    assert np.isclose(ref, 0.40106, atol=1e-5)


def test_newton_one_step_on_quadratic():
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    b = np.array([1.0, -1.0])
    f = lambda u: -0.5 * u @ A @ u + b @ u  # noqa: E731
    g = lambda u: b - A @ u  # noqa: E731
    h = lambda u: A  # noqa: E731
    x, *_, it, _ = newton_maximize(f, g, h, np.zeros(2))
    assert it <= 1 and np.allclose(x, np.linalg.solve(A, b))
    x2, *_, it2, _ = newton_maximize(f, g, h, x)
    assert it2 == 0


def test_nonconcave_and_divergent():
    # no ascent step exists: the gradient points uphill but the objective drops
    with pytest.raises(NonConcavityError, match="eigenvalue"):
        newton_maximize(lambda u: -float(u @ u), lambda u: np.ones(1),
                        lambda u: -np.eye(1), np.zeros(1))
    # unbounded convex objective walks off: iteration cap
    m = polynomial_model(1, [(1.0, (0, 0))])
    with pytest.raises(NonConvergenceError):
        fit(m, init=np.array([1.0]), max_iter=20)


def test_concentration_examples():
    s = concentration_spec(np.diag([2.0, 3.0]), np.diag([2.0, 3.0]))
    assert np.isclose(s.pG, 2) and np.isclose(s.lambdaG, 1)
    s = concentration_spec(np.diag([2.0, 2.0]), np.eye(2), x=1.7)
    assert np.isclose(s.pG, 1) and np.isclose(s.lambdaG, 0.5)
    # rG = sqrt(pG) + sqrt(2 x lambdaG)
    s = concentration_spec(np.eye(4), np.eye(4), x=2.0)
    assert np.isclose(s.rG, 4.0)


@given(st.integers(1, 5), st.integers(0, 10_000))
def test_pG_congruence_invariance(d, seed):
    rng = np.random.default_rng(seed)
    D2, V2 = random_spd(rng, d), random_spd(rng, d)
    T = rng.standard_normal((d, d)) + 3 * np.eye(d)
    a = concentration_spec(D2, V2).pG
    b = concentration_spec(T.T @ D2 @ T, T.T @ V2 @ T).pG
    assert np.isclose(a, b, rtol=1e-7)


def test_fisher_wilks_quadratic_exact():
    rng = make_rng(0)
    X = rng.standard_normal((30, 3))
    ups = np.array([1.0, -1.0, 0.5])
    eps = rng.standard_normal(30)
    G2 = 0.5 * np.eye(3)
    m = builtin_linear_gaussian(X, X @ ups + eps, 1.0, G2)
    V2 = X.T @ X
    ups_G = np.linalg.solve(V2 + G2, V2 @ ups)
    fw = fisher_wilks_certificate(m, fit(m), ups_G, X.T @ eps, 0.0)
    assert abs(fw["wilks_residual"]) < 1e-9 and fw["fisher_residual"] < 1e-9
    assert fw["wilks_holds"] and fw["fisher_holds"]


def test_fisher_wilks_bound_values():
    m = builtin_linear_gaussian([[1.0]], [3.0])
    fw = fisher_wilks_certificate(m, fit(m), np.zeros(1), np.array([3.0]), 0.1)
    assert np.isclose(fw["xi_norm_sq"], 9)
    assert np.isclose(fw["wilks_bounds"][1], 1.0)
    assert np.isclose(fw["fisher_bound"], 3 * 0.1 * 9 / 0.81)
    with pytest.raises(InvalidRegime):
        fisher_wilks_certificate(m, fit(m), np.zeros(1), np.array([3.0]), 1.0)


def test_logistic_replicates_flags_on_concentration_event():
    """Fisher/Wilks flags on the concentration event; event frequency vs 3 e^{-x}."""
    rng = make_rng(7)
    n, x = 400, 3.0
    X = rng.standard_normal((n, 2))
    ups = np.array([0.5, -0.5])
    G2 = np.eye(2)
    prob = expit(X @ ups)
    pop = builtin_logistic(X, prob, G2, mean_labels=True)
    ups_G = fit(pop, init=ups).maximizer
    DG2 = pop.fisher(ups_G)
    V2 = (X.T * (prob * (1 - prob))) @ X
    cs = concentration_spec(DG2, V2, x)
    omega = estimate_omega(pop, SmoothnessProbe(ups_G, DG2, cs.rG / cs.nu, 256, 0))
    reps, outside, bad = 200, 0, 0
    for k in range(reps):
        y = (make_rng(100 + k).random(n) < prob).astype(float)
        m = builtin_logistic(X, y, G2)
        r = fit(m, init=ups_G)
        inside = np.sqrt(DG2.quad(r.maximizer - ups_G)) <= cs.rG / cs.nu
        outside += not inside
        if inside:
            fw = fisher_wilks_certificate(m, r, ups_G, X.T @ (y - prob), omega)
            bad += not (fw["wilks_holds"] and fw["fisher_holds"])
    p0 = 3 * np.exp(-x)
    assert outside / reps <= p0 + 3 * np.sqrt(p0 * (1 - p0) / reps)
    assert bad == 0


def test_hessian_stability():
    F = PsdOperator(random_spd(np.random.default_rng(0), 3))
    assert abs(hessian_stability(F, F)["delta_plus"]) < 1e-12
    r = hessian_stability(F, 1.2 * F.matrix)
    assert np.isclose(r["delta_plus"], 0.2) and r["sandwich_ok"]
    P = F.matrix + 0.1 * random_spd(np.random.default_rng(1), 3)
    assert hessian_stability(F, P, 1000)["sandwich_ok"]


def test_bias_examples():
    assert bias_certificate(np.eye(2), [1.0, 2.0], np.zeros((2, 2)), np.eye(2)).bound == 0
    # single inverse of F + G^2: 1 / 11
    b = bias_certificate([[1.0]], [1.0], [[1.0]], [[10.0]])
    assert np.isclose(b.bG, 1 / 11)
    rng = np.random.default_rng(3)
    F, G2 = random_spd(rng, 3), 0.5 * random_spd(rng, 3)
    ups = rng.standard_normal(3)
    exact = np.linalg.solve(F + G2, G2 @ ups)
    assert np.isclose(bias_certificate(np.eye(3), ups, G2, F).bound, np.linalg.norm(exact))
    with pytest.raises(InvalidRegime):
        bias_certificate(np.eye(3), ups, G2, F, delta_star=1.0)


def test_risk_examples():
    spec = ConcentrationSpec(4.0, 1.0, np.inf, 4.0, 2 / 3, 1.0)
    r = risk_certificate(spec, 0.0, 0.0, 1.5)
    assert np.isclose(r["loss_bound"], 4 + 1.5) and np.isclose(r["risk_bound"], 4 + 1.5 ** 2)
    spec = ConcentrationSpec(4.0, 1.0, 3.0, 4.0, 2 / 3, 1.0)
    r = risk_certificate(spec, 0.04, 0.1, 1.0)
    assert np.isclose(r["loss_bound"], 6.456, atol=1e-3)


def test_linear_gaussian_risk_equality():
    rng = make_rng(11)
    X = rng.standard_normal((40, 3))
    out = linear_gaussian_replicates(X, 1.0, 0.7 * np.eye(3), [1.0, -0.5, 2.0], 10_000, seed=2)
    sq = out["sq_loss"]
    assert abs(sq.mean() - out["exact_risk"]) <= 3 * sq.std(ddof=1) / np.sqrt(sq.size)
