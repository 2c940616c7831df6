import numpy as np
import pytest
from hypothesis import given, strategies as st

from slsbounds.linalg import PsdOperator
from slsbounds.pmle import fit
from slsbounds.sls import (ModelError, SmoothnessProbe, builtin_linear_gaussian,
                           builtin_logistic, delta3, estimate_omega, estimate_self_concordance,
                           load_model, make_rng, polynomial_model, sphere_directions)


def fd_grad(f, u, h=1e-6):
    return np.array([(f(u + h * e) - f(u - h * e)) / (2 * h) for e in np.eye(u.size)])


def test_linear_gaussian_examples():
    m = builtin_linear_gaussian(np.eye(2), [1.0, 2.0])
    assert np.allclose(fit(m).maximizer, [1, 2])
    m = builtin_linear_gaussian(np.eye(2), [1.0, 2.0], G2=np.eye(2))
    assert np.allclose(fit(m).maximizer, [0.5, 1.0])
    probe = SmoothnessProbe(np.zeros(2), PsdOperator(np.eye(2)), 3.0, 64)
    assert estimate_omega(m, probe) == 0.0


def test_linear_gaussian_rank_deficient():
    with pytest.raises(ModelError):
        builtin_linear_gaussian(np.array([[1.0, 1.0], [2.0, 2.0]]), [1.0, 2.0])


def test_logistic_examples():
    m = builtin_logistic(np.zeros((3, 2)), [0, 0, 0])
    assert np.allclose(m.grad(np.zeros(2)), 0)
    m = builtin_logistic([[1.0]], [1])
    assert np.isclose(m.grad(np.zeros(1))[0], 0.5)
    with pytest.raises(ModelError):
        builtin_logistic([[1.0]], [0.3])


@given(st.integers(0, 10_000))
def test_logistic_gradient_and_hessian_fd(seed):
    rng = make_rng(seed)
    X = rng.standard_normal((30, 3))
    y = (rng.random(30) < 0.5).astype(float)
    m = builtin_logistic(X, y, G2=0.1 * np.eye(3))
    u = rng.standard_normal(3)
    g = m.grad(u)
    assert np.abs(fd_grad(m.eval, u) - g).max() <= 1e-6 * max(1.0, np.abs(g).max())
    H = np.array([fd_grad(lambda v: m.grad(v)[i], u) for i in range(3)])
    assert np.abs(-H - m.hess(u)).max() <= 1e-5 * max(1.0, np.abs(H).max())


@given(st.integers(0, 10_000))
def test_logistic_third_fourth_derivatives(seed):
    rng = make_rng(seed)
    X = rng.standard_normal((20, 2))
    y = (rng.random(20) < 0.5).astype(float)
    m = builtin_logistic(X, y)
    u, h = rng.standard_normal(2), rng.standard_normal(2)

    def fd(t):
        g = [m.smooth(u + k * t * h) for k in (-2, -1, 0, 1, 2)]
        return ((g[4] - 2 * g[3] + 2 * g[1] - g[0]) / (2 * t ** 3),
                (g[4] - 4 * g[3] + 6 * g[2] - 4 * g[1] + g[0]) / t ** 4)

    # Richardson extrapolation of the O(t^2) stencils
    (a3, a4), (b3, b4) = fd(2e-2), fd(1e-2)
    d3, d4 = (4 * b3 - a3) / 3, (4 * b4 - a4) / 3
    assert abs(m.d3(u, h) - d3) <= 1e-4 * np.sum(np.abs(X @ h) ** 3)
    assert abs(m.d4(u, h) - d4) <= 1e-3 * np.sum(np.abs(X @ h) ** 4)


def test_delta3_quadratic_zero():
    m = polynomial_model(2, [(-0.5, (0, 0)), (-0.5, (1, 1)), (0.3, (0, 1))])
    assert delta3(m, np.array([0.2, -0.1]), np.array([1.0, 2.0])) == 0.0


def test_omega_cubic_closed_form():
    eps, r = 0.05, 2.0
    m = polynomial_model(1, [(-0.5, (0, 0)), (eps, (0, 0, 0))])
    probe = SmoothnessProbe(np.zeros(1), PsdOperator([[1.0]]), r, 16)
    assert np.isclose(estimate_omega(m, probe), 2 * eps * r, rtol=1e-9)


def test_omega_logistic_vs_dense_slice():
    rng = make_rng(5)
    x = rng.standard_normal(50)
    y = (rng.random(50) < 0.6).astype(float)
    m = builtin_logistic(x[:, None], y, G2=[[1.0]])
    c = fit(m).maximizer
    D = np.sqrt(m.hess(c)[0, 0] - 1.0)
    r = 3.0
    probe = SmoothnessProbe(c, PsdOperator([[D ** 2]]), r, 16)
    est = estimate_omega(m, probe)
    ts = np.linspace(-r / D, r / D, 20001)
    ts = ts[np.abs(ts) > 1e-6]
    dense = max(2 * abs(delta3(m, c, np.array([t]))) / (D * t) ** 2 for t in ts)
    assert abs(est - dense) <= 0.1 * dense


def test_self_concordance_examples():
    m = polynomial_model(1, [(-0.5, (0, 0)), (-1.0, (0, 0, 0, 0))])
    probe = SmoothnessProbe(np.zeros(1), PsdOperator([[1.0]]), 1.0, 8)
    sc = estimate_self_concordance(m, probe, 1.0)
    assert np.isclose(sc["c4_hat"], 24.0)
    q = builtin_linear_gaussian(np.eye(2), [1.0, 0.0])
    sc = estimate_self_concordance(q, SmoothnessProbe(np.zeros(2), PsdOperator(np.eye(2))), 1.0)
    assert sc["c3_hat"] == 0.0 and sc["c4_hat"] == 0.0


def test_directions_deterministic_and_unit():
    a = sphere_directions(4, 64, 3)
    assert np.array_equal(a, sphere_directions(4, 64, 3))
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)


def test_polynomial_derivatives_fd():
    m = polynomial_model(2, [(-1.0, (0, 0)), (-1.0, (1, 1)), (0.2, (0, 0, 1)),
                             (-0.1, (0, 0, 1, 1))])
    u = np.array([0.3, -0.7])
    assert np.allclose(fd_grad(m.eval, u), m.grad(u), atol=1e-7)


def test_load_model_kinds():
    m = load_model({"kind": "linear_gaussian", "payload": {"design": [[1.0]], "response": [2.0]}})
    assert m.kind == "linear_gaussian"
    m = load_model('{"kind": "custom_grid", "payload": {"dim": 1, "terms": [[-0.5, [0, 0]]]}}')
    assert m.dim == 1
    m = load_model({"kind": "eio", "payload": {"z": [1.0], "A_hat": [[1.0]], "mu": 3.0}})
    assert m.dim == 2
    with pytest.raises(ModelError):
        load_model({"kind": "nope", "payload": {}})


def test_batch_matches_pointwise():
    rng = make_rng(1)
    X = rng.standard_normal((10, 2))
    m = builtin_logistic(X, (rng.random(10) < 0.5).astype(float), G2=np.eye(2))
    U = rng.standard_normal((7, 2))
    assert np.allclose(m.eval_batch(U), [m.eval(u) for u in U])
