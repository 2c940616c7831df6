import numpy as np
import pytest
from hypothesis import given, strategies as st

from slsbounds.linalg import (BlockOperator, LinalgError, PsdOperator, SingularityError,
                              SymmetryError, norms, psd_leq, schur_efficient, spectral, sqrtm)
from conftest import random_spd


def test_spectral_examples():
    assert np.allclose(spectral(np.eye(2))[0], [1, 1])
    assert np.allclose(spectral(np.diag([4.0, 1.0]))[0], [4, 1])


def test_spectral_reconstruction(rng):
    A = rng.standard_normal((6, 6))
    S = A + A.T
    w, V = spectral(S)
    assert np.abs(V @ np.diag(w) @ V.T - S).max() < 1e-10


def test_sqrt_examples(rng):
    assert np.allclose(sqrtm(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]))
    assert np.allclose(sqrtm(np.eye(3)), np.eye(3))
    S = random_spd(rng, 5)
    R = sqrtm(S)
    assert np.abs(R @ R - S).max() < 1e-10


def test_norm_examples():
    n = norms(np.eye(3))
    assert np.allclose([n["operator_norm"], n["frobenius"], n["nuclear"]], [1, np.sqrt(3), 3])
    n = norms(np.diag([3.0, 0, 0]))
    assert np.allclose([n["operator_norm"], n["frobenius"], n["nuclear"]], [3, 3, 3])
    n = norms(np.diag([2.0, 1.0]))
    assert np.allclose([n["operator_norm"], n["frobenius"], n["nuclear"]], [2, np.sqrt(5), 3])


def test_schur_examples(rng):
    assert np.isclose(schur_efficient(BlockOperator.split([[2, 1], [1, 2]], 1)).matrix[0, 0], 1.5)
    tt = np.array([[3.0, 1], [1, 2]])
    F = BlockOperator(tt, np.zeros((2, 1)), [[5.0]])
    assert np.allclose(schur_efficient(F).matrix, tt)
    S = random_spd(rng, 4)
    eff = schur_efficient(BlockOperator.split(S, 2)).matrix
    assert np.abs(eff - np.linalg.inv(np.linalg.inv(S)[:2, :2])).max() < 1e-10


def test_errors():
    with pytest.raises(SymmetryError):
        PsdOperator([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(LinalgError):
        PsdOperator(np.diag([1.0, -1.0]))
    with pytest.raises(SingularityError):
        PsdOperator(np.diag([1.0, 0.0])).inv()
    with pytest.raises(LinalgError):
        PsdOperator(np.ones((2, 3)))


def test_immutable_and_json(rng):
    op = PsdOperator(random_spd(rng, 3))
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 1.0
    back = PsdOperator.from_json(op.to_json())
    assert np.array_equal(back.matrix, op.matrix)


def test_tiny_negative_eigenvalue_clamped():
    op = PsdOperator(np.diag([1.0, -1e-15]))
    assert op.min_eig() == 0.0


@given(st.integers(2, 6), st.integers(0, 10_000))
def test_schur_matches_inverse_block(d, seed):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, d, 100.0)
    p = int(rng.integers(1, d))
    eff = schur_efficient(BlockOperator.split(S, p)).matrix
    ref = np.linalg.inv(np.linalg.inv(S)[:p, :p])
    assert np.abs(eff - ref).max() <= 1e-8 * np.abs(S).max()
    # efficient block never exceeds the target block
    assert psd_leq(eff, S[:p, :p])


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_norm_ordering(d, seed):
    S = random_spd(np.random.default_rng(seed), d)
    n = norms(S)
    assert n["operator_norm"] <= n["frobenius"] * (1 + 1e-12)
    assert n["frobenius"] <= n["nuclear"] * (1 + 1e-12)


@given(st.integers(1, 5), st.integers(0, 10_000))
def test_inverse_and_logdet(d, seed):
    S = random_spd(np.random.default_rng(seed), d)
    op = PsdOperator(S)
    assert np.abs(op.inv() @ S - np.eye(d)).max() < 1e-9
    assert np.isclose(op.logdet(), np.linalg.slogdet(S)[1])
