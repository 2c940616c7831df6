"""Dense symmetric operator algebra.

Everything downstream (Fisher matrices, penalties, covariance matrices)
is held as a :class:`PsdOperator` with a cached eigendecomposition.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SYM_TOL = 1e-12
PSD_REL_TOL = 1e-12
ORDER_TOL = 1e-9


class LinalgError(ValueError):
    """Base error for operator validation."""


class SymmetryError(LinalgError):
    pass


class SingularityError(LinalgError):
    pass


def _asym(m):
    scale = max(np.abs(m).max(), 1e-300)
    return np.abs(m - m.T).max() / scale


@dataclass(frozen=True, eq=False)
class PsdOperator:
    """Symmetric positive semi-definite matrix with cached spectrum.

    Eigenvalues are stored in descending order.  Slightly negative
    eigenvalues (above ``-psd_tol * lambda_max``) are clamped to zero;
    anything more negative is rejected unless ``allow_indefinite``.
    """

    matrix: np.ndarray
    psd_tol: float = PSD_REL_TOL
    allow_indefinite: bool = False
    evals: np.ndarray = field(init=False, repr=False)
    evecs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise LinalgError(f"operator must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise LinalgError("operator has non-finite entries")
        if m.size and _asym(m) > SYM_TOL:
            raise SymmetryError(f"relative asymmetry {_asym(m):.3e} exceeds {SYM_TOL}")
        m = 0.5 * (m + m.T)
        w, v = np.linalg.eigh(m)
        w, v = w[::-1].copy(), v[:, ::-1].copy()
        if not self.allow_indefinite and w.size:
            top = max(w[0], 0.0)
            floor = -self.psd_tol * top
            if w[-1] < floor:
                raise LinalgError(
                    f"operator is not PSD: eigenvalue {w[-1]:.6e} below floor {floor:.3e}")
            w = np.where(w < 0, 0.0, w)
        m.setflags(write=False)
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "evals", w)
        object.__setattr__(self, "evecs", v)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim, scale=1.0):
        return cls(scale * np.eye(dim))

    @classmethod
    def diag(cls, values):
        return cls(np.diag(np.asarray(values, dtype=float)))

    def apply(self, x):
        return self.matrix @ x

    def quad(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.matrix @ x)

    def func(self, fn) -> np.ndarray:
        """Spectral calculus: V fn(L) V^T."""
        return (self.evecs * fn(self.evals)) @ self.evecs.T

    def min_eig(self) -> float:
        return float(self.evals[-1]) if self.dim else 0.0

    def max_eig(self) -> float:
        return float(self.evals[0]) if self.dim else 0.0

    def check_invertible(self):
        lo = self.min_eig()
        if lo <= self.psd_tol * max(self.max_eig(), 0.0) or lo <= 0:
            raise SingularityError(f"operator is singular: smallest eigenvalue {lo:.6e}")

    def inv(self) -> np.ndarray:
        self.check_invertible()
        return self.func(lambda w: 1.0 / w)

    def solve(self, b):
        self.check_invertible()
        return self.evecs @ ((self.evecs.T @ b).T / self.evals).T

    def logdet(self) -> float:
        self.check_invertible()
        return float(np.sum(np.log(self.evals)))

    def to_json(self) -> dict:
        return {"dim": self.dim, "rows": self.matrix.tolist()}

    @classmethod
    def from_json(cls, obj) -> "PsdOperator":
        if isinstance(obj, str):
            obj = json.loads(obj)
        rows = np.array(obj["rows"], dtype=float).reshape(obj["dim"], obj["dim"])
        return cls(rows)


def as_operator(x, **kw) -> PsdOperator:
    if isinstance(x, PsdOperator):
        return x
    return PsdOperator(np.asarray(x, dtype=float), **kw)


def spectral(op):
    """Eigenvalues (descending) and orthonormal eigenvectors."""
    op = as_operator(op, allow_indefinite=True)
    return op.evals, op.evecs


def sqrt_inv_sqrt(op):
    """Return ``(op^{1/2}, op^{-1/2})``."""
    op = as_operator(op)
    root = op.func(np.sqrt)
    op.check_invertible()
    return root, op.func(lambda w: 1.0 / np.sqrt(w))


def sqrtm(op):
    return as_operator(op).func(np.sqrt)


def inv_sqrtm(op):
    op = as_operator(op)
    op.check_invertible()
    return op.func(lambda w: 1.0 / np.sqrt(w))


def norms(op) -> dict:
    """Operator, Frobenius and nuclear norms of a symmetric matrix."""
    w = np.abs(as_operator(op, allow_indefinite=True).evals)
    return {"operator_norm": float(w.max(initial=0.0)),
            "frobenius": float(np.sqrt(np.sum(w * w))),
            "nuclear": float(np.sum(w))}


def sym_norms(m) -> dict:
    """Norms of a symmetric (possibly indefinite) array."""
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + m.T)
    w = np.abs(np.linalg.eigvalsh(m))
    return {"operator_norm": float(w.max(initial=0.0)),
            "frobenius": float(np.sqrt(np.sum(w * w))),
            "nuclear": float(np.sum(w))}


def psd_leq(a, b, tol=ORDER_TOL) -> bool:
    """Loewner order test ``a <= b`` via min eigenvalue of ``b - a``."""
    a = np.asarray(getattr(a, "matrix", a), dtype=float)
    b = np.asarray(getattr(b, "matrix", b), dtype=float)
    d = b - a
    d = 0.5 * (d + d.T)
    scale = max(np.abs(np.linalg.eigvalsh(b)).max(initial=0.0), 1e-300)
    return bool(np.linalg.eigvalsh(d)[0] >= -tol * scale)


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """2x2 block symmetric matrix with target block of size p."""

    tt: np.ndarray
    te: np.ndarray
    ee: np.ndarray

    def __post_init__(self):
        tt = np.atleast_2d(np.asarray(self.tt, dtype=float))
        ee = np.atleast_2d(np.asarray(self.ee, dtype=float))
        te = np.asarray(self.te, dtype=float).reshape(tt.shape[0], ee.shape[0])
        object.__setattr__(self, "tt", tt)
        object.__setattr__(self, "te", te)
        object.__setattr__(self, "ee", ee)

    @property
    def et(self):
        return self.te.T

    @property
    def dims(self):
        return self.tt.shape[0], self.ee.shape[0]

    @classmethod
    def split(cls, full, p):
        full = np.asarray(getattr(full, "matrix", full), dtype=float)
        return cls(full[:p, :p], full[:p, p:], full[p:, p:])

    def full(self) -> np.ndarray:
        return np.block([[self.tt, self.te], [self.et, self.ee]])


def schur_efficient(blocks: BlockOperator) -> PsdOperator:
    """Efficient block ``tt - te ee^{-1} et``."""
    ee = PsdOperator(blocks.ee)
    ee.check_invertible()
    s = blocks.tt - blocks.te @ ee.solve(blocks.et)
    return PsdOperator(0.5 * (s + s.T))
