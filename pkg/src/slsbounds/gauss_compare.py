"""Gaussian comparison on centred balls: kappa(Sigma), explicit bounds, MC validators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import kernels
from .oracle import dkw_envelope

CHUNK = 1 << 16


class DegenerateSpectrum(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumProfile:
    lambdas: np.ndarray
    Lambda1: float
    Lambda2: float
    kappa: float
    branch: str


def _spectrum(x):
    """Eigenvalues (descending) of a covariance matrix or a vector of eigenvalues."""
    a = np.asarray(getattr(x, "matrix", x), dtype=float)
    if a.ndim == 2:
        a = np.linalg.eigvalsh(0.5 * (a + a.T))
    a = np.clip(np.sort(a)[::-1], 0.0, None)
    return a


def kappa(lambdas) -> SpectrumProfile:
    """Spectral functional kappa with its three-case formula.

    Ties ``3 lambda_1^2 == Lambda_1^2`` resolve to the "many" branch.
    """
    lam = _spectrum(lambdas)
    if np.count_nonzero(lam > 0) < 2:
        raise DegenerateSpectrum("need at least two positive eigenvalues")
    sq = lam ** 2
    L1 = float(np.sqrt(sq.sum()))
    L2 = float(np.sqrt(sq[1:].sum()))
    l1, l2 = float(lam[0]), float(lam[1])
    if 3 * l1 ** 2 <= L1 ** 2:
        return SpectrumProfile(lam, L1, L2, 1.0 / L1, "many")
    if 3 * l2 ** 2 <= L2 ** 2:
        return SpectrumProfile(lam, L1, L2, (l1 * L2) ** -0.5, "spike")
    return SpectrumProfile(lam, L1, L2, (l1 * l2) ** -0.5, "two")


def spectral_l1_diff(lam_xi, lam_eta) -> float:
    a, b = _spectrum(lam_xi), _spectrum(lam_eta)
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    return float(np.abs(a - b).sum())


def comparison_bound(spec_xi: SpectrumProfile, spec_eta: SpectrumProfile, a_norm_sq=0.0,
                     lambda_l1_diff=None) -> float:
    """``(kappa_xi + kappa_eta)(|lambda_xi - lambda_eta|_1 + |a|^2)`` (pre-constant).

    Pass ``|Sigma_xi - Sigma_eta|_1`` as ``lambda_l1_diff`` for the nuclear-norm form.
    """
    if lambda_l1_diff is None:
        lambda_l1_diff = spectral_l1_diff(spec_xi.lambdas, spec_eta.lambdas)
    return float((spec_xi.kappa + spec_eta.kappa) * (lambda_l1_diff + a_norm_sq))


def _chunk_rngs(seed, n_chunks):
    ss = np.random.SeedSequence(int(seed)).spawn(n_chunks)
    return [np.random.Generator(np.random.Philox(s)) for s in ss]


def sample_norms(Sigma, a=None, n=100_000, seed=0, squared=False) -> np.ndarray:
    """Sorted draws of ``|xi - a|`` for ``xi ~ N(0, Sigma)``.

    ``Sigma`` may be a matrix or a vector of eigenvalues (diagonal case).
    Draws are generated in fixed-size chunks with derived seeds.
    """
    S = np.asarray(getattr(Sigma, "matrix", Sigma), dtype=float)
    if S.ndim == 1:
        root = np.diag(np.sqrt(np.clip(S, 0, None)))
    else:
        w, V = np.linalg.eigh(0.5 * (S + S.T))
        root = V * np.sqrt(np.clip(w, 0, None))
    d = root.shape[0]
    a = np.zeros(d) if a is None else np.asarray(a, dtype=float)
    n = int(n)
    n_chunks = -(-n // CHUNK)
    out = np.empty(n)
    for k, rng in enumerate(_chunk_rngs(seed, n_chunks)):
        m = min(CHUNK, n - k * CHUNK)
        z = rng.standard_normal((m, d)) @ root.T - a
        out[k * CHUNK:k * CHUNK + m] = np.sum(z * z, axis=1)
    out = np.sort(out)
    return out if squared else np.sqrt(out)


def mc_ball_sup_distance(Sigma_xi, Sigma_eta, a=None, n_samples=100_000, seed=0,
                         return_envelope=False):
    """Empirical ``sup_x |P(|xi - a| <= x) - P(|eta| <= x)|``."""
    s1 = sample_norms(Sigma_xi, a, n_samples, seed)
    s2 = sample_norms(Sigma_eta, None, n_samples, seed + 1_000_003)
    d = kernels.ecdf_sup_two(s1, s2)
    if return_envelope:
        return d, two_sample_envelope(n_samples, n_samples)
    return d


def two_sample_envelope(n, m, alpha=0.05) -> float:
    return float(np.sqrt((1 / n + 1 / m) * np.log(2 / alpha) / 2))


def anti_concentration_band(spectrum, a=None, epsilon=1.0, n_samples=100_000, seed=0) -> dict:
    """Empirical ``sup_x P(x < |xi - a|^2 < x + eps)`` and ``kappa * eps``."""
    prof = kappa(spectrum)
    if epsilon <= 0:
        return {"band_mass_sup": 0.0, "kappa_eps": 0.0, "ratio": 0.0}
    s = sample_norms(prof.lambdas, a, n_samples, seed, squared=True)
    mass = kernels.band_max_count(s, epsilon) / s.size
    ke = prof.kappa * epsilon
    return {"band_mass_sup": float(mass), "kappa_eps": float(ke), "ratio": float(mass / ke),
            "mc_envelope": dkw_envelope(n_samples)}


def gaussian_ball_prob(Sigma, r, shift=None, n_samples=100_000, seed=0) -> np.ndarray:
    """``P(|shift + xi| <= r)`` for ``xi ~ N(0, Sigma)`` at each radius in ``r``.

    Exact error-function formula when Sigma has rank one (or is scalar);
    otherwise Monte Carlo with a fixed seed.
    """
    S = np.atleast_2d(np.asarray(getattr(Sigma, "matrix", Sigma), dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    shift = np.zeros(S.shape[0]) if shift is None else np.atleast_1d(shift).astype(float)
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    tol = 1e-12 * max(w.max(), 1e-300)
    pos = w > tol
    if pos.sum() <= 1:
        # the component of the shift orthogonal to the range is deterministic
        if pos.sum() == 0:
            return (np.linalg.norm(shift) <= r).astype(float)
        v = V[:, pos][:, 0]
        m = float(v @ shift)
        perp2 = float(shift @ shift - m * m)
        sd = np.sqrt(w[pos][0])
        rr = np.sqrt(np.clip(r ** 2 - perp2, 0, None))
        out = norm.cdf((rr - m) / sd) - norm.cdf((-rr - m) / sd)
        return np.where(r ** 2 >= perp2, out, 0.0)
    s = sample_norms(S, -shift, n_samples, seed)
    return np.searchsorted(s, r, side="right") / s.size


def random_spectrum(rng, dim):
    """Random decaying spectrum used by the validation suites."""
    kind = rng.integers(3)
    if kind == 0:
        lam = rng.uniform(0.2, 1.0, dim)
    elif kind == 1:
        lam = np.arange(1, dim + 1) ** -rng.uniform(0.5, 2.0)
    else:
        lam = rng.uniform(0.05, 0.3, dim)
        lam[0] = rng.uniform(1.0, 10.0)
    return np.sort(lam)[::-1]


def comparison_suite(n_cases=50, n_samples=100_000, seed=0, dims=(3, 50)) -> list:
    """Randomized suite: MC sup distance vs the explicit bound, plus band ratios."""
    from .sls import make_rng
    rng = make_rng(seed)
    rows = []
    for case in range(n_cases):
        d = int(rng.integers(dims[0], dims[1] + 1))
        lx = random_spectrum(rng, d)
        le = lx * (1 + rng.uniform(-0.3, 0.3, d))
        a = rng.standard_normal(d)
        a *= rng.uniform(0.0, 0.5) * np.sqrt(lx.sum()) / np.linalg.norm(a)
        kx, ke = kappa(lx), kappa(le)
        bound = comparison_bound(kx, ke, float(a @ a))
        emp = mc_ball_sup_distance(lx, le, a, n_samples, seed * 7919 + case)
        eps = 0.25 * float(np.sqrt(np.sum(lx ** 2)))
        band = anti_concentration_band(lx, a, eps, n_samples, seed * 7919 + case + 500_000)
        rows.append({"case_id": case, "dim": d, "kappa_xi": kx.kappa, "kappa_eta": ke.kappa,
                     "bound": bound, "empirical": emp, "ratio": emp / bound,
                     "band_ratio": band["ratio"]})
    return rows
