"""Brute-force referees: grid quadrature posteriors, adaptive Metropolis, TV distances."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from . import kernels
from .sls import make_rng

MAX_GRID_DIM = 4
BOUNDARY_TOL = 1e-6


class OracleError(RuntimeError):
    pass


@dataclass
class GridPosterior:
    box: np.ndarray
    resolution: tuple
    axes: list
    log_density: np.ndarray
    cell_mass: np.ndarray
    boundary_mass_estimate: float

    @property
    def dim(self):
        return len(self.axes)

    @property
    def cell_volume(self):
        return float(np.prod([a[1] - a[0] for a in self.axes]))

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def mean(self) -> np.ndarray:
        return self.cell_mass.ravel() @ self.points()

    def cov(self) -> np.ndarray:
        P = self.points()
        w = self.cell_mass.ravel()
        c = P - w @ P
        return (c * w[:, None]).T @ c

    def marginal(self, axes):
        """Marginal masses over the listed axes."""
        axes = tuple(np.atleast_1d(axes))
        other = tuple(i for i in range(self.dim) if i not in axes)
        return np.sum(self.cell_mass, axis=other)

    def prob(self, mask_fn) -> float:
        P = self.points()
        return float(self.cell_mass.ravel()[mask_fn(P)].sum())


def grid_posterior(f, box, resolution, vectorized=False, boundary_tol=BOUNDARY_TOL,
                   check=True) -> GridPosterior:
    """Normalized midpoint-rule posterior ``exp(f)`` on a tensor grid.

    ``f`` maps a point to its log density, or (``vectorized``) an ``(m, d)``
    array of points to ``m`` values.  Objects with ``eval_batch`` are used
    directly.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    d = box.shape[0]
    if d > MAX_GRID_DIM:
        raise OracleError(f"grid oracle limited to dim <= {MAX_GRID_DIM}, got {d}")
    res = tuple(int(r) for r in np.broadcast_to(resolution, (d,)))
    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(box, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    P = np.stack([m.ravel() for m in mesh], axis=1)
    if hasattr(f, "eval_batch"):
        lv = f.eval_batch(P)
    elif vectorized:
        lv = np.asarray(f(P), dtype=float)
    else:
        lv = np.array([f(p) for p in P])
    lv = lv.reshape(res)
    if not np.all(np.isfinite(lv) | (lv == -np.inf)):
        raise OracleError("log density not finite on the grid")
    mass = np.exp(lv - logsumexp(lv))
    shell = np.zeros(res, dtype=bool)
    for k in range(d):
        idx = [slice(None)] * d
        idx[k] = 0
        shell[tuple(idx)] = True
        idx[k] = -1
        shell[tuple(idx)] = True
    bmass = float(mass[shell].sum())
    if check and bmass > boundary_tol:
        raise OracleError(f"boundary mass {bmass:.3e} exceeds {boundary_tol:.0e}; widen the box")
    return GridPosterior(box, res, axes, lv, mass, bmass)


def gaussian_box(mean, cov, width=8.0):
    sd = np.sqrt(np.diag(np.atleast_2d(cov)))
    mean = np.atleast_1d(mean)
    return np.stack([mean - width * sd, mean + width * sd], axis=1)


def gaussian_cell_mass(grid: GridPosterior, mean, Sigma, refine=False) -> np.ndarray:
    """Midpoint-rule Gaussian masses on the grid cells (optionally 2x refined)."""
    mvn = multivariate_normal(np.atleast_1d(mean), np.atleast_2d(Sigma), allow_singular=False)
    if not refine:
        return np.atleast_1d(mvn.pdf(grid.points())).reshape(grid.resolution) * grid.cell_volume
    hs = [a[1] - a[0] for a in grid.axes]
    out = np.zeros(grid.resolution)
    offsets = np.array(np.meshgrid(*[[-0.25, 0.25]] * grid.dim, indexing="ij")).reshape(grid.dim, -1).T
    P = grid.points()
    for o in offsets:
        out += np.atleast_1d(mvn.pdf(P + o * hs)).reshape(grid.resolution)
    return out * grid.cell_volume / len(offsets)


def total_variation(grid: GridPosterior, gaussian) -> float:
    """``1/2 sum |p - q|`` over cells, plus the Gaussian mass outside the box."""
    mean, Sigma = gaussian
    q = gaussian_cell_mass(grid, mean, Sigma)
    outside = max(0.0, 1.0 - q.sum())
    return float(0.5 * (np.abs(grid.cell_mass - q).sum() + outside))


def tv_quadrature_error(grid: GridPosterior, gaussian) -> float:
    """Difference between midpoint and 2x-refined Gaussian masses (in TV units)."""
    mean, Sigma = gaussian
    a = gaussian_cell_mass(grid, mean, Sigma)
    b = gaussian_cell_mass(grid, mean, Sigma, refine=True)
    return float(0.5 * np.abs(a - b).sum())


def grid_kl(grid: GridPosterior, gaussian) -> float:
    """KL(grid posterior || Gaussian) by quadrature."""
    mean, Sigma = gaussian
    mvn = multivariate_normal(np.atleast_1d(mean), np.atleast_2d(Sigma))
    p = grid.cell_mass.ravel()
    logq = mvn.logpdf(grid.points()) + np.log(grid.cell_volume)
    keep = p > 0
    return float(np.sum(p[keep] * (np.log(p[keep]) - np.atleast_1d(logq)[keep])))


# --------------------------------------------------------------------------
# MCMC


@dataclass
class SampleSet:
    draws: np.ndarray
    acceptance_rate: float
    ess_per_dim: np.ndarray
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def save(self, path):
        """Raw float64 column-major file plus JSON sidecar."""
        path = Path(path)
        np.asfortranarray(self.draws).T.tofile(path)
        side = {"shape": list(self.draws.shape), "dtype": "float64", "order": "column",
                "seed": self.seed, "acceptance_rate": self.acceptance_rate,
                "ess_per_dim": self.ess_per_dim.tolist(), "diagnostics": self.diagnostics}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2))

    @classmethod
    def load(cls, path):
        path = Path(path)
        side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        n, d = side["shape"]
        draws = np.fromfile(path, dtype=float).reshape(d, n).T.copy()
        return cls(draws, side["acceptance_rate"], np.array(side["ess_per_dim"]), side["seed"],
                   side.get("diagnostics", {}))


def ess(chain) -> float:
    """Effective sample size with Geyer's initial positive sequence."""
    x = np.asarray(chain, dtype=float)
    n = x.size
    x = x - x.mean()
    if n < 4 or not np.any(x):
        return float(n)
    m = 1 << int(np.ceil(np.log2(2 * n)))
    fx = np.fft.rfft(x, m)
    ac = np.fft.irfft(fx * np.conj(fx), m)[:n]
    ac /= ac[0]
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = ac[k] + ac[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(n / max(tau, 1.0 / n))


def mcmc_sample(f, init, n_draws, seed=0, n_adapt=None, thin=1, scale_cov=None) -> SampleSet:
    """Adaptive random-walk Metropolis targeting acceptance 0.234.

    During adaptation the proposal covariance follows the running empirical
    covariance and a Robbins-Monro log-scale; afterwards it is frozen and
    only post-adaptation draws are returned.
    """
    rng = make_rng(seed)
    x = np.array(init, dtype=float)
    d = x.size
    fx = f(x)
    if not np.isfinite(fx):
        raise OracleError("log density not finite at init")
    n_adapt = max(2000, n_draws // 2) if n_adapt is None else n_adapt
    cov = np.eye(d) if scale_cov is None else np.atleast_2d(scale_cov)
    log_s = np.log(2.38 ** 2 / d)
    mean = x.copy()
    emp = cov.copy()
    acc = 0
    for t in range(1, n_adapt + 1):
        L = np.linalg.cholesky(np.exp(log_s) * emp + 1e-12 * np.eye(d))
        y = x + L @ rng.standard_normal(d)
        fy = f(y)
        a = np.exp(min(0.0, fy - fx)) if np.isfinite(fy) else 0.0
        if rng.random() < a:
            x, fx = y, fy
        log_s += (a - 0.234) / t ** 0.6
        gam = 1.0 / (t + 1)
        diff = x - mean
        mean += gam * diff
        emp = (1 - gam) * emp + gam * np.outer(diff, diff)
    L = np.linalg.cholesky(np.exp(log_s) * emp + 1e-12 * np.eye(d))
    total = n_draws * thin
    out = np.empty((n_draws, d))
    z = rng.standard_normal((total, d)) @ L.T
    uu = rng.random(total)
    for t in range(total):
        y = x + z[t]
        fy = f(y)
        if np.isfinite(fy) and np.log(uu[t] + 1e-300) < fy - fx:
            x, fx = y, fy
            acc += 1
        if (t + 1) % thin == 0:
            out[(t + 1) // thin - 1] = x
    rate = acc / total
    if acc == 0:
        raise OracleError("zero acceptance after adaptation")
    es = np.array([ess(out[:, k]) for k in range(d)])
    diag = {"n_adapt": n_adapt, "thin": thin, "proposal_scale": float(np.exp(log_s))}
    if not 0.1 <= rate <= 0.6:
        diag["warning"] = f"acceptance rate {rate:.3f} outside [0.1, 0.6]"
        warnings.warn(diag["warning"])
    if es.min() < 100:
        diag["ess_warning"] = f"min ESS {es.min():.1f} < 100"
    return SampleSet(out, float(rate), es, int(seed), diag)


# --------------------------------------------------------------------------
# elliptic-set distances


def gaussian_radius_sample(Sigma, Q, n, seed) -> np.ndarray:
    """Sorted draws of ``|Q gamma|`` with ``gamma ~ N(0, Sigma)``."""
    Sigma = np.atleast_2d(Sigma)
    Q = np.atleast_2d(Q)
    M = Q @ Sigma @ Q.T
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    w = np.clip(w, 0, None)
    z = make_rng(seed).standard_normal((int(n), w.size))
    return np.sort(np.sqrt(z ** 2 @ w))


def empirical_tv_elliptic(source, Q, center, Sigma, seed=0, n_gauss=None, weights=None) -> float:
    """sup_r |P(|Q(X - c)| <= r) - P(|Q gamma| <= r)|.

    ``source`` is a :class:`GridPosterior`, a :class:`SampleSet` or an array
    of draws.  The Gaussian side uses ten times the sample count (at least
    1e5 draws for grids).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if isinstance(source, GridPosterior):
        P = source.points()
        w = source.cell_mass.ravel()
        n_ref = n_gauss or 10 ** 6
    else:
        P = source.draws if isinstance(source, SampleSet) else np.atleast_2d(source)
        w = np.full(P.shape[0], 1.0 / P.shape[0]) if weights is None else np.asarray(weights)
        n_ref = n_gauss or 10 * P.shape[0]
    r = np.linalg.norm((P - center) @ Q.T, axis=1)
    order = np.argsort(r, kind="stable")
    r, w = r[order], w[order]
    g_sorted = gaussian_radius_sample(Sigma, Q, n_ref, seed)
    if isinstance(source, GridPosterior) or weights is not None:
        g = np.searchsorted(g_sorted, r, side="right") / g_sorted.size
        return kernels.weighted_cdf_sup(r, w, g)
    return kernels.ecdf_sup_two(r, g_sorted)


def dkw_envelope(n, alpha=0.05) -> float:
    """Dvoretzky-Kiefer-Wolfowitz half-width at level ``alpha``."""
    return float(np.sqrt(np.log(2 / alpha) / (2 * n)))
