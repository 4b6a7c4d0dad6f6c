"""Multivariate Student-t model: graph log-density, sampling and EM fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .graph_ops import laplacian

NU_GRID = (2.5, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0)
RANK_TOL = 1e-8


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class StudentTParams:
    mu: np.ndarray
    sigma: np.ndarray
    nu: float
    loglik: float = float("nan")
    # log-likelihood per EM iteration at the selected nu
    trace: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.nu <= 2:
            raise ValueError("nu must exceed 2 for a finite covariance")
        if self.sigma.shape != (self.mu.size, self.mu.size):
            raise ValueError("sigma must be p x p")
        if not np.allclose(self.sigma, self.sigma.T):
            raise ValueError("sigma must be symmetric")
        if np.linalg.eigvalsh(self.sigma)[0] <= 0:
            raise ValueError("sigma must be positive definite")

    @property
    def p(self) -> int:
        return self.mu.size

    def covariance(self) -> np.ndarray:
        return self.nu / (self.nu - 2) * self.sigma


def pseudo_logdet(L: np.ndarray, rank: int | None = None, tol: float = RANK_TOL) -> float:
    """Log of the generalized determinant: sum of logs of the positive eigenvalues.

    Eigenvalues at or below ``tol * lambda_max`` count as zero.  When ``rank`` is
    given, exactly the ``rank`` largest eigenvalues are used and a ValueError is
    raised if fewer than ``rank`` of them are positive.
    """
    ev = np.linalg.eigvalsh(L)
    top = ev[-1] if ev.size else 0.0
    positive = ev[ev > tol * max(top, 0.0)] if top > 0 else ev[:0]
    if rank is None:
        return float(np.sum(np.log(positive)))
    if positive.size < rank:
        raise ValueError(
            f"Laplacian has {positive.size} positive eigenvalues, expected at least {rank}"
        )
    return float(np.sum(np.log(ev[ev.size - rank:])))


def graph_t_logdensity(x, w, nu: float, rank: int | None = None) -> float:
    """Unnormalized log-density of a signal under the Laplacian Student-t model.

    Returns ``0.5 * logdet*(Lw) - (nu + p)/2 * log(1 + x' Lw x / nu)``.
    """
    if nu <= 2:
        raise ValueError("nu must exceed 2")
    x = np.asarray(x, dtype=float)
    L = laplacian(w)
    p = L.shape[0]
    quad = float(x @ L @ x)
    return 0.5 * pseudo_logdet(L, rank) - 0.5 * (nu + p) * np.log1p(quad / nu)


def chi_square(rng: np.random.Generator, dof: float, size: int) -> np.ndarray:
    """Chi-square draws; sum of squared normals for integer dof, gamma otherwise."""
    if float(dof).is_integer():
        z = rng.standard_normal((size, int(dof)))
        return np.einsum("ij,ij->i", z, z)
    return 2.0 * rng.standard_gamma(dof / 2.0, size)


def sample_student_t(params: StudentTParams, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` i.i.d. samples as columns of a ``p x count`` matrix."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = as_generator(seed)
    p = params.p
    # eigh-based factor tolerates a PSD scatter (used for Laplacian pseudo-inverses)
    ev, U = np.linalg.eigh(params.sigma)
    factor = U * np.sqrt(np.clip(ev, 0, None))
    z = factor @ rng.standard_normal((p, count))
    g = chi_square(rng, params.nu, count) / params.nu
    return params.mu[:, None] + z / np.sqrt(g)[None, :]


def t_loglik(X: np.ndarray, mu: np.ndarray, sigma: np.ndarray, nu: float) -> float:
    """Total log-likelihood of the columns of ``X``."""
    p, T = X.shape
    C = np.linalg.cholesky(sigma)
    R = np.linalg.solve(C, X - mu[:, None])
    delta = np.einsum("ij,ij->j", R, R)
    logdet = 2.0 * np.sum(np.log(np.diag(C)))
    const = gammaln((nu + p) / 2) - gammaln(nu / 2) - 0.5 * p * np.log(nu * np.pi)
    return float(T * (const - 0.5 * logdet) - 0.5 * (nu + p) * np.sum(np.log1p(delta / nu)))


def em_fixed_nu(X: np.ndarray, nu: float, max_iter: int = 500, tol: float = 1e-8):
    """EM for location and scatter at fixed ``nu``.

    Returns ``(mu, sigma, trace)`` where ``trace`` holds the log-likelihood after
    initialization and after each iteration.
    """
    p, T = X.shape
    mu = X.mean(axis=1)
    sigma = np.cov(X, bias=True)
    trace = [t_loglik(X, mu, sigma, nu)]
    for _ in range(max_iter):
        C = np.linalg.cholesky(sigma)
        R = np.linalg.solve(C, X - mu[:, None])
        delta = np.einsum("ij,ij->j", R, R)
        tau = (nu + p) / (nu + delta)
        mu = X @ tau / tau.sum()
        D = X - mu[:, None]
        sigma = (D * tau) @ D.T / T
        sigma = 0.5 * (sigma + sigma.T)
        trace.append(t_loglik(X, mu, sigma, nu))
        if trace[-1] - trace[-2] < tol:
            break
    return mu, sigma, trace


def fit_student_t(X, nu_grid=NU_GRID, max_iter: int = 500, tol: float = 1e-8) -> StudentTParams:
    """Fit a multivariate t to the columns of ``X`` (``p x T``).

    Location and scatter come from EM at every ``nu`` on the grid; the triple with
    the largest log-likelihood wins.
    """
    X = np.asarray(X, dtype=float)
    p, T = X.shape
    if T <= p + 1:
        raise ValueError(f"need more than p + 1 = {p + 1} samples, got {T}")
    scatter_ev = np.linalg.eigvalsh(np.cov(X, bias=True))
    if scatter_ev[0] <= 1e-12 * max(scatter_ev[-1], 1e-300):
        raise ValueError("sample scatter is rank deficient")
    best = None
    for nu in nu_grid:
        mu, sigma, trace = em_fixed_nu(X, nu, max_iter, tol)
        if best is None or trace[-1] > best.loglik:
            best = StudentTParams(mu, sigma, nu, loglik=trace[-1], trace=trace)
    return best
