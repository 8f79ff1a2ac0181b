"""Two-dimensional Gaussian mixtures fitted by expectation-maximization.

Small, dependency-free EM tailored to (theta, phi) angle samples: full
2x2 covariances with an eigenvalue floor, k-means++ seeding from a
caller-supplied RNG, several restarts, and model selection over
component counts by the Bayesian information criterion. The per-
iteration log-likelihood trace is retained so callers can check the EM
monotonicity guarantee.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError

COVARIANCE_FLOOR = 1e-6   # rad^2, eigenvalue floor
EM_TOL = 1e-6             # stop when the log-likelihood gain drops below this
EM_MAX_ITER = 200
N_RESTARTS = 4

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class GaussianMixture2D:
    """Weights, means (k, 2) and covariances (k, 2, 2) of a 2-D mixture."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def validate(self) -> "GaussianMixture2D":
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        k = len(self.weights)
        self.means = np.asarray(self.means, dtype=float).reshape(k, 2)
        self.covariances = np.asarray(self.covariances, dtype=float).reshape(k, 2, 2)
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise InvalidInputError("mixture weights must be positive and sum to 1")
        for cov in self.covariances:
            if abs(cov[0, 1] - cov[1, 0]) > 1e-12:
                raise InvalidInputError("covariances must be symmetric")
            if np.linalg.eigvalsh(cov)[0] < 0.5 * COVARIANCE_FLOOR:
                raise InvalidInputError("covariance below the eigenvalue floor")
        return self

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def log_component_densities(self, points) -> np.ndarray:
        """log N(x | mean_k, cov_k) for every point/component pair, (n, k)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((len(pts), self.n_components))
        for k in range(self.n_components):
            c = self.covariances[k]
            det = c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0]
            inv = np.array([[c[1, 1], -c[0, 1]], [-c[1, 0], c[0, 0]]]) / det
            d = pts - self.means[k]
            maha = (d @ inv * d).sum(axis=1)
            out[:, k] = -0.5 * (maha + math.log(det)) - _LOG_2PI
        return out

    def pdf(self, points) -> np.ndarray:
        """Mixture density at each point."""
        lw = np.log(self.weights)
        dens = np.exp(logsumexp(self.log_component_densities(points) + lw, axis=1))
        return dens

    def log_likelihood(self, points) -> float:
        lw = np.log(self.weights)
        return float(logsumexp(self.log_component_densities(points) + lw, axis=1).sum())

    def peak_density(self) -> float:
        """Maximum of the mixture density over the component means."""
        return float(self.pdf(self.means).max())

    def bic(self, points) -> float:
        """-2 log L + p log n with p = 6k - 1 free parameters."""
        n = len(np.atleast_2d(points))
        p = 6 * self.n_components - 1
        return -2.0 * self.log_likelihood(points) + p * math.log(n)


@dataclass
class EMResult:
    mixture: GaussianMixture2D
    log_likelihoods: list          # winning restart, one entry per iteration
    converged: bool
    n_iter: int
    all_traces: list = field(default_factory=list)

    @property
    def final_log_likelihood(self) -> float:
        return self.log_likelihoods[-1]


def _kmeanspp_init(points, k, rng):
    n = len(points)
    centers = np.empty((k, 2))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = points[rng.integers(n)]
        else:
            centers[j] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _floor_covariance(cov):
    w, v = np.linalg.eigh(cov)
    w = np.maximum(w, COVARIANCE_FLOOR)
    return (v * w) @ v.T


def _run_em(points, k, rng, max_iter, tol):
    n = len(points)
    means = _kmeanspp_init(points, k, rng)
    base_cov = _floor_covariance(np.cov(points.T) if n > 1 else np.eye(2))
    covs = np.repeat(base_cov[None, :, :], k, axis=0)
    weights = np.full(k, 1.0 / k)
    mix = GaussianMixture2D(weights, means, covs)

    trace = []
    converged = False
    for _ in range(max_iter):
        log_dens = mix.log_component_densities(points) + np.log(mix.weights)
        norm = logsumexp(log_dens, axis=1)
        trace.append(float(norm.sum()))
        resp = np.exp(log_dens - norm[:, None])

        nk = resp.sum(axis=0) + 10.0 * np.finfo(float).eps
        weights = nk / nk.sum()
        means = (resp.T @ points) / nk[:, None]
        covs = np.empty((k, 2, 2))
        for j in range(k):
            d = points - means[j]
            covs[j] = _floor_covariance((resp[:, j][:, None] * d).T @ d / nk[j])
        mix = GaussianMixture2D(weights, means, covs)

        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            converged = True
            break
    trace.append(mix.log_likelihood(points))
    return mix, trace, converged


def fit_em(points, n_components: int, seed=0, max_iter: int = EM_MAX_ITER,
           tol: float = EM_TOL, n_init: int = N_RESTARTS) -> EMResult:
    """Fit a mixture with EM; several seeded restarts, best likelihood wins."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != 2:
        raise InvalidInputError("expected (n, 2) angle samples")
    if n_components < 1:
        raise InvalidInputError("n_components must be >= 1")
    if len(points) < n_components:
        raise InvalidInputError(
            f"{len(points)} samples cannot support {n_components} components")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    best = None
    traces = []
    for _ in range(max(1, n_init)):
        mix, trace, converged = _run_em(points, n_components, rng, max_iter, tol)
        traces.append(trace)
        if best is None or trace[-1] > best[1][-1]:
            best = (mix, trace, converged)
    mix, trace, converged = best
    return EMResult(mixture=mix.validate(), log_likelihoods=trace,
                    converged=converged, n_iter=len(trace) - 1, all_traces=traces)


def fit_best_bic(points, max_components: int, seed=0, return_results: bool = False,
                 **kwargs):
    """Fit 1..max_components and pick the lowest BIC.

    Returns (winning EMResult, bic table as [(k, bic), ...]); with
    return_results also the per-count EMResult dict. Ties keep the
    smaller component count. Deterministic for a fixed seed.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if max_components < 1:
        raise InvalidInputError("max_components must be >= 1")
    if isinstance(seed, np.random.Generator):
        children = seed.spawn(max_components)
    else:
        children = [np.random.default_rng(s)
                    for s in np.random.SeedSequence(seed).spawn(max_components)]
    table = []
    results = {}
    best = None
    for k in range(1, max_components + 1):
        if k > len(points):
            break
        result = fit_em(points, k, seed=children[k - 1], **kwargs)
        results[k] = result
        score = result.mixture.bic(points)
        table.append((k, score))
        if best is None or score < best[1] - 1e-12:
            best = (result, score)
    if return_results:
        return best[0], table, results
    return best[0], table
