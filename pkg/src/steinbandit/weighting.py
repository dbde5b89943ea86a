"""Region-mass estimation from samples of an unnormalized density.

The central quantity is the log-mass surrogate

    beta(X^A) = R_alpha(X^A) - (1/(1-alpha)) * log B_alpha(X^A)

where R_alpha is a kNN-graph Renyi entropy estimate of the region-conditional
sample and B_alpha is the empirical mean of p^(x)^(alpha-1).  Adding a
constant to log p^ shifts every beta equally, so the softmax weights are
invariant to the unknown normalization constant.
"""

from __future__ import annotations

import json
import os
import threading
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial import cKDTree
from scipy.special import logsumexp


@dataclass(frozen=True)
class GammaConstant:
    """Calibrated limit of L_{p,k}(uniform cube)/n^(1-p/d)."""

    d: int
    k_nn: int
    alpha: float
    p_exponent: float
    value: float
    n: int
    repeats: int
    stderr: float


@dataclass
class RegionWeights:
    """Log-mass estimates per region and the softmax simplex over them."""

    betas: np.ndarray
    weights: np.ndarray


def _dedupe_jitter(X):
    """Perturb exact duplicate rows by 1e-9 so kNN queries stay well-defined."""
    uniq, inverse, counts = np.unique(X, axis=0, return_inverse=True,
                                      return_counts=True)
    if counts.max() <= 1:
        return X
    X = X.copy()
    seen = np.zeros(uniq.shape[0], dtype=int)
    for i in range(X.shape[0]):
        g = inverse[i]
        if counts[g] > 1:
            X[i, 0] += 1e-9 * seen[g]
            seen[g] += 1
    return X


def knn_graph_length(points, k_nn: int, p_exponent: float) -> float:
    """Directed kNN edge-length power sum L_{p,k} = sum ||x - x'||^p.

    Each point contributes its k_nn nearest neighbors (ties on distance do
    not change the sum).  Exact duplicates are jittered first.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = X.shape[0]
    if n < k_nn + 1:
        raise ValueError(f"need at least {k_nn + 1} points, got {n}")
    X = _dedupe_jitter(X)
    tree = cKDTree(X)
    dist, _ = tree.query(X, k=k_nn + 1)
    edge = np.sort(dist[:, 1:], axis=1)  # drop self, fix summation order
    return float((edge ** p_exponent).sum())


def calibrate_gamma(d: int, k_nn: int, alpha: float, rng,
                    n: int = 10000, repeats: int = 20) -> GammaConstant:
    """Monte Carlo estimate of gamma = lim L_{p,k}(uniform [0,1]^d)/n^(1-p/d).

    With p = d(1-alpha); the estimator's asymptotic guarantee needs
    p < d-1, so a warning is raised outside that range.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    p = d * (1.0 - alpha)
    if p >= d - 1:
        warnings.warn(f"p = d(1-alpha) = {p:.3f} >= d-1 = {d - 1}; "
                      "the entropy estimator guarantee degrades", stacklevel=2)
    vals = np.empty(repeats)
    for r in range(repeats):
        Y = rng.uniform(size=(n, d))
        vals[r] = knn_graph_length(Y, k_nn, p) / n ** (1.0 - p / d)
    value = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(repeats)) if repeats > 1 else 0.0
    return GammaConstant(d=d, k_nn=k_nn, alpha=float(alpha), p_exponent=p,
                         value=value, n=n, repeats=repeats, stderr=stderr)


class GammaCache:
    """Disk-backed (d, k_nn, alpha) -> GammaConstant cache.

    Calibration draws come from an RNG derived only from the key, so a cache
    miss always produces the same constant: results never depend on whether
    the cache file existed.
    """

    def __init__(self, path=None, preload=None):
        self.path = path
        self._mem = dict(preload) if preload else {}
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            with open(path) as fh:
                for key, rec in json.load(fh).items():
                    self._mem[key] = GammaConstant(**rec)

    @staticmethod
    def _key(d, k_nn, alpha) -> str:
        return f"{d}:{k_nn}:{alpha:.6f}"

    def known(self) -> dict:
        """Snapshot of the cached constants, usable as a preload mapping."""
        with self._lock:
            return dict(self._mem)

    def get(self, d: int, k_nn: int, alpha: float) -> GammaConstant:
        key = self._key(d, k_nn, alpha)
        with self._lock:
            if key in self._mem:
                return self._mem[key]
            rng = np.random.default_rng(
                np.random.SeedSequence([7391, d, k_nn, int(round(alpha * 1e6))]))
            gc = calibrate_gamma(d, k_nn, alpha, rng)
            self._mem[key] = gc
            if self.path is not None:
                with open(self.path, "w") as fh:
                    json.dump({k: vars(v) for k, v in self._mem.items()}, fh,
                              indent=1, sort_keys=True)
            return gc


def renyi_entropy_estimate(points, alpha: float, gamma: GammaConstant) -> float:
    """R_alpha(X) = 1/(1-alpha) * log( L_{p,k} / (gamma * n^(1-p/d)) )."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = X.shape
    if gamma.d != d or abs(gamma.alpha - alpha) > 1e-9:
        raise ValueError("gamma constant was calibrated for different (d, alpha)")
    p = d * (1.0 - alpha)
    L = knn_graph_length(X, gamma.k_nn, p)
    if L <= 0:
        raise ValueError("degenerate sample: zero total edge length")
    return float(np.log(L / (gamma.value * n ** (1.0 - p / d))) / (1.0 - alpha))


def log_region_mass(points, alpha: float, gamma: GammaConstant,
                    target=None, logps=None) -> float:
    """beta(X^A): Renyi entropy minus the empirical p^-moment correction.

    beta = R_alpha - (1/(1-alpha)) * log B,  log B = logsumexp((alpha-1) lp) - log m.
    logps may carry cached log p^ values (chains record them); otherwise the
    target is evaluated, which counts density calls.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if logps is None:
        if target is None:
            raise ValueError("need either a target or cached log-density values")
        logps = target.logp_batch(X)
    logps = np.asarray(logps, dtype=float).ravel()
    if logps.shape[0] != X.shape[0]:
        raise ValueError("one log-density value per point required")
    if not np.all(np.isfinite(logps)):
        raise ValueError("log-density must be finite on every region point")
    m = X.shape[0]
    ent = renyi_entropy_estimate(X, alpha, gamma)
    log_b = logsumexp((alpha - 1.0) * logps) - np.log(m)
    return float(ent - log_b / (1.0 - alpha))


def region_weights(betas) -> RegionWeights:
    """Softmax of the log-mass estimates, computed with log-sum-exp."""
    b = np.asarray(betas, dtype=float).ravel()
    if b.size < 1:
        raise ValueError("need at least one region")
    w = np.exp(b - logsumexp(b))
    w = w / w.sum()
    return RegionWeights(betas=b, weights=w)


def _fit_gaussian(points):
    X = np.atleast_2d(np.asarray(points, dtype=float))
    mu = X.mean(axis=0)
    C = np.cov(X, rowvar=False)
    C = np.atleast_2d(C)
    try:
        chol = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        C = C + 1e-6 * np.eye(C.shape[0])
        chol = np.linalg.cholesky(C)
    return mu, C, chol


def _gaussian_logpdf(Y, mu, chol):
    d = mu.size
    u = solve_triangular(chol, (Y - mu).T, lower=True).T
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (u ** 2).sum(axis=1) - 0.5 * (d * np.log(2.0 * np.pi) + logdet)


def importance_log_mass(points, target, rng, centroids=None, region_id=None,
                        n_draws: int = 4000, max_batches: int = 50):
    """Importance-weighting alternative: log of (c * P(A)).

    Fits a Gaussian Q to the region's points, draws from Q until ``n_draws``
    land inside the region (nearest-centroid membership when centroids are
    given, everything otherwise), and returns

        log Q(A) + log mean_i [ p^(y_i) / q(y_i) ]

    as (log_mass, q_in_region_fraction).  The fraction always lies in [0, 1].
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[0] < 2:
        raise ValueError("need at least 2 points to fit moments")
    mu, _, chol = _fit_gaussian(X)
    accepted = []
    total = 0
    hits = 0
    for _ in range(max_batches):
        Y = mu + rng.standard_normal((n_draws, mu.size)) @ chol.T
        total += n_draws
        if centroids is None:
            inside = np.ones(n_draws, dtype=bool)
        else:
            d2 = ((Y[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
            inside = np.argmin(d2, axis=1) == region_id
        hits += int(inside.sum())
        accepted.append(Y[inside])
        if hits >= n_draws:
            break
    q_frac = hits / total
    Ya = np.concatenate(accepted, axis=0)
    if Ya.shape[0] == 0:
        return -np.inf, q_frac
    log_ratio = target.logp_batch(Ya) - _gaussian_logpdf(Ya, mu, chol)
    log_mean = logsumexp(log_ratio) - np.log(Ya.shape[0])
    return float(np.log(q_frac) + log_mean) if q_frac > 0 else -np.inf, q_frac


def gaussian_fit_log_mass(points, logps) -> float:
    """Gaussian-approximation weight: log-mass of a mode under a local
    Gaussian fit.

    Approximates p^ near the mode by a * N(mu, C): the scale a is estimated
    in log space by averaging log p^(x) + (1/2)(x-mu)'C^{-1}(x-mu) over the
    points, and the returned log-mass is log a plus the Gaussian
    normalization log((2 pi)^{d/2} |C|^{1/2}).
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    logps = np.asarray(logps, dtype=float).ravel()
    mu, _, chol = _fit_gaussian(X)
    u = solve_triangular(chol, (X - mu).T, lower=True).T
    quad = 0.5 * (u ** 2).sum(axis=1)
    log_a = float(np.mean(logps + quad))
    d = mu.size
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return log_a + 0.5 * (d * np.log(2.0 * np.pi) + logdet)
