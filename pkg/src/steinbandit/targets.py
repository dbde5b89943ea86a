"""Unnormalized target densities with analytic gradients.

Every target is wrapped in a :class:`TargetDensity`, which counts how many
log-density and gradient evaluations have been made.  Those counts are the
runtime proxy used throughout the benchmarks: a random-walk step costs one
density call, a Langevin step costs a density and a gradient call, and so on.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


class EvalCounter:
    """Thread-safe counter for density and gradient evaluations."""

    __slots__ = ("_lock", "_density", "_grad")

    def __init__(self):
        self._lock = threading.Lock()
        self._density = 0
        self._grad = 0

    def add(self, density: int = 0, grad: int = 0) -> None:
        with self._lock:
            self._density += int(density)
            self._grad += int(grad)

    @property
    def density_calls(self) -> int:
        return self._density

    @property
    def grad_calls(self) -> int:
        return self._grad

    @property
    def total(self) -> int:
        """Combined density + gradient call count (the budget proxy)."""
        return self._density + self._grad


class TargetDensity:
    """An unnormalized log-density log p^(x) with analytic score function.

    Parameters
    ----------
    dim : int
        Dimension of the sample space.
    logp_fn : callable
        Maps an (n, dim) array to an (n,) array of log-density values.
        May return -inf outside the support.
    grad_fn : callable
        Maps an (n, dim) array to an (n, dim) array of gradients of the
        log-density (the score function).  Must return finite values inside
        the support; outside it may return zeros.
    mean_truth : array or None
        Known mean of the normalized density, when available, used for
        mean-squared-error reporting.
    box : pair of arrays or None
        Optional support box (lo, hi); informational, used by callers to
        draw initial positions and by tempered variants.
    """

    def __init__(self, dim, logp_fn, grad_fn, mean_truth=None, box=None,
                 name="target", counter=None):
        self.dim = int(dim)
        self._logp_fn = logp_fn
        self._grad_fn = grad_fn
        self.mean_truth = None if mean_truth is None else np.asarray(mean_truth, dtype=float)
        self.box = None
        if box is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in box)
            lo = np.broadcast_to(lo, (self.dim,)).copy()
            hi = np.broadcast_to(hi, (self.dim,)).copy()
            if np.any(hi <= lo):
                raise ValueError("box upper bounds must exceed lower bounds")
            self.box = (lo, hi)
        self.name = name
        self.evals = counter if counter is not None else EvalCounter()

    # -- batched interface (preferred; one counter hit per point) --

    def logp_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {X.shape[1]}")
        self.evals.add(density=X.shape[0])
        return np.asarray(self._logp_fn(X), dtype=float)

    def grad_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {X.shape[1]}")
        self.evals.add(grad=X.shape[0])
        return np.asarray(self._grad_fn(X), dtype=float)

    def logp_grad_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.evals.add(density=X.shape[0], grad=X.shape[0])
        return (np.asarray(self._logp_fn(X), dtype=float),
                np.asarray(self._grad_fn(X), dtype=float))

    # -- scalar convenience --

    def logp(self, x) -> float:
        return float(self.logp_batch(np.asarray(x, dtype=float)[None, :])[0])

    def grad(self, x) -> np.ndarray:
        return self.grad_batch(np.asarray(x, dtype=float)[None, :])[0]

    def logp_grad(self, x):
        lp, g = self.logp_grad_batch(np.asarray(x, dtype=float)[None, :])
        return float(lp[0]), g[0]

    def in_box(self, x) -> bool:
        if self.box is None:
            return True
        lo, hi = self.box
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= lo) and np.all(x <= hi))


# ---------------------------------------------------------------------------
# Gaussian mixtures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Isotropic Gaussian mixture with component masses ``betas``.

    The unnormalized density is

        p^(x) = sum_k  beta_k * sigma_k^(-d/2) * exp(-||x - mu_k||^2 / (2 sigma_k))

    i.e. each component is a normalized N(mu_k, sigma_k I) shape rescaled by a
    common factor (2 pi)^(d/2), so the mass of component k is proportional to
    beta_k and a single component with beta=1, sigma=1 has log p^(mu) = 0.
    ``sigmas`` are component variances, not standard deviations.
    """

    betas: tuple
    means: tuple
    sigmas: tuple

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        means = np.asarray(self.means, dtype=float)
        sigmas = np.asarray(self.sigmas, dtype=float)
        if means.ndim != 2:
            raise ValueError("means must be a (K, d) array")
        K = means.shape[0]
        if betas.shape != (K,) or sigmas.shape != (K,):
            raise ValueError("betas, means and sigmas must agree on the number of components")
        if K < 1:
            raise ValueError("need at least one component")
        if np.any(betas <= 0):
            raise ValueError("component masses must be positive")
        if np.any(sigmas <= 0):
            raise ValueError("component variances must be positive")
        object.__setattr__(self, "betas", tuple(float(b) for b in betas))
        object.__setattr__(self, "means", tuple(tuple(float(v) for v in m) for m in means))
        object.__setattr__(self, "sigmas", tuple(float(s) for s in sigmas))

    @property
    def dim(self) -> int:
        return len(self.means[0])

    @property
    def n_components(self) -> int:
        return len(self.betas)

    def mean(self) -> np.ndarray:
        b = np.asarray(self.betas)
        m = np.asarray(self.means)
        return (b[:, None] * m).sum(axis=0) / b.sum()

    def component_weights(self) -> np.ndarray:
        b = np.asarray(self.betas)
        return b / b.sum()


def make_gaussian_mixture(spec: GaussianMixtureSpec) -> TargetDensity:
    """Build a TargetDensity for an isotropic Gaussian mixture."""
    betas = np.asarray(spec.betas, dtype=float)
    means = np.asarray(spec.means, dtype=float)
    sigmas = np.asarray(spec.sigmas, dtype=float)
    d = means.shape[1]
    log_coef = np.log(betas) - 0.5 * d * np.log(sigmas)  # (K,)

    def component_logs(X):
        diff = X[:, None, :] - means[None, :, :]          # (n, K, d)
        sq = np.einsum("nkd,nkd->nk", diff, diff)
        return log_coef[None, :] - sq / (2.0 * sigmas[None, :]), diff

    def logp_fn(X):
        logs, _ = component_logs(X)
        return logsumexp(logs, axis=1)

    def grad_fn(X):
        logs, diff = component_logs(X)
        r = np.exp(logs - logsumexp(logs, axis=1, keepdims=True))  # responsibilities
        return -np.einsum("nk,nkd->nd", r / sigmas[None, :], diff)

    return TargetDensity(d, logp_fn, grad_fn, mean_truth=spec.mean(),
                         name=f"mixture{spec.n_components}d{d}")


def make_gaussian(dim: int, mean=None, var: float = 1.0) -> TargetDensity:
    """Isotropic Gaussian target (a one-component mixture)."""
    mu = np.zeros(dim) if mean is None else np.asarray(mean, dtype=float)
    spec = GaussianMixtureSpec(betas=(1.0,), means=(tuple(mu),), sigmas=(float(var),))
    t = make_gaussian_mixture(spec)
    t.name = f"gauss{dim}d"
    return t


def make_diagonal_gaussian(mean, variances) -> TargetDensity:
    """Axis-aligned Gaussian with per-coordinate variances."""
    mu = np.asarray(mean, dtype=float)
    v = np.asarray(variances, dtype=float)
    if mu.shape != v.shape or mu.ndim != 1:
        raise ValueError("mean and variances must be 1-d arrays of equal length")
    if np.any(v <= 0):
        raise ValueError("variances must be positive")
    d = mu.size

    def logp_fn(X):
        z = (X - mu[None, :])
        return -0.5 * np.einsum("nd,d->n", z * z, 1.0 / v)

    def grad_fn(X):
        return -(X - mu[None, :]) / v[None, :]

    return TargetDensity(d, logp_fn, grad_fn, mean_truth=mu.copy(), name=f"diaggauss{d}d")


def random_mixture_spec(n_modes, dim, rng, mode_box=5.0, var_range=(0.2, 1.0),
                        weight_range=(0.3, 1.0), min_mode_distance=0.0,
                        max_tries=1000) -> GaussianMixtureSpec:
    """Draw a random mixture: means uniform in [-mode_box, mode_box]^dim,
    variances and raw masses uniform in the given ranges.

    If min_mode_distance > 0 the means are redrawn until every pair of modes
    is at least that far apart, so the modes are genuinely separated.
    """
    for _ in range(max_tries):
        means = rng.uniform(-mode_box, mode_box, size=(n_modes, dim))
        if n_modes == 1 or min_mode_distance <= 0:
            break
        diffs = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(axis=-1))
        dist[np.diag_indices(n_modes)] = np.inf
        if dist.min() >= min_mode_distance:
            break
    else:
        raise RuntimeError("could not place modes with the requested separation")
    sigmas = rng.uniform(var_range[0], var_range[1], size=n_modes)
    betas = rng.uniform(weight_range[0], weight_range[1], size=n_modes)
    betas = betas / betas.sum()
    return GaussianMixtureSpec(betas=tuple(betas),
                               means=tuple(tuple(m) for m in means),
                               sigmas=tuple(sigmas))


# ---------------------------------------------------------------------------
# Sensor self-localization posterior
# ---------------------------------------------------------------------------

@dataclass
class SensorModel:
    """A simulated wireless sensor network with range observations.

    Nodes 0..n_sensors-1 are the unknown sensors; nodes n_sensors.. are the
    anchors at known positions.  For each pair of nodes (at least one of them
    a sensor) a link is observed with probability exp(-0.5 ||dist||^2 / R^2);
    observed links carry a noisy distance measurement d = dist + sigma * xi.
    """

    n_sensors: int
    anchors: np.ndarray            # (A, 2)
    side: float                    # L: sensors live in [-L/2, L/2]^2
    radius: float                  # R
    noise: float                   # sigma
    pair_t: np.ndarray             # (P,) int node index, always a sensor
    pair_u: np.ndarray             # (P,) int node index, sensor or anchor
    observed: np.ndarray           # (P,) bool
    distances: np.ndarray          # (P,) float, nan where not observed
    truth: np.ndarray = field(default=None)  # (n_sensors, 2) or None

    @property
    def dim(self) -> int:
        return 2 * self.n_sensors


def simulate_sensor_world(n_sensors, anchors, side, radius, noise, rng) -> SensorModel:
    """Draw sensor positions uniformly in the box and simulate link observations."""
    anchors = np.asarray(anchors, dtype=float)
    truth = rng.uniform(-side / 2.0, side / 2.0, size=(n_sensors, 2))
    nodes = np.vstack([truth, anchors])
    n_nodes = nodes.shape[0]
    pair_t, pair_u = [], []
    for t in range(n_sensors):           # at least one endpoint is a sensor
        for u in range(t + 1, n_nodes):
            pair_t.append(t)
            pair_u.append(u)
    pair_t = np.asarray(pair_t, dtype=int)
    pair_u = np.asarray(pair_u, dtype=int)
    d_true = np.linalg.norm(nodes[pair_t] - nodes[pair_u], axis=1)
    p_obs = np.exp(-0.5 * d_true ** 2 / radius ** 2)
    observed = rng.uniform(size=len(pair_t)) < p_obs
    distances = np.full(len(pair_t), np.nan)
    distances[observed] = d_true[observed] + noise * rng.standard_normal(observed.sum())
    return SensorModel(n_sensors=n_sensors, anchors=anchors, side=side,
                       radius=radius, noise=noise, pair_t=pair_t, pair_u=pair_u,
                       observed=observed, distances=distances, truth=truth)


def make_sensor_posterior(model: SensorModel) -> TargetDensity:
    """Posterior over the flattened sensor positions (dim = 2 * n_sensors).

    Per pair, observed links contribute
        log P_o(x_t, x_u) + log N(d_tu; ||x_t - x_u||, sigma^2)
    and unobserved links contribute log(1 - P_o(x_t, x_u)), with
    P_o = exp(-0.5 ||x_t - x_u||^2 / R^2).  A uniform prior confines every
    sensor to the box [-L/2, L/2]^2: the log-density is -inf outside.
    """
    N = model.n_sensors
    A = model.anchors.shape[0]
    R2 = model.radius ** 2
    sig2 = model.noise ** 2
    half = model.side / 2.0
    obs = model.observed
    t_idx, u_idx = model.pair_t, model.pair_u
    d_obs = model.distances[obs]
    log_norm = -0.5 * np.log(2.0 * np.pi * sig2)
    u_is_sensor = u_idx < N
    anchor_pos = model.anchors  # (A, 2)

    def node_positions(X):
        n = X.shape[0]
        sensors = X.reshape(n, N, 2)
        anchors = np.broadcast_to(anchor_pos[None, :, :], (n, A, 2))
        return np.concatenate([sensors, anchors], axis=1)  # (n, N+A, 2)

    def pair_geometry(X):
        pos = node_positions(X)
        diff = pos[:, t_idx, :] - pos[:, u_idx, :]     # (n, P, 2)
        r = np.sqrt(np.einsum("npd,npd->np", diff, diff))
        return diff, r

    def logp_fn(X):
        n = X.shape[0]
        sensors = X.reshape(n, N, 2)
        inside = np.all(np.abs(sensors) <= half, axis=(1, 2))
        out = np.full(n, -np.inf)
        if not inside.any():
            return out
        diff, r = pair_geometry(X[inside])
        z = 0.5 * r ** 2 / R2                          # (m, P)
        lp = -z[:, obs].sum(axis=1)                    # observed: log P_o
        resid = d_obs[None, :] - r[:, obs]
        lp += (-0.5 * resid ** 2 / sig2 + log_norm).sum(axis=1)
        # unobserved: log(1 - exp(-z)), stable via expm1
        zu = np.maximum(z[:, ~obs], 1e-300)
        lp += np.log(-np.expm1(-zu)).sum(axis=1)
        out[inside] = lp
        return out

    def grad_fn(X):
        n = X.shape[0]
        sensors = X.reshape(n, N, 2)
        inside = np.all(np.abs(sensors) <= half, axis=(1, 2))
        G = np.zeros((n, N, 2))
        if inside.any():
            Xi = X[inside]
            diff, r = pair_geometry(Xi)                # (m, P, 2), (m, P)
            m = Xi.shape[0]
            r_safe = np.maximum(r, 1e-12)
            coef = np.zeros_like(r)
            # observed: d/dx_t of (-z + logN) = -diff/R2 + (d - r)/sig2 * diff/r
            coef[:, obs] = -1.0 / R2 + (d_obs[None, :] - r[:, obs]) / (sig2 * r_safe[:, obs])
            # unobserved: d/dx_t log(1-exp(-z)) = (diff/R2) * exp(-z)/(1-exp(-z))
            zu = np.maximum(0.5 * r[:, ~obs] ** 2 / R2, 1e-300)
            coef[:, ~obs] = (1.0 / R2) / np.expm1(zu)
            contrib = coef[:, :, None] * diff          # (m, P, 2) gradient wrt x_t
            Gi = np.zeros((m, N, 2))
            np.add.at(Gi, (slice(None), t_idx), contrib)
            sens_u = u_idx[u_is_sensor]
            np.add.at(Gi, (slice(None), sens_u), -contrib[:, u_is_sensor])
            G[inside] = Gi
        return G.reshape(n, 2 * N)

    box_lo = np.full(2 * N, -half)
    box_hi = np.full(2 * N, half)
    return TargetDensity(2 * N, logp_fn, grad_fn, box=(box_lo, box_hi),
                         name=f"sensor{N}")


def default_anchor_positions(side: float) -> np.ndarray:
    """Three anchors spread over the box: two low corners and top middle."""
    q = side / 4.0
    return np.array([[-q, -q], [q, -q], [0.0, q]])


def localization_error(sample_points, weights, truth) -> float:
    """Mean Euclidean error between weighted posterior-mean positions and truth."""
    w = np.asarray(weights, dtype=float)
    est = (w[:, None] * sample_points).sum(axis=0) / w.sum()
    est = est.reshape(-1, 2)
    return float(np.linalg.norm(est - truth, axis=1).mean())
