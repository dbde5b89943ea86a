"""Annealed SMC and parallel tempering baselines, plus density tempering.

Both baselines work on powers p^(x)^beta of the unnormalized target along an
exponential inverse-temperature ladder; beta = 0 is flat over a working box.
Evaluation counts accrue on the target's own counter, so budget comparisons
against the bandit procedures are direct.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .ksd import WeightedSample
from .targets import TargetDensity

# 0 then sqrt(2)-spaced: 2^-4, 2^-3.5, ..., 2^-0.5, 1
TEMPERATURE_LADDER = (0.0,) + tuple(2.0 ** (-4.0 + 0.5 * k) for k in range(9))


def temper(target: TargetDensity, beta: float, box=None) -> TargetDensity:
    """Tempered density log p^_beta = beta * log p^.

    beta = 0 yields a flat density over the working box (the target's box or
    an explicit one); its evaluations cost nothing.  For beta > 0 the wrapped
    density shares the base target's evaluation counter.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    box = box if box is not None else target.box
    if beta == 0.0:
        if box is None:
            raise ValueError("flat (beta=0) density needs a working box")
        lo, hi = (np.asarray(b, dtype=float) for b in box)

        def logp_fn(X):
            inside = np.all((X >= lo) & (X <= hi), axis=1)
            return np.where(inside, 0.0, -np.inf)

        def grad_fn(X):
            return np.zeros_like(X)

        return TargetDensity(target.dim, logp_fn, grad_fn, box=box,
                             name=f"{target.name}^0")

    base_logp = target._logp_fn
    base_grad = target._grad_fn
    return TargetDensity(
        target.dim,
        lambda X: beta * base_logp(X),
        lambda X: beta * base_grad(X),
        box=box, name=f"{target.name}^{beta:g}", counter=target.evals)


def systematic_resample(weights, rng) -> np.ndarray:
    """Indices of systematic resampling: one uniform offset, stratified comb."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    w = w / w.sum()
    positions = (rng.uniform() + np.arange(n)) / n
    cum = np.cumsum(w)
    cum[-1] = 1.0  # guard against rounding just below the last position
    return np.searchsorted(cum, positions, side="left")


def _mala_move_population(target, X, lp, grad, beta, step, rng, box=None):
    """One vectorized MALA step per particle at inverse temperature beta.

    lp/grad are raw (beta=1) caches; returns updated (X, lp, grad, accepted).
    At beta = 0 the move is a random walk accepted inside the working box,
    with no target evaluations; the returned lp/grad are stale then and the
    caller must refresh them.
    """
    n, d = X.shape
    eps = step
    half = 0.5 * eps * eps
    xi = rng.standard_normal((n, d))
    u = rng.uniform(size=n)
    if beta == 0.0:
        Y = X + eps * xi
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        acc = np.all((Y >= lo) & (Y <= hi), axis=1)
        Xn = np.where(acc[:, None], Y, X)
        return Xn, lp, grad, acc
    drift = half * beta * grad
    Y = X + drift + eps * xi
    lpY, gY = target.logp_grad_batch(Y)
    ok = np.isfinite(lpY)
    fwd = Y - X - drift
    rev = X - Y - half * beta * gY
    with np.errstate(invalid="ignore"):
        log_ratio = np.where(
            ok,
            beta * (lpY - lp)
            - (rev * rev).sum(axis=1) / (2.0 * eps * eps)
            + (fwd * fwd).sum(axis=1) / (2.0 * eps * eps),
            -np.inf)
    acc = np.log(u) < log_ratio
    Xn = np.where(acc[:, None], Y, X)
    lpn = np.where(acc, lpY, lp)
    gn = np.where(acc[:, None], gY, grad)
    return Xn, lpn, gn, acc


def run_smc(target, ladder, population_size, mala_step, rng, init_box=None,
            init_points=None):
    """Annealed SMC: reweight -> systematic resample -> one MALA move per
    ladder stage.

    Particles start uniform over the init box (or at init_points); at each
    transition to a new inverse temperature the population is importance
    reweighted by p^^(delta beta) and resampled, then moved once by MALA at
    the new temperature.  Returns (uniformly weighted population,
    diagnostics dict with per-stage ESS and acceptance).
    """
    ladder = [float(b) for b in ladder]
    if any(b2 <= b1 for b1, b2 in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly increasing")
    P = int(population_size)
    if P < 2:
        raise ValueError("population must be at least 2")
    d = target.dim
    box = init_box if init_box is not None else target.box
    if init_points is not None:
        X = np.array(init_points, dtype=float)
        if X.shape != (P, d):
            raise ValueError("init_points must have shape (population, dim)")
    else:
        if box is None:
            raise ValueError("need an init box or explicit init points")
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        X = rng.uniform(lo, hi, size=(P, d))
    lp = grad = None   # raw log-density / gradient caches
    ess_hist = []
    acc_hist = []
    for stage, beta in enumerate(ladder):
        if stage > 0:
            dbeta = beta - ladder[stage - 1]
            logw = dbeta * lp
            if not np.any(np.isfinite(logw)):
                raise RuntimeError(
                    f"SMC importance weights underflowed at stage {stage} "
                    f"(beta={beta:g}): all particles at zero density")
            logw = logw - logsumexp(logw)
            w = np.exp(logw)
            w = w / w.sum()
            ess_hist.append(float(1.0 / (w ** 2).sum()))
            idx = systematic_resample(w, rng)
            X, lp, grad = X[idx], lp[idx], grad[idx]
        if beta > 0.0 and lp is None:
            lp, grad = target.logp_grad_batch(X)
        X, lp_new, grad_new, acc = _mala_move_population(
            target, X, lp, grad, beta, mala_step, rng, box=box)
        acc_hist.append(float(acc.mean()))
        if beta == 0.0:
            # the flat stage never touched the target; cache raw values now
            lp, grad = target.logp_grad_batch(X)
        else:
            lp, grad = lp_new, grad_new
    diag = {"ess": ess_hist, "accept": acc_hist,
            "evals": target.evals.total}
    return WeightedSample.uniform(X), diag


def run_pt(target, ladder, mala_step, rng, n_samples, init_box=None,
           steps_per_swap: int = 25, max_swap_log: int = 10000):
    """Parallel tempering: one MALA chain per ladder temperature, adjacent
    swap sweeps every steps_per_swap steps; returns the cold chain's draws.

    Swap acceptance for chains at beta_i < beta_j holding raw log densities
    l_i, l_j is min(1, exp((beta_i - beta_j) (l_j - l_i))).  Diagnostics
    record swap attempts (up to max_swap_log) and the cumulative evaluation
    count at each cold draw.
    """
    betas = np.asarray([float(b) for b in ladder])
    K = betas.size
    d = target.dim
    box = init_box if init_box is not None else target.box
    if box is None:
        raise ValueError("need an init box")
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    X = rng.uniform(lo, hi, size=(K, d))
    lp, grad = target.logp_grad_batch(X)
    cold = int(np.argmax(betas))
    out = []
    cold_evals = []
    swap_log = []
    swap_accepts = 0
    swap_attempts = 0
    while len(out) < n_samples:
        for _ in range(steps_per_swap):
            X, lp, grad, _ = _vector_pt_step(target, X, lp, grad, betas,
                                             mala_step, rng, box=(lo, hi))
            out.append(X[cold].copy())
            cold_evals.append(target.evals.total)
            if len(out) >= n_samples:
                break
        # adjacent-pair sweep in fixed order
        for k in range(K - 1):
            delta = (betas[k] - betas[k + 1]) * (lp[k + 1] - lp[k])
            u = rng.uniform()
            accept = np.log(u) < delta
            swap_attempts += 1
            if len(swap_log) < max_swap_log:
                swap_log.append((k, float(lp[k]), float(lp[k + 1]),
                                 float(delta), float(u), bool(accept)))
            if accept:
                swap_accepts += 1
                X[[k, k + 1]] = X[[k + 1, k]]
                lp[[k, k + 1]] = lp[[k + 1, k]]
                grad[[k, k + 1]] = grad[[k + 1, k]]
    samples = np.asarray(out[:n_samples])
    diag = {"swap_log": swap_log, "swap_rate": swap_accepts / max(swap_attempts, 1),
            "cold_evals": np.asarray(cold_evals[:n_samples]),
            "evals": target.evals.total}
    return WeightedSample.uniform(samples), diag


def _vector_pt_step(target, X, lp, grad, betas, step, rng, box=None):
    """One MALA step for all K tempered chains at once (K proposals, one
    batched target call).  A beta = 0 row is a box-confined random walk; its
    raw lp/grad cache is still refreshed because swap moves need it."""
    K, d = X.shape
    eps = step
    half = 0.5 * eps * eps
    xi = rng.standard_normal((K, d))
    u = rng.uniform(size=K)
    drift = half * betas[:, None] * grad
    drift[betas == 0.0] = 0.0  # immune to a non-finite cached gradient
    Y = X + drift + eps * xi
    lpY, gY = target.logp_grad_batch(Y)
    ok = np.isfinite(lpY)
    fwd = Y - X - drift
    rev = X - Y - half * betas[:, None] * gY
    with np.errstate(invalid="ignore"):
        log_ratio = np.where(
            ok,
            betas * (lpY - lp)
            - (rev * rev).sum(axis=1) / (2.0 * eps * eps)
            + (fwd * fwd).sum(axis=1) / (2.0 * eps * eps),
            -np.inf)
    flat = betas == 0.0
    if flat.any():
        if box is None:
            raise ValueError("a beta=0 rung needs a working box")
        lo, hi = box
        inside = np.all((Y >= lo) & (Y <= hi), axis=1)
        log_ratio = np.where(flat, np.where(inside & ok, 0.0, -np.inf), log_ratio)
    acc = np.log(u) < log_ratio
    Xn = np.where(acc[:, None], Y, X)
    lpn = np.where(acc, lpY, lp)
    gn = np.where(acc[:, None], gY, grad)
    return Xn, lpn, gn, acc
