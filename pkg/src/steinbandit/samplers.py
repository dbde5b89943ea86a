"""MCMC chains: random-walk Metropolis, Langevin (MALA) and the no-U-turn
sampler, each emitting samples in fixed-size batches.

Chains cache the log-density (and, where available, the gradient) of every
emitted point, so that downstream discrepancy and reweighting computations
can reuse them instead of paying for fresh target evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Batch:
    """One emitted block of draws from a single chain."""

    sampler_id: int
    points: np.ndarray                 # (n_b, d)
    logps: np.ndarray                  # (n_b,)
    scores: np.ndarray | None = None   # (n_b, d) gradients, when the sampler has them

    @property
    def size(self) -> int:
        return self.points.shape[0]


class Chain:
    """Common bookkeeping for a single-site MCMC chain bound to a target."""

    kind = "base"

    def __init__(self, target, x0, rng, sampler_id: int = 0):
        self.target = target
        self.rng = rng
        self.sampler_id = int(sampler_id)
        self._x = np.asarray(x0, dtype=float).copy()
        if self._x.shape != (target.dim,):
            raise ValueError(f"x0 must have shape ({target.dim},)")
        self._batches: list[Batch] = []
        self.accepted = 0
        self.proposed = 0

    # -- subclass hook --
    def _run(self, n_b: int) -> Batch:
        raise NotImplementedError

    def batch(self, n_b: int) -> Batch:
        if n_b < 1:
            raise ValueError("batch size must be at least 1")
        b = self._run(int(n_b))
        self._batches.append(b)
        return b

    @property
    def n_drawn(self) -> int:
        return sum(b.size for b in self._batches)

    @property
    def batches(self) -> list:
        return self._batches

    def history_points(self) -> np.ndarray:
        if not self._batches:
            return np.empty((0, self.target.dim))
        return np.concatenate([b.points for b in self._batches], axis=0)

    def history_logps(self) -> np.ndarray:
        if not self._batches:
            return np.empty((0,))
        return np.concatenate([b.logps for b in self._batches], axis=0)

    def history_scores(self):
        """Concatenated cached gradients, or None if any batch lacks them."""
        if not self._batches or any(b.scores is None for b in self._batches):
            return None
        return np.concatenate([b.scores for b in self._batches], axis=0)

    @property
    def accept_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    @property
    def position(self) -> np.ndarray:
        return self._x.copy()


class MHChain(Chain):
    """Random-walk Metropolis with an isotropic Gaussian proposal."""

    kind = "mh"

    def __init__(self, target, x0, rng, step_size: float, sampler_id: int = 0):
        super().__init__(target, x0, rng, sampler_id)
        if step_size <= 0:
            raise ValueError("step size must be positive")
        self.step_size = float(step_size)
        self._lp = target.logp(self._x)
        if not np.isfinite(self._lp):
            raise ValueError("initial position must have finite log-density")

    def _run(self, n_b: int) -> Batch:
        d = self.target.dim
        pts = np.empty((n_b, d))
        lps = np.empty(n_b)
        for i in range(n_b):
            prop = self._x + self.step_size * self.rng.standard_normal(d)
            lp_prop = self.target.logp(prop)
            self.proposed += 1
            if np.log(self.rng.uniform()) < lp_prop - self._lp:
                self._x = prop
                self._lp = lp_prop
                self.accepted += 1
            pts[i] = self._x
            lps[i] = self._lp
        return Batch(self.sampler_id, pts, lps)


class MALAChain(Chain):
    """Metropolis-adjusted Langevin: gradient drift plus exact MH correction."""

    kind = "mala"

    def __init__(self, target, x0, rng, step_size: float, sampler_id: int = 0):
        super().__init__(target, x0, rng, sampler_id)
        if step_size <= 0:
            raise ValueError("step size must be positive")
        self.step_size = float(step_size)
        self.fallbacks = 0  # steps where a bad gradient forced a plain MH move
        self._lp, self._g = target.logp_grad(self._x)
        if not np.isfinite(self._lp):
            raise ValueError("initial position must have finite log-density")

    def _run(self, n_b: int) -> Batch:
        d = self.target.dim
        eps = self.step_size
        half = 0.5 * eps * eps
        pts = np.empty((n_b, d))
        lps = np.empty(n_b)
        grads = np.empty((n_b, d))
        for i in range(n_b):
            xi = self.rng.standard_normal(d)
            self.proposed += 1
            if np.all(np.isfinite(self._g)):
                prop = self._x + half * self._g + eps * xi
                lp_prop, g_prop = self.target.logp_grad(prop)
                fwd = prop - self._x - half * self._g
                rev = self._x - prop - half * g_prop
                log_ratio = (lp_prop - self._lp
                             - (rev @ rev) / (2.0 * eps * eps)
                             + (fwd @ fwd) / (2.0 * eps * eps))
            else:
                # degenerate gradient: plain symmetric random-walk move
                self.fallbacks += 1
                prop = self._x + eps * xi
                lp_prop, g_prop = self.target.logp_grad(prop)
                log_ratio = lp_prop - self._lp
            if np.log(self.rng.uniform()) < log_ratio:
                self._x, self._lp, self._g = prop, lp_prop, g_prop
                self.accepted += 1
            pts[i] = self._x
            lps[i] = self._lp
            grads[i] = self._g
        return Batch(self.sampler_id, pts, lps, grads)


def leapfrog(target, x, r, g, eps):
    """One leapfrog step; returns (x', r', logp', grad')."""
    r_half = r + 0.5 * eps * g
    x1 = x + eps * r_half
    lp1, g1 = target.logp_grad(x1)
    r1 = r_half + 0.5 * eps * g1
    return x1, r1, lp1, g1


def find_reasonable_step_size(target, x, lp, g, rng) -> float:
    """Crude initializer: double or halve eps until the one-step acceptance
    probability crosses 1/2."""
    eps = 1.0
    d = x.size
    r0 = rng.standard_normal(d)
    joint0 = lp - 0.5 * (r0 @ r0)
    _, r1, lp1, _ = leapfrog(target, x, r0, g, eps)
    joint1 = lp1 - 0.5 * (r1 @ r1) if np.isfinite(lp1) else -np.inf
    log_ratio = joint1 - joint0
    a = 1.0 if log_ratio > np.log(0.5) else -1.0
    for _ in range(60):
        if not (a * log_ratio > -a * np.log(2.0)):
            break
        eps *= 2.0 ** a
        if not (1e-8 < eps < 1e8):
            break
        _, r1, lp1, _ = leapfrog(target, x, r0, g, eps)
        joint1 = lp1 - 0.5 * (r1 @ r1) if np.isfinite(lp1) else -np.inf
        log_ratio = joint1 - joint0
    return eps


class NUTSChain(Chain):
    """No-U-turn sampler with multiplicative doubling, slice acceptance and
    dual-averaging step size adaptation.

    The first ``warmup`` draws adapt the step size toward ``target_accept``
    and are kept in the emitted history: adaptation cost is part of the
    sampler's budget.  Trajectories whose energy error exceeds the divergence
    threshold are cut short.
    """

    kind = "nuts"

    def __init__(self, target, x0, rng, sampler_id: int = 0, step_size=None,
                 target_accept: float = 0.8, max_depth: int = 10,
                 warmup: int = 200, divergence_threshold: float = 1000.0):
        super().__init__(target, x0, rng, sampler_id)
        self._lp, self._g = target.logp_grad(self._x)
        if not np.isfinite(self._lp):
            raise ValueError("initial position must have finite log-density")
        self._eps = None if step_size is None else float(step_size)
        self._adapting = step_size is None
        self.target_accept = float(target_accept)
        self.max_depth = int(max_depth)
        self.warmup = int(warmup)
        self.div_threshold = float(divergence_threshold)
        self.divergences = 0
        # dual averaging state
        self._m = 1
        self._mu = None
        self._h_bar = 0.0
        self._log_eps_bar = 0.0

    @property
    def step_size(self) -> float:
        if self._eps is None:
            raise RuntimeError("step size not initialized yet; draw a batch first")
        return self._eps

    def _init_step_size(self):
        self._eps = find_reasonable_step_size(self.target, self._x, self._lp,
                                              self._g, self.rng)
        self._mu = np.log(10.0 * self._eps)

    def _build_tree(self, x, r, g, logu, v, j, eps, joint0):
        if j == 0:
            x1, r1, lp1, g1 = leapfrog(self.target, x, r, g, v * eps)
            joint = lp1 - 0.5 * (r1 @ r1) if np.isfinite(lp1) else -np.inf
            n1 = int(logu <= joint)
            s1 = int(joint - logu > -self.div_threshold)
            if s1 == 0:
                self.divergences += 1
            alpha1 = min(1.0, np.exp(min(joint - joint0, 0.0)))
            return (x1, r1, g1, x1, r1, g1, x1, g1, lp1, n1, s1, alpha1, 1)
        # recursion: build left and right subtrees
        (xm, rm, gm, xp, rp, gp, x1, g1, lp1, n1, s1, a1, na1) = \
            self._build_tree(x, r, g, logu, v, j - 1, eps, joint0)
        if s1 == 1:
            if v == -1:
                (xm, rm, gm, _, _, _, x2, g2, lp2, n2, s2, a2, na2) = \
                    self._build_tree(xm, rm, gm, logu, v, j - 1, eps, joint0)
            else:
                (_, _, _, xp, rp, gp, x2, g2, lp2, n2, s2, a2, na2) = \
                    self._build_tree(xp, rp, gp, logu, v, j - 1, eps, joint0)
            if n1 + n2 > 0 and self.rng.uniform() < n2 / float(n1 + n2):
                x1, g1, lp1 = x2, g2, lp2
            a1 += a2
            na1 += na2
            span = xp - xm
            s1 = int(s2 and (span @ rm) >= 0 and (span @ rp) >= 0)
            n1 += n2
        return (xm, rm, gm, xp, rp, gp, x1, g1, lp1, n1, s1, a1, na1)

    def _draw(self):
        if self._eps is None:
            self._init_step_size()
        d = self.target.dim
        r0 = self.rng.standard_normal(d)
        joint0 = self._lp - 0.5 * (r0 @ r0)
        logu = joint0 + np.log(self.rng.uniform())
        xm = xp = self._x
        rm = rp = r0
        gm = gp = self._g
        j = 0
        n, s = 1, 1
        alpha, n_alpha = 0.0, 1
        while s == 1 and j < self.max_depth:
            v = 1 if self.rng.uniform() < 0.5 else -1
            if v == -1:
                (xm, rm, gm, _, _, _, x1, g1, lp1, n1, s1, alpha, n_alpha) = \
                    self._build_tree(xm, rm, gm, logu, v, j, self._eps, joint0)
            else:
                (_, _, _, xp, rp, gp, x1, g1, lp1, n1, s1, alpha, n_alpha) = \
                    self._build_tree(xp, rp, gp, logu, v, j, self._eps, joint0)
            self.proposed += 1
            if s1 == 1 and self.rng.uniform() < min(1.0, n1 / float(n)):
                self._x, self._lp, self._g = x1, lp1, g1
                self.accepted += 1
            n += n1
            span = xp - xm
            s = int(s1 and (span @ rm) >= 0 and (span @ rp) >= 0)
            j += 1
        if self._adapting:
            self._adapt(alpha / max(n_alpha, 1))
        return self._x.copy(), self._lp, self._g.copy()

    def _adapt(self, accept_stat, gamma_da=0.05, t0=10.0, kappa=0.75):
        m = self._m
        if m <= self.warmup:
            eta = 1.0 / (m + t0)
            self._h_bar = (1.0 - eta) * self._h_bar + eta * (self.target_accept - accept_stat)
            log_eps = self._mu - np.sqrt(m) / gamma_da * self._h_bar
            x_eta = m ** (-kappa)
            self._log_eps_bar = x_eta * log_eps + (1.0 - x_eta) * self._log_eps_bar
            self._eps = float(np.exp(log_eps))
            if m == self.warmup:
                self._eps = float(np.exp(self._log_eps_bar))
        self._m = m + 1

    def _run(self, n_b: int) -> Batch:
        d = self.target.dim
        pts = np.empty((n_b, d))
        lps = np.empty(n_b)
        grads = np.empty((n_b, d))
        for i in range(n_b):
            x, lp, g = self._draw()
            pts[i] = x
            lps[i] = lp
            grads[i] = g
        return Batch(self.sampler_id, pts, lps, grads)


_CHAIN_KINDS = {"mh": MHChain, "mala": MALAChain, "nuts": NUTSChain}


def make_sampler_pool(target, kind, count, seed, init_box, step_sizes=None,
                      step_range=(0.1, 5.0), **chain_kwargs) -> list:
    """Build ``count`` independent chains of one kind.

    Each chain gets its own RNG stream spawned from ``seed`` and an initial
    position drawn uniformly from ``init_box``.  For mh/mala, step sizes are
    either given explicitly (one per chain) or drawn uniformly from
    ``step_range``; NUTS chains tune their own step size.  The same seed
    reproduces the pool exactly.
    """
    if kind not in _CHAIN_KINDS:
        raise ValueError(f"unknown sampler kind {kind!r}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(count + 1)
    meta_rng = np.random.default_rng(children[0])
    lo, hi = (np.asarray(b, dtype=float) for b in init_box)
    lo = np.broadcast_to(lo, (target.dim,))
    hi = np.broadcast_to(hi, (target.dim,))
    if step_sizes is not None:
        steps = [float(s) for s in step_sizes]
        if len(steps) != count:
            raise ValueError("need one step size per chain")
    elif kind in ("mh", "mala"):
        steps = list(meta_rng.uniform(step_range[0], step_range[1], size=count))
    else:
        steps = [None] * count
    chains = []
    for i in range(count):
        rng = np.random.default_rng(children[i + 1])
        x0 = rng.uniform(lo, hi)
        for _ in range(100):  # retry until inside the support
            if np.isfinite(target.logp_batch(x0[None, :])[0]):
                break
            x0 = rng.uniform(lo, hi)
        else:
            raise RuntimeError("could not find a starting point with finite density")
        if kind == "nuts":
            chains.append(NUTSChain(target, x0, rng, sampler_id=i, **chain_kwargs))
        else:
            cls = _CHAIN_KINDS[kind]
            chains.append(cls(target, x0, rng, step_size=steps[i], sampler_id=i,
                              **chain_kwargs))
    return chains
