"""Top-level procedures tying samplers, discrepancy, bandit and weighting
together.

Three entry points, in increasing generality:

* run_bandit_pool: one region; a bandit allocates batches across chains on
  block-KSD losses; output is the uniformly weighted union of all batches.
* run_region_bandit: a fixed sampler-to-region map; a region is picked per
  round by a configurable strategy, a sampler within it by the bandit; each
  region's pool is reweighted by (known or estimated) region masses.
* run_clustered_bandit: regions are rediscovered every round by grouping
  chains whose latest batches touch; the final sample is k-means partitioned
  and reweighted by estimated region masses.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .bandit import BanditState, init_bandit, normalize_and_update, select_arm
from .clustering import group_chains, kmeans, reweight
from .ksd import KernelConfig, WeightedSample, block_ksd
from .weighting import GammaCache, RegionWeights, log_region_mass, region_weights


@dataclass
class RunConfig:
    """Knobs shared by all procedures.

    rounds is the total number of batches T, *including* the one
    initialization batch each chain gets, so T * batch_size points are
    emitted in total.  Checkpoints are sample counts (multiples of
    batch_size) at which a combined estimate is snapshotted.
    """

    rounds: int
    batch_size: int = 10
    bandit: str = "ucb1"
    region_strategy: str = "equal"
    alpha: float = 0.99
    kernel: KernelConfig = field(default_factory=KernelConfig)
    n_neighbors: int = 5          # chain-grouping contact neighbors
    knn_entropy: int = 3          # kNN graph degree for the entropy estimator
    seed: int = 0
    known_weights: tuple | None = None
    weight_refresh: int = 10      # rounds between region-stat re-estimates
    checkpoints: tuple = ()

    def validate(self, n_chains: int):
        if self.rounds < n_chains:
            raise ValueError("need at least one round per chain")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.bandit not in ("ucb1", "eps-greedy", "uniform"):
            raise ValueError(f"unknown bandit {self.bandit!r}")
        if self.region_strategy not in ("equal", "w", "ksd", "ksd-w", "sigma-w"):
            raise ValueError(f"unknown region strategy {self.region_strategy!r}")


@dataclass
class TraceRow:
    round: int
    region: int
    sampler: int
    raw_ksd: float
    cum_evals: int


@dataclass
class Checkpoint:
    n_samples: int
    evals: int
    sample: WeightedSample
    weights: RegionWeights | None = None


@dataclass
class RunTrace:
    rows: list
    final_sample: WeightedSample
    final_weights: RegionWeights | None
    pulls: np.ndarray
    checkpoints: list

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "region", "sampler", "raw_ksd", "cum_evals"])
        for r in self.rows:
            w.writerow([r.round, r.region, r.sampler, f"{r.raw_ksd:.12g}", r.cum_evals])


def estimate_mean(ws: WeightedSample) -> np.ndarray:
    return ws.mean()


def mse(estimates, truth) -> float:
    """Mean squared Euclidean error of mean estimates against the truth."""
    E = np.atleast_2d(np.asarray(estimates, dtype=float))
    t = np.asarray(truth, dtype=float)
    return float(((E - t[None, :]) ** 2).sum(axis=1).mean())


def select_region(strategy: str, weights, avg_ksd, sigmas, rng) -> int:
    """Pick a region index given per-region stats; see RunConfig.region_strategy."""
    K = len(avg_ksd)
    if K == 1:
        return 0
    if strategy == "equal":
        return int(rng.integers(K))
    if strategy == "ksd":
        return int(np.argmax(avg_ksd))
    if strategy == "w":
        p = np.asarray(weights, dtype=float)
    elif strategy == "ksd-w":
        p = np.asarray(weights, dtype=float) * np.asarray(avg_ksd, dtype=float)
    elif strategy == "sigma-w":
        p = np.asarray(weights, dtype=float) * np.asarray(sigmas, dtype=float)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    total = p.sum()
    if not np.isfinite(total) or total <= 0:
        return int(rng.integers(K))  # degenerate stats: fall back to uniform
    return int(rng.choice(K, p=p / total))


def _batch_score(batch, target, kernel) -> float:
    return block_ksd(batch.points, target=target, cfg=kernel, scores=batch.scores)


class _EmitLog:
    """Points/log-densities of every batch, in emission order."""

    def __init__(self):
        self.points = []
        self.logps = []
        self.samplers = []

    def add(self, batch):
        self.points.append(batch.points)
        self.logps.append(batch.logps)
        self.samplers.append(np.full(batch.size, batch.sampler_id))

    def stacked(self):
        return (np.concatenate(self.points), np.concatenate(self.logps),
                np.concatenate(self.samplers))

    @property
    def n(self) -> int:
        return sum(p.shape[0] for p in self.points)


def _region_weight_estimates(points_by_region, logps_by_region, alpha, k_nn,
                             gamma_cache) -> RegionWeights:
    """Softmaxed log-mass weights for a list of regions, with a floor for
    tiny regions.

    Regions too small for the kNN entropy graph cannot carry an estimate;
    they get a log-mass well below the smallest estimated one (effectively
    zero weight, kept positive so the simplex invariants hold).
    """
    min_pts = k_nn + 2
    betas = np.full(len(points_by_region), np.nan)
    for i, (pts, lps) in enumerate(zip(points_by_region, logps_by_region)):
        if pts.shape[0] >= min_pts:
            d = pts.shape[1]
            gamma = gamma_cache.get(d, k_nn, alpha)
            betas[i] = log_region_mass(pts, alpha, gamma, logps=lps)
    known = betas[np.isfinite(betas)]
    floor = (known.min() if known.size else 0.0) - 20.0
    betas[~np.isfinite(betas)] = floor
    return region_weights(betas)


def _sigma_of(points) -> float:
    """Spread statistic: sqrt of the trace of the empirical covariance."""
    if points.shape[0] < 2:
        return 0.0
    c = np.cov(points, rowvar=False)
    return float(np.sqrt(np.trace(np.atleast_2d(c))))


def run_bandit_pool(target, chains, cfg: RunConfig) -> RunTrace:
    """Single-region bandit allocation; uniformly weighted output."""
    M = len(chains)
    cfg.validate(M)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 101]))
    emit = _EmitLog()
    rows = []
    ckpts = []
    want = set(cfg.checkpoints)

    def maybe_snapshot():
        if emit.n in want:
            pts, _, _ = emit.stacked()
            ckpts.append(Checkpoint(n_samples=pts.shape[0],
                                    evals=target.evals.total,
                                    sample=WeightedSample.uniform(pts)))

    raws = []
    for i, chain in enumerate(chains):
        b = chain.batch(cfg.batch_size)
        emit.add(b)
        raws.append(_batch_score(b, target, cfg.kernel))
        rows.append(TraceRow(i + 1, 0, chain.sampler_id, raws[-1],
                             target.evals.total))
        maybe_snapshot()
    state = init_bandit(raws)
    for t in range(M + 1, cfg.rounds + 1):
        arm = select_arm(cfg.bandit, state, rng)
        b = chains[arm].batch(cfg.batch_size)
        emit.add(b)
        raw = _batch_score(b, target, cfg.kernel)
        normalize_and_update(state, arm, raw)
        rows.append(TraceRow(t, 0, chains[arm].sampler_id, raw,
                             target.evals.total))
        maybe_snapshot()
    pts, _, _ = emit.stacked()
    return RunTrace(rows=rows, final_sample=WeightedSample.uniform(pts),
                    final_weights=None, pulls=state.pulls.copy(),
                    checkpoints=ckpts)


def _region_loss_stats(state: BanditState, members_by_region) -> np.ndarray:
    """Average normalized loss per region, pull-count weighted."""
    avg = np.zeros(len(members_by_region))
    for k, members in enumerate(members_by_region):
        m = np.asarray(members, dtype=int)
        pulls = state.pulls[m]
        avg[k] = float((state.means[m] * pulls).sum() / pulls.sum())
    return avg


def run_region_bandit(target, chains, region_of, cfg: RunConfig,
                      gamma_cache: GammaCache | None = None) -> RunTrace:
    """Fixed sampler-to-region map; the strategy picks the region, the bandit
    the sampler within it; output reweighted by known or estimated masses.

    Estimated region weights (and the sigma spread stats) are refreshed every
    cfg.weight_refresh rounds; estimation is the expensive part, so it is not
    repeated each round.
    """
    M = len(chains)
    cfg.validate(M)
    region_of = [int(r) for r in region_of]
    if len(region_of) != M:
        raise ValueError("need one region per sampler")
    K = max(region_of) + 1
    members = [[i for i in range(M) if region_of[i] == k] for k in range(K)]
    if any(not m for m in members):
        raise ValueError("every region needs at least one sampler")
    if cfg.known_weights is not None and len(cfg.known_weights) != K:
        raise ValueError("known_weights length must match region count")
    gamma_cache = gamma_cache or GammaCache()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 101]))
    emit = _EmitLog()
    rows = []
    ckpts = []
    want = set(cfg.checkpoints)

    def region_pools():
        pts, lps, own = emit.stacked()
        reg = np.asarray([region_of[s] for s in own])
        by_r = [pts[reg == k] for k in range(K)]
        lp_r = [lps[reg == k] for k in range(K)]
        return by_r, lp_r, reg, pts

    def weights_for(by_r, lp_r) -> RegionWeights:
        if cfg.known_weights is not None:
            w = np.asarray(cfg.known_weights, dtype=float)
            return RegionWeights(betas=np.log(w), weights=w / w.sum())
        return _region_weight_estimates(by_r, lp_r, cfg.alpha, cfg.knn_entropy,
                                        gamma_cache)

    def snapshot() -> Checkpoint:
        by_r, lp_r, reg, pts = region_pools()
        rw = weights_for(by_r, lp_r)
        ws = reweight(pts, reg, rw.weights)
        return Checkpoint(n_samples=pts.shape[0], evals=target.evals.total,
                          sample=ws, weights=rw)

    raws = []
    for i, chain in enumerate(chains):
        b = chain.batch(cfg.batch_size)
        emit.add(b)
        raws.append(_batch_score(b, target, cfg.kernel))
        rows.append(TraceRow(i + 1, region_of[i], chain.sampler_id, raws[-1],
                             target.evals.total))
        if emit.n in want:
            ckpts.append(snapshot())
    state = init_bandit(raws)
    need_w = cfg.region_strategy in ("w", "ksd-w", "sigma-w")
    need_sig = cfg.region_strategy == "sigma-w"
    wvec = np.full(K, 1.0 / K)
    sig = np.zeros(K)
    for t in range(M + 1, cfg.rounds + 1):
        if (need_w or need_sig) and (t - M - 1) % cfg.weight_refresh == 0:
            by_r, lp_r, _, _ = region_pools()
            if need_w:
                wvec = weights_for(by_r, lp_r).weights
            if need_sig:
                sig = np.array([_sigma_of(p) for p in by_r])
        avg = _region_loss_stats(state, members)
        k_sel = select_region(cfg.region_strategy, wvec, avg, sig, rng)
        arm = select_arm(cfg.bandit, state, rng, arms=members[k_sel])
        b = chains[arm].batch(cfg.batch_size)
        emit.add(b)
        raw = _batch_score(b, target, cfg.kernel)
        normalize_and_update(state, arm, raw)
        rows.append(TraceRow(t, k_sel, chains[arm].sampler_id, raw,
                             target.evals.total))
        if emit.n in want:
            ckpts.append(snapshot())
    if ckpts and ckpts[-1].n_samples == emit.n:
        final = ckpts[-1]
    else:
        final = snapshot()
    return RunTrace(rows=rows, final_sample=final.sample,
                    final_weights=final.weights, pulls=state.pulls.copy(),
                    checkpoints=ckpts)


def run_clustered_bandit(target, chains, cfg: RunConfig,
                         gamma_cache: GammaCache | None = None) -> RunTrace:
    """Full procedure: re-cluster chains each round, bandit within the chosen
    cluster, k-means + region-mass reweighting at the end.

    Per-sampler bandit statistics persist across re-clusterings.  For the
    weight/sigma-dependent cluster-selection strategies, per-sampler stat
    shares are refreshed every cfg.weight_refresh rounds from the then-current
    clustering and mapped onto whatever clusters exist in between (clusters
    change round to round, so stats attach to samplers, not cluster ids).
    """
    M = len(chains)
    cfg.validate(M)
    gamma_cache = gamma_cache or GammaCache()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 101]))
    kmeans_seq = np.random.SeedSequence([cfg.seed, 202])
    emit = _EmitLog()
    rows = []
    ckpts = []
    want = set(cfg.checkpoints)

    def snapshot() -> Checkpoint:
        pts, lps, _ = emit.stacked()
        part = kmeans(pts, M, np.random.default_rng(kmeans_seq.spawn(1)[0]))
        ids = np.unique(part.assignment)
        by_c = [pts[part.assignment == c] for c in ids]
        lp_c = [lps[part.assignment == c] for c in ids]
        rw = _region_weight_estimates(by_c, lp_c, cfg.alpha, cfg.knn_entropy,
                                      gamma_cache)
        ws = reweight(pts, part.assignment, rw.weights)
        return Checkpoint(n_samples=pts.shape[0], evals=target.evals.total,
                          sample=ws, weights=rw)

    raws = []
    for i, chain in enumerate(chains):
        b = chain.batch(cfg.batch_size)
        emit.add(b)
        raws.append(_batch_score(b, target, cfg.kernel))
        rows.append(TraceRow(i + 1, -1, chain.sampler_id, raws[-1],
                             target.evals.total))
        if emit.n in want and emit.n >= M:
            ckpts.append(snapshot())
    state = init_bandit(raws)
    need_w = cfg.region_strategy in ("w", "ksd-w", "sigma-w")
    need_sig = cfg.region_strategy == "sigma-w"
    w_share = np.full(M, 1.0 / M)   # per-sampler share of estimated mass
    sig_of_sampler = np.zeros(M)
    for t in range(M + 1, cfg.rounds + 1):
        grouping = group_chains([c.batches[-1] for c in chains],
                                cfg.n_neighbors, round_index=t)
        members = [list(c) for c in grouping.clusters]
        K = len(members)
        if (need_w or need_sig) and (t - M - 1) % cfg.weight_refresh == 0:
            pts, lps, own = emit.stacked()
            cl_of_sampler = {s: ci for ci, c in enumerate(members) for s in c}
            cl = np.asarray([cl_of_sampler[s] for s in own])
            by_c = [pts[cl == k] for k in range(K)]
            lp_c = [lps[cl == k] for k in range(K)]
            if need_w:
                w_now = _region_weight_estimates(by_c, lp_c, cfg.alpha,
                                                 cfg.knn_entropy, gamma_cache).weights
                for ci, c in enumerate(members):
                    w_share[c] = w_now[ci] / len(c)
            if need_sig:
                for ci, c in enumerate(members):
                    sig_of_sampler[c] = _sigma_of(by_c[ci])
        wvec = np.array([w_share[c].sum() for c in members])
        total = wvec.sum()
        wvec = wvec / total if total > 0 else np.full(K, 1.0 / K)
        sig = np.array([sig_of_sampler[c].mean() for c in members])
        avg = _region_loss_stats(state, members)
        k_sel = select_region(cfg.region_strategy, wvec, avg, sig, rng)
        arm = select_arm(cfg.bandit, state, rng, arms=members[k_sel])
        b = chains[arm].batch(cfg.batch_size)
        emit.add(b)
        raw = _batch_score(b, target, cfg.kernel)
        normalize_and_update(state, arm, raw)
        rows.append(TraceRow(t, k_sel, chains[arm].sampler_id, raw,
                             target.evals.total))
        if emit.n in want:
            ckpts.append(snapshot())
    if ckpts and ckpts[-1].n_samples == emit.n:
        final = ckpts[-1]
    else:
        final = snapshot()
    return RunTrace(rows=rows, final_sample=final.sample,
                    final_weights=final.weights, pulls=state.pulls.copy(),
                    checkpoints=ckpts)
