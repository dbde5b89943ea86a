"""Benchmark experiments behind the ``bench`` command line tool.

Each experiment turns a parsed config table into CSV rows with the fixed
schema (method, seed, n_samples, metric, density_evals).  Replicates are
distributed over a process pool; every random draw descends from the master
seed, so the merged output depends only on the config file and that seed.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import os

import numpy as np
import tomli

from .baselines import TEMPERATURE_LADDER, run_pt, run_smc
from .clustering import kmeans, reweight
from .ksd import KernelConfig, block_ksd
from .orchestrator import (RunConfig, _region_weight_estimates, estimate_mean,
                           mse, run_bandit_pool, run_clustered_bandit,
                           run_region_bandit)
from .samplers import MALAChain, MHChain, make_sampler_pool
from .targets import (GaussianMixtureSpec, SensorModel,
                      default_anchor_positions, localization_error,
                      make_diagonal_gaussian, make_gaussian,
                      make_gaussian_mixture, make_sensor_posterior,
                      random_mixture_spec, simulate_sensor_world)
from .weighting import (GammaCache, gaussian_fit_log_mass,
                        importance_log_mass, region_weights)

CSV_HEADER = ("method", "seed", "n_samples", "metric", "density_evals")

EXPERIMENT_KINDS = (
    "block-agreement",
    "unimodal",
    "multimodal-oracle",
    "multimodal-general",
    "weight-comparison",
    "parallel-baselines",
    "sampler-count",
    "sensor",
)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomli.load(fh)


def apply_paper_scale(cfg: dict, paper_scale: bool) -> dict:
    """Overlay the [paper] table onto the top level when asked for.

    Desk-scale values live at the top level; the [paper] table holds the
    full-size overrides (repeats, n, ...) restored by --paper-scale.
    """
    out = {k: v for k, v in cfg.items() if k != "paper"}
    if paper_scale:
        out.update(cfg.get("paper", {}))
    return out


def _validate_common(cfg: dict, kind: str) -> None:
    claimed = cfg.get("kind")
    if claimed is not None and claimed != kind:
        raise ValueError(f"config is for {claimed!r}, not {kind!r}")
    if int(cfg.get("repeats", 1)) < 1:
        raise ValueError("repeats must be at least 1")
    cks = list(cfg.get("checkpoints", ()))
    if any(b <= a for a, b in zip(cks, cks[1:])):
        raise ValueError("checkpoints must be strictly increasing")


def target_from_config(tbl: dict):
    """Build a target density from a config [target] table."""
    kind = tbl.get("type", "gaussian")
    if kind == "gaussian":
        return make_gaussian(int(tbl.get("dim", 2)))
    if kind == "mixture":
        spec = GaussianMixtureSpec(betas=tuple(float(b) for b in tbl["betas"]),
                                   means=tuple(tuple(m) for m in tbl["means"]),
                                   sigmas=tuple(float(s) for s in tbl["sigmas"]))
        return make_gaussian_mixture(spec)
    if kind == "random-mixture":
        rng = np.random.default_rng(
            np.random.SeedSequence([int(tbl.get("target_seed", 0)), 555]))
        spec = random_mixture_spec(
            int(tbl["n_modes"]), int(tbl.get("dim", 2)), rng,
            mode_box=float(tbl.get("mode_box", 5.0)),
            var_range=tuple(tbl.get("var_range", (0.2, 1.0))),
            weight_range=tuple(tbl.get("weight_range", (1.0, 1.0))),
            min_mode_distance=float(tbl.get("min_mode_distance", 0.0)))
        return make_gaussian_mixture(spec)
    raise ValueError(f"unknown target type {kind!r}")


def load_sensor_observations(path) -> SensorModel:
    """Read a sensor world from JSON: {pairs: [{t,u,o,d}], anchors, params}."""
    with open(path) as fh:
        obj = json.load(fh)
    params = obj["params"]
    pairs = obj["pairs"]
    pair_t = np.array([int(p["t"]) for p in pairs], dtype=int)
    pair_u = np.array([int(p["u"]) for p in pairs], dtype=int)
    observed = np.array([bool(p["o"]) for p in pairs])
    distances = np.array([float(p["d"]) if p["o"] else np.nan for p in pairs])
    truth = np.asarray(obj["truth"], dtype=float) if "truth" in obj else None
    return SensorModel(n_sensors=int(params["n_sensors"]),
                       anchors=np.asarray(obj["anchors"], dtype=float),
                       side=float(params["side"]),
                       radius=float(params["radius"]),
                       noise=float(params["noise"]),
                       pair_t=pair_t, pair_u=pair_u,
                       observed=observed, distances=distances, truth=truth)


def sensor_world_from_config(tbl: dict) -> SensorModel:
    if "observations_file" in tbl:
        return load_sensor_observations(tbl["observations_file"])
    side = float(tbl.get("side", 10.0))
    anchors = tbl.get("anchors")
    anchors = (np.asarray(anchors, dtype=float) if anchors is not None
               else default_anchor_positions(side))
    rng = np.random.default_rng(
        np.random.SeedSequence([int(tbl.get("world_seed", 0)), 777]))
    return simulate_sensor_world(int(tbl.get("n_sensors", 8)), anchors, side,
                                 float(tbl.get("radius", 3.0)),
                                 float(tbl.get("noise", 0.2)), rng)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _seq(*ids) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(i) for i in ids])


def _seed_int(*ids) -> int:
    return int(_seq(*ids).generate_state(1)[0])


def _box(dim: int, halfwidth: float):
    return (np.full(dim, -float(halfwidth)), np.full(dim, float(halfwidth)))


def _run_tasks(worker, tasks, cfg):
    n_workers = int(cfg.get("workers", 0)) or (os.cpu_count() or 1)
    n_workers = max(1, min(n_workers, len(tasks)))
    if n_workers == 1:
        return [worker(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(worker, tasks))


def write_rows(path, rows) -> None:
    """Write rows in the fixed schema, deterministically ordered."""
    ordered = sorted(rows, key=lambda r: (str(r[0]), int(r[1]), int(r[2])))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for method, seed, n, metric, evals in ordered:
            w.writerow([method, int(seed), int(n),
                        f"{float(metric):.12g}", int(evals)])


def _checkpoint_rows(method, rep, trace, truth):
    return [(method, rep, c.n_samples,
             mse([estimate_mean(c.sample)], truth), c.evals)
            for c in trace.checkpoints]


def _gamma_values(d: int, k_nn: int, alpha: float, path=None) -> dict:
    """Calibrate (or recall) the entropy constant once, for worker preloads.

    Calibration derives its RNG from the key alone, so the returned constants
    are the same whether or not a disk cache file is supplied.
    """
    cache = GammaCache(path)
    cache.get(int(d), int(k_nn), float(alpha))
    return cache.known()


def _floored(betas) -> np.ndarray:
    """Replace non-finite log masses by a value far below the smallest one."""
    b = np.asarray(betas, dtype=float)
    finite = b[np.isfinite(b)]
    floor = (float(finite.min()) if finite.size else 0.0) - 20.0
    return np.where(np.isfinite(b), b, floor)


# ---------------------------------------------------------------------------
# block-agreement: does small-block KSD rank samplers like large-block KSD?
# ---------------------------------------------------------------------------

def _block_pair_worker(task) -> list:
    rng = np.random.default_rng(_seq(task["seed"], 0, task["pair"], 5))
    dim = int(task["dim"])
    variances = rng.uniform(*task["var_range"], size=dim)
    target = make_diagonal_gaussian(np.zeros(dim), variances)
    chains = make_sampler_pool(target, task["sampler"], 2,
                               _seq(task["seed"], 0, task["pair"], 6),
                               _box(dim, task["init_halfwidth"]),
                               step_range=tuple(task["step_range"]))
    pts, scores = [], []
    for c in chains:
        pts.append(c.batch(int(task["n"])).points)
        s = c.history_scores()
        scores.append(s if s is not None else target.grad_batch(pts[-1]))
    evals = target.evals.total
    rows = []
    for h in task["h_values"]:
        cfgk = KernelConfig(h=float(h))
        for nb in task["blocks"]:
            a = block_ksd(pts[0], cfg=cfgk, block_size=int(nb), scores=scores[0])
            b = block_ksd(pts[1], cfg=cfgk, block_size=int(nb), scores=scores[1])
            rows.append((f"diff-h{h:g}", task["pair"], int(nb), a - b, evals))
    return rows


def _ranking_agreement(diffs: dict, ref: dict) -> float:
    """Fraction of pairs ranked the same way as the reference; ties agree."""
    agree = 0
    for pair, d in diffs.items():
        r = ref[pair]
        if d == 0.0 or r == 0.0 or (d > 0) == (r > 0):
            agree += 1
    return agree / len(diffs)


def run_block_agreement(cfg: dict) -> list:
    _validate_common(cfg, "block-agreement")
    blocks = [int(b) for b in cfg.get("block_sizes", (10, 25, 50, 100, 250, 500))]
    ref = int(cfg.get("reference_block", 2000))
    all_blocks = blocks + [ref]
    hs = [float(h) for h in cfg.get("h_values", (0.01, 0.1, 1.0, 10.0, 100.0))]
    n_pairs = int(cfg.get("pairs", 50))
    tasks = [dict(seed=int(cfg.get("seed", 0)), pair=p, n=int(cfg.get("n", 20000)),
                  dim=int(cfg.get("dim", 2)),
                  var_range=tuple(cfg.get("var_range", (0.1, 3.0))),
                  sampler=cfg.get("sampler", "mh"),
                  step_range=tuple(cfg.get("step_range", (0.1, 5.0))),
                  init_halfwidth=float(cfg.get("init_halfwidth", 2.0)),
                  h_values=hs, blocks=all_blocks)
             for p in range(n_pairs)]
    rows = [r for part in _run_tasks(_block_pair_worker, tasks, cfg) for r in part]
    diffs = {}
    total_evals = 0
    seen_pairs = set()
    for method, pair, nb, diff, evals in rows:
        diffs[(method, nb)] = diffs.get((method, nb), {})
        diffs[(method, nb)][pair] = diff
        if pair not in seen_pairs:
            seen_pairs.add(pair)
            total_evals += evals
    for h in hs:
        name = f"diff-h{h:g}"
        ref_diffs = diffs[(name, ref)]
        for nb in all_blocks:
            frac = _ranking_agreement(diffs[(name, nb)], ref_diffs)
            rows.append((f"agreement-h{h:g}", 0, nb, frac, total_evals))
    return rows


# ---------------------------------------------------------------------------
# unimodal: bandit over a step-size ladder must stay close to the best rung
# ---------------------------------------------------------------------------

def _unimodal_worker(task) -> list:
    dim = int(task["dim"])
    target = make_gaussian(dim)
    truth = np.zeros(dim)
    box = _box(dim, task["init_halfwidth"])
    method = task["method"]
    seed, midx, rep = task["seed"], task["midx"], task["rep"]
    checkpoints = [int(c) for c in task["checkpoints"]]
    if method.startswith("single-"):
        step = float(method[len("single-"):])
        chain = make_sampler_pool(target, task["sampler"], 1,
                                  _seq(seed, midx, rep, 1), box,
                                  step_sizes=[step])[0]
        rows, done = [], 0
        for ck in checkpoints:
            chain.batch(ck - done)
            done = ck
            est = chain.history_points().mean(axis=0)
            rows.append((method, rep, ck, mse([est], truth), target.evals.total))
        return rows
    steps = [float(s) for s in task["steps"]]
    chains = make_sampler_pool(target, task["sampler"], len(steps),
                               _seq(seed, midx, rep, 1), box, step_sizes=steps)
    rc = RunConfig(rounds=int(task["n"]) // int(task["batch_size"]),
                   batch_size=int(task["batch_size"]), bandit=method,
                   seed=_seed_int(seed, midx, rep, 2),
                   checkpoints=tuple(checkpoints))
    tr = run_bandit_pool(target, chains, rc)
    return _checkpoint_rows(method, rep, tr, truth)


def run_unimodal(cfg: dict) -> list:
    _validate_common(cfg, "unimodal")
    steps = [float(s) for s in cfg.get("steps", (0.1, 0.2, 0.5, 1.0, 2.0))]
    methods = list(cfg.get("bandits", ("ucb1", "eps-greedy", "uniform")))
    if cfg.get("singles", True):
        methods += [f"single-{s:g}" for s in steps]
    base = dict(seed=int(cfg.get("seed", 0)), dim=int(cfg.get("dim", 2)),
                sampler=cfg.get("sampler", "mala"), steps=steps,
                n=int(cfg.get("n", 5000)),
                batch_size=int(cfg.get("batch_size", 10)),
                checkpoints=list(cfg.get("checkpoints", (500, 1000, 2000, 5000))),
                init_halfwidth=float(cfg.get("init_halfwidth", 2.0)))
    tasks = [dict(base, method=m, midx=mi, rep=r)
             for mi, m in enumerate(methods)
             for r in range(int(cfg.get("repeats", 20)))]
    return [r for part in _run_tasks(_unimodal_worker, tasks, cfg) for r in part]


# ---------------------------------------------------------------------------
# multimodal-oracle: one locally mixing chain per known mode
# ---------------------------------------------------------------------------

def _oracle_worker(task) -> list:
    target = target_from_config(task["target"])
    means = np.asarray(task["target"]["means"], dtype=float)
    K = means.shape[0]
    betas = np.asarray(task["target"]["betas"], dtype=float)
    known = tuple(betas / betas.sum())
    seed, midx, rep = task["seed"], task["midx"], task["rep"]
    children = _seq(seed, midx, rep, 1).spawn(K + 1)
    meta = np.random.default_rng(children[0])
    cls = {"mh": MHChain, "mala": MALAChain}[task["sampler"]]
    chains = []
    for k in range(K):
        x0 = means[k] + task["init_jitter"] * meta.standard_normal(means.shape[1])
        step = meta.uniform(*task["step_range"])
        chains.append(cls(target, x0, np.random.default_rng(children[k + 1]),
                          step_size=step, sampler_id=k))
    strategy, wmode = task["strategy"], task["wmode"]
    rc = RunConfig(rounds=int(task["n"]) // int(task["batch_size"]),
                   batch_size=int(task["batch_size"]),
                   bandit=task["bandit"], region_strategy=strategy,
                   alpha=float(task["alpha"]),
                   knn_entropy=int(task["knn_entropy"]),
                   seed=_seed_int(seed, midx, rep, 2),
                   known_weights=known if wmode == "known" else None,
                   weight_refresh=int(task["weight_refresh"]),
                   checkpoints=tuple(int(c) for c in task["checkpoints"]))
    cache = GammaCache(preload=task["gamma"])
    tr = run_region_bandit(target, chains, list(range(K)), rc, cache)
    return _checkpoint_rows(f"{strategy}-{wmode}", rep, tr, target.mean_truth)


def run_multimodal_oracle(cfg: dict) -> list:
    _validate_common(cfg, "multimodal-oracle")
    strategies = list(cfg.get("strategies",
                              ("equal", "w", "ksd", "ksd-w", "sigma-w")))
    wmodes = list(cfg.get("weight_modes", ("known", "renyi")))
    alpha = float(cfg.get("alpha", 0.95))
    knn = int(cfg.get("knn_entropy", 3))
    dim = len(cfg["target"]["means"][0])
    gamma = _gamma_values(dim, knn, alpha, cfg.get("gamma_cache"))
    base = dict(seed=int(cfg.get("seed", 0)), target=cfg["target"],
                sampler=cfg.get("sampler", "mala"),
                step_range=tuple(cfg.get("step_range", (0.1, 5.0))),
                init_jitter=float(cfg.get("init_jitter", 0.1)),
                n=int(cfg.get("n", 6000)),
                batch_size=int(cfg.get("batch_size", 10)),
                bandit=cfg.get("bandit", "ucb1"),
                alpha=alpha, knn_entropy=knn,
                weight_refresh=int(cfg.get("weight_refresh", 10)),
                checkpoints=list(cfg.get("checkpoints", (600, 1500, 3000, 6000))),
                gamma=gamma)
    methods = [(s, wm) for s in strategies for wm in wmodes]
    tasks = [dict(base, strategy=s, wmode=wm, midx=mi, rep=r)
             for mi, (s, wm) in enumerate(methods)
             for r in range(int(cfg.get("repeats", 20)))]
    return [r for part in _run_tasks(_oracle_worker, tasks, cfg) for r in part]


# ---------------------------------------------------------------------------
# multimodal-general: full pipeline against pooling and a single chain
# ---------------------------------------------------------------------------

def _general_worker(task) -> list:
    target = target_from_config(task["target"])
    truth = target.mean_truth
    box = _box(target.dim, task["init_halfwidth"])
    seed, midx, rep = task["seed"], task["midx"], task["rep"]
    method = task["method"]
    kind = task["sampler"]
    pool_seq = _seq(seed, midx, rep, 1)
    checkpoints = tuple(int(c) for c in task["checkpoints"])
    nb = int(task["batch_size"])
    n = int(task["n"])
    if method == "single":
        steps_one = task["steps"][:1] if task["steps"] else None
        chain = make_sampler_pool(target, kind, 1, pool_seq, box,
                                  step_sizes=steps_one)[0]
        rows, done = [], 0
        for ck in checkpoints:
            chain.batch(ck - done)
            done = ck
            est = chain.history_points().mean(axis=0)
            rows.append((method, rep, ck, mse([est], truth), target.evals.total))
        return rows
    chains = make_sampler_pool(target, kind, int(task["count"]), pool_seq, box,
                               step_sizes=task["steps"])
    rc = RunConfig(rounds=n // nb, batch_size=nb,
                   bandit=method[len("wr-"):] if method.startswith("wr-") else "uniform",
                   region_strategy=task["strategy"],
                   alpha=float(task["alpha"]),
                   knn_entropy=int(task["knn_entropy"]),
                   seed=_seed_int(seed, midx, rep, 2),
                   weight_refresh=int(task["weight_refresh"]),
                   checkpoints=checkpoints)
    if method == "uniform-pool":
        tr = run_bandit_pool(target, chains, rc)
    else:
        cache = GammaCache(preload=task["gamma"])
        tr = run_clustered_bandit(target, chains, rc, cache)
    return _checkpoint_rows(method, rep, tr, truth)


def _fixed_steps(cfg, kind, count):
    """Step sizes held fixed across replicates, drawn from the master seed."""
    if kind == "nuts":
        return None
    rng = np.random.default_rng(_seq(int(cfg.get("seed", 0)), 999))
    lo, hi = cfg.get("step_range", (0.1, 5.0))
    return [float(s) for s in rng.uniform(float(lo), float(hi), size=count)]


def run_multimodal_general(cfg: dict) -> list:
    _validate_common(cfg, "multimodal-general")
    kind = cfg.get("sampler", "mh")
    count = int(cfg.get("count", 10))
    alpha = float(cfg.get("alpha", 0.99))
    knn = int(cfg.get("knn_entropy", 3))
    dim = int(cfg["target"].get("dim", 2))
    gamma = _gamma_values(dim, knn, alpha, cfg.get("gamma_cache"))
    methods = list(cfg.get("methods",
                           ("wr-ucb1", "wr-eps-greedy", "wr-uniform",
                            "uniform-pool", "single")))
    base = dict(seed=int(cfg.get("seed", 0)), target=cfg["target"],
                sampler=kind, count=count,
                steps=_fixed_steps(cfg, kind, count),
                n=int(cfg.get("n", 6000)),
                batch_size=int(cfg.get("batch_size", 10)),
                strategy=cfg.get("region_strategy", "equal"),
                alpha=alpha, knn_entropy=knn,
                weight_refresh=int(cfg.get("weight_refresh", 10)),
                init_halfwidth=float(cfg.get("init_halfwidth",
                                             cfg["target"].get("mode_box", 5.0))),
                checkpoints=list(cfg.get("checkpoints", (600, 1500, 3000, 6000))),
                gamma=gamma)
    tasks = [dict(base, method=m, midx=mi, rep=r)
             for mi, m in enumerate(methods)
             for r in range(int(cfg.get("repeats", 20)))]
    return [r for part in _run_tasks(_general_worker, tasks, cfg) for r in part]


# ---------------------------------------------------------------------------
# weight-comparison: same samples and clustering, different mass estimators
# ---------------------------------------------------------------------------

def _weight_cmp_worker(task) -> list:
    target = target_from_config(task["target"])
    truth = target.mean_truth
    box = _box(target.dim, task["init_halfwidth"])
    seed, rep = task["seed"], task["rep"]
    alpha, knn = float(task["alpha"]), int(task["knn_entropy"])
    cache = GammaCache(preload=task["gamma"])
    chains = make_sampler_pool(target, task["sampler"], int(task["count"]),
                               _seq(seed, 0, rep, 1), box,
                               step_sizes=task["steps"])
    rc = RunConfig(rounds=int(task["n"]) // int(task["batch_size"]),
                   batch_size=int(task["batch_size"]), bandit="uniform",
                   region_strategy="equal", alpha=alpha, knn_entropy=knn,
                   seed=_seed_int(seed, 0, rep, 2),
                   checkpoints=tuple(int(c) for c in task["checkpoints"]))
    tr = run_clustered_bandit(target, chains, rc, cache)
    rng_is = np.random.default_rng(_seq(seed, 0, rep, 4))
    rows = []
    for ci, ck in enumerate(tr.checkpoints):
        pts = ck.sample.points
        lps = target.logp_batch(pts)
        part = kmeans(pts, int(task["count"]),
                      np.random.default_rng(_seq(seed, 0, rep, 5, ci)))
        ids = np.unique(part.assignment)
        by = [pts[part.assignment == c] for c in ids]
        lp_c = [lps[part.assignment == c] for c in ids]
        w_renyi = _region_weight_estimates(by, lp_c, alpha, knn, cache).weights
        betas_g = []
        for P, L in zip(by, lp_c):
            if P.shape[0] < P.shape[1] + 2:
                betas_g.append(-np.inf)
                continue
            try:
                betas_g.append(gaussian_fit_log_mass(P, L))
            except np.linalg.LinAlgError:
                betas_g.append(-np.inf)
        w_gauss = region_weights(_floored(betas_g)).weights
        before = target.evals.total
        betas_i = []
        for c, P in zip(ids, by):
            lm, _ = importance_log_mass(P, target, rng_is,
                                        centroids=part.centroids,
                                        region_id=int(c),
                                        n_draws=int(task["is_draws"]))
            betas_i.append(lm)
        is_evals = target.evals.total - before
        w_is = region_weights(_floored(betas_i)).weights
        for name, w, extra in (("renyi", w_renyi, 0),
                               ("gaussian", w_gauss, 0),
                               ("importance", w_is, is_evals)):
            ws = reweight(pts, part.assignment, w)
            rows.append((name, rep, ck.n_samples,
                         mse([ws.mean()], truth), ck.evals + extra))
    return rows


def run_weight_comparison(cfg: dict) -> list:
    _validate_common(cfg, "weight-comparison")
    kind = cfg.get("sampler", "mala")
    count = int(cfg.get("count", 10))
    alpha = float(cfg.get("alpha", 0.99))
    knn = int(cfg.get("knn_entropy", 3))
    dim = int(cfg["target"].get("dim", 2))
    base = dict(seed=int(cfg.get("seed", 0)), target=cfg["target"],
                sampler=kind, count=count,
                steps=_fixed_steps(cfg, kind, count),
                n=int(cfg.get("n", 6000)),
                batch_size=int(cfg.get("batch_size", 10)),
                alpha=alpha, knn_entropy=knn,
                is_draws=int(cfg.get("is_draws", 4000)),
                init_halfwidth=float(cfg.get("init_halfwidth",
                                             cfg["target"].get("mode_box", 5.0))),
                checkpoints=list(cfg.get("checkpoints", (600, 1500, 3000, 6000))),
                gamma=_gamma_values(dim, knn, alpha, cfg.get("gamma_cache")))
    tasks = [dict(base, rep=r) for r in range(int(cfg.get("repeats", 20)))]
    return [r for part in _run_tasks(_weight_cmp_worker, tasks, cfg) for r in part]


# ---------------------------------------------------------------------------
# parallel-baselines: annealed SMC and tempering at a matched budget
# ---------------------------------------------------------------------------

def _pb_wr_worker(task) -> dict:
    target = target_from_config(task["target"])
    truth = target.mean_truth
    box = _box(target.dim, task["init_halfwidth"])
    seed, midx, rep = task["seed"], task["midx"], task["rep"]
    chains = make_sampler_pool(target, task["sampler"], int(task["count"]),
                               _seq(seed, midx, rep, 1), box,
                               step_sizes=task["steps"])
    rc = RunConfig(rounds=int(task["n"]) // int(task["batch_size"]),
                   batch_size=int(task["batch_size"]),
                   bandit=task["bandit"], region_strategy=task["strategy"],
                   alpha=float(task["alpha"]),
                   knn_entropy=int(task["knn_entropy"]),
                   seed=_seed_int(seed, midx, rep, 2),
                   checkpoints=tuple(int(c) for c in task["checkpoints"]))
    cache = GammaCache(preload=task["gamma"])
    tr = run_clustered_bandit(target, chains, rc, cache)
    return {"rows": _checkpoint_rows(task["method"], rep, tr, truth),
            "rep": rep, "method": task["method"],
            "final_evals": target.evals.total}


def _pb_baseline_worker(task) -> list:
    target = target_from_config(task["target"])
    truth = target.mean_truth
    box = _box(target.dim, task["init_halfwidth"])
    seed, rep = task["seed"], task["rep"]
    ladder = TEMPERATURE_LADDER
    budget = int(task["budget"])
    P = max(int(task["min_population"]), budget // (2 * len(ladder)))
    n_pt = max(int(task["min_pt_steps"]), budget // (2 * len(ladder)) - 1)
    rows = []
    stats = {"smc": [], "pt": []}
    for i, step in enumerate(task["steps"]):
        rng = np.random.default_rng(_seq(seed, 2, rep, 10 + i))
        ws, diag = run_smc(target, ladder, P, float(step), rng, init_box=box)
        sq = mse([ws.mean()], truth)
        rows.append((f"smc-p{i}", rep, P, sq, diag["evals"]))
        stats["smc"].append((sq, diag["evals"], P))
        rng = np.random.default_rng(_seq(seed, 2, rep, 40 + i))
        ws, diag = run_pt(target, ladder, float(step), rng, n_pt, init_box=box)
        sq = mse([ws.mean()], truth)
        rows.append((f"pt-p{i}", rep, n_pt, sq, diag["evals"]))
        stats["pt"].append((sq, diag["evals"], n_pt))
    for fam, triples in stats.items():
        sqs = np.array([t[0] for t in triples])
        ev = int(round(np.mean([t[1] for t in triples])))
        n_col = triples[0][2]
        rows.append((f"{fam}-avg", rep, n_col, float(sqs.mean()), ev))
        rows.append((f"{fam}-best", rep, n_col, float(sqs.min()), ev))
        rows.append((f"{fam}-worst", rep, n_col, float(sqs.max()), ev))
    return rows


def run_parallel_baselines(cfg: dict) -> list:
    _validate_common(cfg, "parallel-baselines")
    count = int(cfg.get("count", 10))
    alpha = float(cfg.get("alpha", 0.99))
    knn = int(cfg.get("knn_entropy", 3))
    dim = int(cfg["target"].get("dim", 2))
    gamma = _gamma_values(dim, knn, alpha, cfg.get("gamma_cache"))
    mala_steps = _fixed_steps(cfg, "mala", count)
    repeats = int(cfg.get("repeats", 20))
    base = dict(seed=int(cfg.get("seed", 0)), target=cfg["target"], count=count,
                n=int(cfg.get("n", 6000)),
                batch_size=int(cfg.get("batch_size", 10)),
                bandit=cfg.get("bandit", "ucb1"),
                strategy=cfg.get("region_strategy", "equal"),
                alpha=alpha, knn_entropy=knn,
                init_halfwidth=float(cfg.get("init_halfwidth",
                                             cfg["target"].get("mode_box", 5.0))),
                checkpoints=list(cfg.get("checkpoints", (600, 1500, 3000, 6000))),
                gamma=gamma)
    wr_tasks = []
    for mi, (method, kind, steps) in enumerate(
            (("wr-nuts", "nuts", None), ("wr-mala", "mala", mala_steps))):
        for r in range(repeats):
            wr_tasks.append(dict(base, method=method, sampler=kind,
                                 steps=steps, midx=mi, rep=r))
    wr_parts = _run_tasks(_pb_wr_worker, wr_tasks, cfg)
    rows = [r for part in wr_parts for r in part["rows"]]
    budget_of = {p["rep"]: p["final_evals"]
                 for p in wr_parts if p["method"] == "wr-nuts"}
    bl_tasks = [dict(base, rep=r, budget=budget_of[r], steps=mala_steps,
                     min_population=int(cfg.get("min_population", 50)),
                     min_pt_steps=int(cfg.get("min_pt_steps", 50)))
                for r in range(repeats)]
    for part in _run_tasks(_pb_baseline_worker, bl_tasks, cfg):
        rows.extend(part)
    return rows


# ---------------------------------------------------------------------------
# sampler-count: how the pool size affects the final estimate
# ---------------------------------------------------------------------------

def _count_worker(task) -> list:
    target = target_from_config(task["target"])
    truth = target.mean_truth
    box = _box(target.dim, task["init_halfwidth"])
    seed, midx, rep = task["seed"], task["midx"], task["rep"]
    M = int(task["count"])
    chains = make_sampler_pool(target, task["sampler"], M,
                               _seq(seed, midx, rep, 1), box)
    rc = RunConfig(rounds=int(task["n"]) // int(task["batch_size"]),
                   batch_size=int(task["batch_size"]),
                   bandit=task["bandit"], region_strategy=task["strategy"],
                   alpha=float(task["alpha"]),
                   knn_entropy=int(task["knn_entropy"]),
                   seed=_seed_int(seed, midx, rep, 2),
                   checkpoints=tuple(int(c) for c in task["checkpoints"]))
    cache = GammaCache(preload=task["gamma"])
    tr = run_clustered_bandit(target, chains, rc, cache)
    return _checkpoint_rows(f"{task['bandit']}-m{M}", rep, tr, truth)


def run_sampler_count(cfg: dict) -> list:
    _validate_common(cfg, "sampler-count")
    counts = [int(m) for m in cfg.get("counts", (10, 20, 40))]
    bandits = list(cfg.get("bandits", ("ucb1", "uniform")))
    alpha = float(cfg.get("alpha", 0.99))
    knn = int(cfg.get("knn_entropy", 3))
    dim = int(cfg["target"].get("dim", 2))
    n = int(cfg.get("n", 4000))
    base = dict(seed=int(cfg.get("seed", 0)), target=cfg["target"],
                sampler=cfg.get("sampler", "nuts"),
                n=n, batch_size=int(cfg.get("batch_size", 10)),
                strategy=cfg.get("region_strategy", "equal"),
                alpha=alpha, knn_entropy=knn,
                init_halfwidth=float(cfg.get("init_halfwidth",
                                             cfg["target"].get("mode_box", 10.0))),
                checkpoints=list(cfg.get("checkpoints", (n,))),
                gamma=_gamma_values(dim, knn, alpha, cfg.get("gamma_cache")))
    methods = [(b, m) for b in bandits for m in counts]
    tasks = [dict(base, bandit=b, count=m, midx=mi, rep=r)
             for mi, (b, m) in enumerate(methods)
             for r in range(int(cfg.get("repeats", 5)))]
    return [r for part in _run_tasks(_count_worker, tasks, cfg) for r in part]


# ---------------------------------------------------------------------------
# sensor: localization on the range-observation posterior
# ---------------------------------------------------------------------------

def _sensor_wr_worker(task) -> dict:
    model = sensor_world_from_config(task["target"])
    target = make_sensor_posterior(model)
    box = (np.full(model.dim, -model.side / 2.0),
           np.full(model.dim, model.side / 2.0))
    seed, rep = task["seed"], task["rep"]
    chains = make_sampler_pool(target, "nuts", int(task["count"]),
                               _seq(seed, 0, rep, 1), box)
    rc = RunConfig(rounds=int(task["n"]) // int(task["batch_size"]),
                   batch_size=int(task["batch_size"]),
                   bandit=task["bandit"], region_strategy=task["strategy"],
                   alpha=float(task["alpha"]),
                   knn_entropy=int(task["knn_entropy"]),
                   seed=_seed_int(seed, 0, rep, 2),
                   checkpoints=tuple(int(c) for c in task["checkpoints"]))
    cache = GammaCache(preload=task["gamma"])
    tr = run_clustered_bandit(target, chains, rc, cache)
    rows = [("wr-nuts", rep, c.n_samples,
             localization_error(c.sample.points, c.sample.weights, model.truth),
             c.evals)
            for c in tr.checkpoints]
    return {"rows": rows, "rep": rep, "final_evals": target.evals.total}


def _sensor_individual_worker(task) -> list:
    model = sensor_world_from_config(task["target"])
    target = make_sensor_posterior(model)
    box = (np.full(model.dim, -model.side / 2.0),
           np.full(model.dim, model.side / 2.0))
    seed, rep = task["seed"], task["rep"]
    count = int(task["count"])
    chains = make_sampler_pool(target, "nuts", count,
                               _seq(seed, 1, rep, 1), box)
    per_chain = [max(1, int(c) // count) for c in task["checkpoints"]]
    rows, done = [], 0
    for ck, per in zip(task["checkpoints"], per_chain):
        if per > done:
            for c in chains:
                c.batch(per - done)
            done = per
        errs = []
        for c in chains:
            pts = c.history_points()
            errs.append(localization_error(pts, np.ones(pts.shape[0]),
                                           model.truth))
        rows.append(("nuts", rep, int(ck), float(np.mean(errs)),
                     target.evals.total))
        pooled = np.concatenate([c.history_points() for c in chains], axis=0)
        rows.append(("parallel-nuts", rep, int(ck),
                     localization_error(pooled, np.ones(pooled.shape[0]),
                                        model.truth),
                     target.evals.total))
    return rows


def _sensor_baseline_worker(task) -> list:
    model = sensor_world_from_config(task["target"])
    target = make_sensor_posterior(model)
    box = (np.full(model.dim, -model.side / 2.0),
           np.full(model.dim, model.side / 2.0))
    seed, rep = task["seed"], task["rep"]
    ladder = TEMPERATURE_LADDER
    budget = int(task["budget"])
    step = float(task["mala_step"])
    P = max(int(task["min_population"]), budget // (2 * len(ladder)))
    n_pt = max(int(task["min_pt_steps"]), budget // (2 * len(ladder)) - 1)
    rows = []
    rng = np.random.default_rng(_seq(seed, 2, rep, 10))
    ws, diag = run_smc(target, ladder, P, step, rng, init_box=box)
    rows.append(("smc", rep, P,
                 localization_error(ws.points, ws.weights, model.truth),
                 diag["evals"]))
    rng = np.random.default_rng(_seq(seed, 2, rep, 40))
    ws, diag = run_pt(target, ladder, step, rng, n_pt, init_box=box)
    rows.append(("pt", rep, n_pt,
                 localization_error(ws.points, ws.weights, model.truth),
                 diag["evals"]))
    return rows


def run_sensor(cfg: dict) -> list:
    _validate_common(cfg, "sensor")
    alpha = float(cfg.get("alpha", 0.99))
    knn = int(cfg.get("knn_entropy", 3))
    model = sensor_world_from_config(cfg.get("target", {}))
    gamma = _gamma_values(model.dim, knn, alpha, cfg.get("gamma_cache"))
    repeats = int(cfg.get("repeats", 10))
    base = dict(seed=int(cfg.get("seed", 0)), target=cfg.get("target", {}),
                count=int(cfg.get("count", 10)),
                n=int(cfg.get("n", 2000)),
                batch_size=int(cfg.get("batch_size", 10)),
                bandit=cfg.get("bandit", "ucb1"),
                strategy=cfg.get("region_strategy", "equal"),
                alpha=alpha, knn_entropy=knn,
                checkpoints=list(cfg.get("checkpoints", (500, 1000, 2000))),
                gamma=gamma)
    wr_tasks = [dict(base, rep=r) for r in range(repeats)]
    wr_parts = _run_tasks(_sensor_wr_worker, wr_tasks, cfg)
    rows = [r for part in wr_parts for r in part["rows"]]
    ind_tasks = [dict(base, rep=r) for r in range(repeats)]
    for part in _run_tasks(_sensor_individual_worker, ind_tasks, cfg):
        rows.extend(part)
    if cfg.get("include_baselines", True):
        budget_of = {p["rep"]: p["final_evals"] for p in wr_parts}
        bl_tasks = [dict(base, rep=r, budget=budget_of[r],
                         mala_step=float(cfg.get("mala_step", 0.3)),
                         min_population=int(cfg.get("min_population", 50)),
                         min_pt_steps=int(cfg.get("min_pt_steps", 50)))
                    for r in range(repeats)]
        for part in _run_tasks(_sensor_baseline_worker, bl_tasks, cfg):
            rows.extend(part)
    return rows


RUNNERS = {
    "block-agreement": run_block_agreement,
    "unimodal": run_unimodal,
    "multimodal-oracle": run_multimodal_oracle,
    "multimodal-general": run_multimodal_general,
    "weight-comparison": run_weight_comparison,
    "parallel-baselines": run_parallel_baselines,
    "sampler-count": run_sampler_count,
    "sensor": run_sensor,
}


def run_experiment(kind: str, cfg: dict) -> list:
    try:
        fn = RUNNERS[kind]
    except KeyError:
        raise ValueError(f"unknown experiment kind {kind!r}") from None
    return fn(cfg)
