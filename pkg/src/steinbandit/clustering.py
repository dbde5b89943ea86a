"""Chain grouping and final sample partitioning.

Two distinct mechanisms: a per-round union-find grouping of chains whose
latest batches overlap (nearest-neighbor contact), and a final k-means
partition of all emitted points used to attach region weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class ChainGrouping:
    """Partition of sampler ids into clusters of overlapping chains."""

    clusters: list            # list of sorted tuples of sampler ids
    round_index: int = -1

    def cluster_of(self, sampler_id: int) -> int:
        for ci, members in enumerate(self.clusters):
            if sampler_id in members:
                return ci
        raise KeyError(sampler_id)


@dataclass
class FinalPartition:
    assignment: np.ndarray    # (n,) cluster id per point
    centroids: np.ndarray     # (M, d)

    def nonempty_clusters(self) -> np.ndarray:
        return np.unique(self.assignment)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def group_chains(last_batches, n_neighbors: int = 5, round_index: int = -1) -> ChainGrouping:
    """Merge chains whose latest batches touch.

    All last-batch points are pooled; two chains land in the same cluster
    whenever any point of one has a point of the other among its n_neighbors
    nearest pool neighbors (one-directional contact suffices).  Exact brute
    force: pools are at most a few thousand points.
    """
    if not last_batches:
        raise ValueError("need at least one batch")
    pts = np.concatenate([b.points for b in last_batches], axis=0)
    owner = np.concatenate([np.full(b.size, i) for i, b in enumerate(last_batches)])
    n = pts.shape[0]
    M = len(last_batches)
    uf = _UnionFind(M)
    k = min(n_neighbors, n - 1)
    if k >= 1 and M > 1:
        for start in range(0, n, 512):
            chunk = pts[start:start + 512]
            d2 = ((chunk[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
            for row in range(chunk.shape[0]):
                d2[row, start + row] = np.inf  # exclude self
            nbr = np.argpartition(d2, k - 1, axis=1)[:, :k]
            for row in range(chunk.shape[0]):
                me = owner[start + row]
                for other in owner[nbr[row]]:
                    if other != me:
                        uf.union(int(me), int(other))
    roots = {}
    for i in range(M):
        roots.setdefault(uf.find(i), []).append(i)
    clusters = sorted(tuple(sorted(v)) for v in roots.values())
    return ChainGrouping(clusters=clusters, round_index=round_index)


def _assign(points, centroids):
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d2, axis=1), d2


def kmeans(points, n_clusters: int, rng, max_iter: int = 100) -> FinalPartition:
    """Lloyd's algorithm with k-means++ seeding.

    Runs to an assignment fixpoint or max_iter; a cluster that empties is
    re-seeded at the point currently farthest from its own centroid.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = X.shape[0]
    if n < n_clusters:
        raise ValueError("need at least as many points as clusters")
    # k-means++ seeding
    centroids = np.empty((n_clusters, X.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, n_clusters):
        total = d2.sum()
        if total <= 0:
            centroids[j] = X[int(rng.integers(n))]
        else:
            centroids[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))
    assignment = np.full(n, -1)
    for _ in range(max_iter):
        new_assignment, dist2 = _assign(X, centroids)
        own_dist = dist2[np.arange(n), new_assignment].copy()
        for j in range(n_clusters):
            mask = new_assignment == j
            if mask.any():
                centroids[j] = X[mask].mean(axis=0)
            else:
                far = int(np.argmax(own_dist))
                centroids[j] = X[far]
                new_assignment[far] = j
                own_dist[far] = -1.0  # don't hand the same point to another empty cluster
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
    return FinalPartition(assignment=assignment, centroids=centroids)


def reweight(points, assignment, cluster_weights) -> "WeightedSample":
    """Spread each cluster's weight uniformly over its members.

    cluster_weights maps nonempty cluster ids (ascending order) to simplex
    weights; every point of cluster i receives w_i / n_i.  Total mass is
    renormalized with compensated summation so the weights sum to one.
    """
    from .ksd import WeightedSample

    assignment = np.asarray(assignment)
    ids = np.unique(assignment)
    w = np.asarray(cluster_weights, dtype=float).ravel()
    if w.size != ids.size:
        raise ValueError("need exactly one weight per nonempty cluster")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.empty(points.shape[0])
    for wi, cid in zip(w, ids):
        mask = assignment == cid
        cnt = int(mask.sum())
        assert cnt > 0, "empty cluster with positive weight"
        weights[mask] = wi / cnt
    weights = weights / math.fsum(weights)
    return WeightedSample(points, weights)
