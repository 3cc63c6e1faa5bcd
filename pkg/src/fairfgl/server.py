"""Server side of a round: cluster, aggregate, pair and build deviated models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .client import DeviatedPackage
from .exceptions import ConfigError
from .gcn import ModelParams


@dataclass
class ServerConfig:
    eta: float | None = None  # None -> 1 / K
    k_max: int = 8
    kmeans_restarts: int = 5
    max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta must be > 0 (or None for 1/K)")
        if self.k_max < 1 or self.kmeans_restarts < 1 or self.max_iter < 1:
            raise ConfigError("k_max, kmeans_restarts and max_iter must be >= 1")


@dataclass
class RoundUploads:
    """Client updates received in round ``round_index``, keyed by client id."""

    updates: dict
    round_index: int = 0

    def __post_init__(self):
        if not self.updates:
            raise ValueError("a round needs at least one upload")
        sizes = {u.delta.size for u in self.updates.values()}
        if len(sizes) != 1:
            raise ValueError("uploads are shaped for different models")

    @property
    def client_ids(self):
        return sorted(self.updates)

    def dense_matrix(self):
        """Rows are densified deltas in ascending client-id order."""
        return np.stack([densify(self.updates[c].delta, self.updates[c].delta.size) for c in self.client_ids])


@dataclass
class ClusteringResult:
    k: int
    assignment: np.ndarray  # cluster id per client, ascending client-id order
    silhouette: float = float("nan")  # nan when k == 1
    client_ids: list = field(default_factory=list)

    def members(self, cluster):
        return [c for c, a in zip(self.client_ids, self.assignment) if a == cluster]


def densify(delta, size=None):
    size = delta.size if size is None else size
    if len(delta) and (delta.positions.min() < 0 or delta.positions.max() >= size):
        raise IndexError("delta position outside the model")
    out = np.zeros(size)
    out[delta.positions] = delta.values
    return out


def _pairwise(points):
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def silhouette_score(points, assignment):
    """Mean silhouette with singleton points and ``max(a, b) == 0`` scored 0."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(assignment)
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    D = _pairwise(points)
    s = np.zeros(len(points))
    for i in range(len(points)):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = D[i, own].sum() / (own.sum() - 1)
        b = min(D[i, labels == c].mean() for c in clusters if c != labels[i])
        m = max(a, b)
        s[i] = 0.0 if m == 0 else (b - a) / m
    return float(s.mean())


def _kmeans_pp_init(points, k, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((points[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(points[idx])
    return np.array(centers)


def _fill_empty(points, labels, centers, k):
    # move the point farthest from its center (in a non-singleton cluster) into each empty cluster
    for j in range(k):
        if np.any(labels == j):
            continue
        counts = np.bincount(labels, minlength=k)
        d = ((points - centers[labels]) ** 2).sum(1)
        d[counts[labels] <= 1] = -1.0
        i = int(np.argmax(d))
        labels[i] = j
        centers[j] = points[i]
    return labels


def kmeans(points, k, rng, max_iter=100):
    """Lloyd iterations from a k-means++ start; stops when assignments repeat.

    Returns ``(labels, inertia)``; every cluster is nonempty when ``k <= n``.
    """
    centers = _kmeans_pp_init(points, k, rng)
    labels = None
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None]) ** 2).sum(-1)
        new = _fill_empty(points, np.argmin(d2, axis=1), centers, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([points[labels == j].mean(axis=0) for j in range(k)])
    inertia = float(((points - centers[labels]) ** 2).sum())
    return labels, inertia


def _as_uploads(uploads):
    return uploads if isinstance(uploads, RoundUploads) else RoundUploads(dict(uploads))


def cluster_updates(uploads, cfg):
    """Choose ``k`` in ``2..min(k_max, N-1)`` by silhouette of k-means clusterings.

    Per ``k`` the restart with the highest silhouette is kept (lower inertia breaks
    ties), since silhouette is what the server selects on.  ``N <= 2`` or a
    best silhouette that is not positive (e.g. all deltas identical) gives a
    single cluster; ties go to the smaller ``k``.
    """
    uploads = _as_uploads(uploads)
    ids = uploads.client_ids
    N = len(ids)
    single = ClusteringResult(1, np.zeros(N, dtype=np.int64), float("nan"), ids)
    k_hi = min(cfg.k_max, N - 1)
    if N <= 2 or k_hi < 2:
        return single
    points = uploads.dense_matrix()
    rng = np.random.default_rng([cfg.seed, uploads.round_index])
    best = single
    best_score = 0.0
    for k in range(2, k_hi + 1):
        runs = [kmeans(points, k, rng, cfg.max_iter) for _ in range(cfg.kmeans_restarts)]
        scored = [(silhouette_score(points, lab), -inertia, lab) for lab, inertia in runs]
        score, _, labels = max(scored, key=lambda r: r[:2])
        if score > best_score:
            best, best_score = ClusteringResult(k, labels.copy(), score, ids), score
    return best


def aggregate_round(uploads, clustering, W_global, cfg):
    """Sample-weighted mean delta per cluster, summed across clusters with rate ``eta``."""
    uploads = _as_uploads(uploads)
    eta = cfg.eta if cfg.eta is not None else 1.0 / clustering.k
    size = W_global.num_weights
    total = np.zeros(size)
    for c in range(clustering.k):
        members = clustering.members(c)
        n_k = sum(uploads.updates[i].num_train_samples for i in members)
        if n_k <= 0:
            raise ValueError(f"cluster {c} holds no training samples")
        cluster_delta = np.zeros(size)
        for i in members:
            u = uploads.updates[i]
            cluster_delta += (u.num_train_samples / n_k) * densify(u.delta, size)
        total += eta * cluster_delta
    return W_global.with_flat(W_global.flat() + total)


TIE_TOL = 1e-12


def _cosine_matrix(points):
    norms = np.linalg.norm(points, axis=1)
    S = np.zeros((len(points), len(points)))
    nz = norms > 0
    S[np.ix_(nz, nz)] = (points[nz] @ points[nz].T) / np.outer(norms[nz], norms[nz])
    return S


def pair_deviated(uploads):
    """Map each client to the peer whose delta has the lowest cosine similarity.

    Zero deltas have cosine 0 with everything; ties (within ``TIE_TOL``, so
    that rounding noise cannot break them) go to the smallest peer id.
    """
    uploads = _as_uploads(uploads)
    ids = uploads.client_ids
    if len(ids) < 2:
        return {}
    S = _cosine_matrix(uploads.dense_matrix())
    np.fill_diagonal(S, np.inf)
    return {ids[i]: ids[int(np.flatnonzero(row <= row.min() + TIE_TOL)[0])] for i, row in enumerate(S)}


def build_deviated_packages(W_global, uploads, pairs):
    """``W_global + delta_partner`` with the partner's support as mask, per client."""
    uploads = _as_uploads(uploads)
    base = W_global.flat()
    out = {}
    for i, j in sorted(pairs.items()):
        delta = uploads.updates[j].delta
        params = W_global.with_flat(base + densify(delta, base.size))
        out[i] = DeviatedPackage(ModelParams(params.W1, params.W2, W_global.alpha_logit), delta.support())
    return out
