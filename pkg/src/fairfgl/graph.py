"""Graph container, propagation matrix and homophily statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigError

SPLITS = ("train", "val", "test")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def canonical_edges(edges, num_nodes=None):
    """Return edges as a sorted ``(m, 2)`` int array with ``u < v`` per row.

    Self-loops are rejected, as are duplicate undirected pairs.
    """
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if np.any(e[:, 0] == e[:, 1]):
        raise ValueError("self-loops are not allowed in the edge list")
    if np.any(e < 0) or (num_nodes is not None and np.any(e >= num_nodes)):
        raise ValueError("edge endpoint out of range")
    e = np.sort(e, axis=1)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e = e[order]
    if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
        raise ValueError("duplicate undirected edge")
    return e


@dataclass(frozen=True, eq=False)
class Graph:
    """An undirected, node-labelled graph with transductive split masks.

    Arrays are copied and made read-only on construction, so a ``Graph`` can
    be shared between client trainers without defensive copies.
    """

    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = _frozen(self.features, np.float64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n = x.shape[0]
        y = _frozen(self.labels, np.int64)
        if y.shape != (n,):
            raise ValueError(f"labels must have shape ({n},), got {y.shape}")
        C = int(self.num_classes)
        if C < 1:
            raise ValueError("num_classes must be >= 1")
        if n and (y.min() < 0 or y.max() >= C):
            raise ValueError(f"labels must lie in [0, {C})")
        masks = []
        for name in ("train_mask", "val_mask", "test_mask"):
            m = _frozen(getattr(self, name), bool)
            if m.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            masks.append(m)
        overlap = masks[0].astype(int) + masks[1] + masks[2]
        if np.any(overlap > 1):
            raise ValueError("train/val/test masks must be disjoint")
        e = canonical_edges(self.edges, n)
        e.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "train_mask", masks[0])
        object.__setattr__(self, "val_mask", masks[1])
        object.__setattr__(self, "test_mask", masks[2])
        object.__setattr__(self, "num_classes", C)

    @property
    def num_nodes(self):
        return self.features.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def num_features(self):
        return self.features.shape[1]

    def adjacency(self):
        """Symmetric 0/1 adjacency without self-loops, CSR."""
        n = self.num_nodes
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u))
        A = sp.coo_matrix((data, (np.r_[u, v], np.r_[v, u])), shape=(n, n))
        return A.tocsr()

    def class_counts(self, mask=None):
        y = self.labels if mask is None else self.labels[mask]
        return np.bincount(y, minlength=self.num_classes)

    def split_of(self):
        """Per-node split name; nodes outside every mask are reported as ``"none"``."""
        out = np.full(self.num_nodes, "none", dtype=object)
        for name, m in zip(SPLITS, (self.train_mask, self.val_mask, self.test_mask)):
            out[m] = name
        return out

    def same_as(self, other):
        """Exact structural and numerical equality."""
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.train_mask, other.train_mask)
            and np.array_equal(self.val_mask, other.val_mask)
            and np.array_equal(self.test_mask, other.test_mask)
        )


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    matrix: sp.csr_matrix
    kernel_coefficient: float

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    @property
    def T(self):
        return self.matrix.T

    def toarray(self):
        return self.matrix.toarray()


def normalize_adjacency(g, r=0.5):
    """``D^(r-1) (A + I) D^(-r)`` where ``D`` is the degree matrix of ``A + I``.

    ``r = 1/2`` gives the symmetric GCN normalisation, ``r = 0`` the
    row-stochastic random-walk matrix and ``r = 1`` its column-stochastic
    transpose.
    """
    if not 0.0 <= r <= 1.0:
        raise ConfigError(f"kernel coefficient r must lie in [0, 1], got {r}")
    n = g.num_nodes
    A_hat = (g.adjacency() + sp.identity(n, format="csr")).tocsr()
    deg = np.asarray(A_hat.sum(axis=1)).ravel()
    left = sp.diags(deg ** (r - 1.0))
    right = sp.diags(deg ** (-r))
    M = (left @ A_hat @ right).tocsr()
    M.sort_indices()
    return NormalizedAdjacency(M, float(r))


def homophily_scores(g, use_labeled_only=False):
    """Fraction of each node's neighbours sharing its label.

    With ``use_labeled_only`` only neighbours in the train mask are counted;
    the node's own label is still used.  Nodes with no admitted neighbour
    score 0.
    """
    A = g.adjacency()
    if use_labeled_only:
        A = A @ sp.diags(g.train_mask.astype(np.float64))
    A = A.tocsr()
    y = g.labels
    rows = np.repeat(np.arange(g.num_nodes), np.diff(A.indptr))
    cols = A.indices
    w = A.data
    same = np.bincount(rows, weights=w * (y[rows] == y[cols]), minlength=g.num_nodes)
    total = np.bincount(rows, weights=w, minlength=g.num_nodes)
    out = np.zeros(g.num_nodes)
    nz = total > 0
    out[nz] = same[nz] / total[nz]
    return out


def induce_subgraph(g, nodes):
    """Subgraph on ``nodes`` (reindexed in ascending original id order)."""
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    if nodes.size == 0:
        raise ValueError("cannot induce a subgraph on an empty node set")
    if nodes[0] < 0 or nodes[-1] >= g.num_nodes:
        raise ValueError("node id out of range")
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[nodes] = np.arange(nodes.size)
    e = remap[g.edges]
    e = e[(e >= 0).all(axis=1)] if len(e) else np.zeros((0, 2), dtype=np.int64)
    return Graph(
        features=g.features[nodes],
        labels=g.labels[nodes],
        edges=e,
        train_mask=g.train_mask[nodes],
        val_mask=g.val_mask[nodes],
        test_mask=g.test_mask[nodes],
        num_classes=g.num_classes,
    )


def edge_cut(g, part_of):
    part_of = np.asarray(part_of)
    if g.num_edges == 0:
        return 0
    return int(np.sum(part_of[g.edges[:, 0]] != part_of[g.edges[:, 1]]))
