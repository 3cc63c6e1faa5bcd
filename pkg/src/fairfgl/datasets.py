"""Synthetic planted-partition graphs and the canonical text format.

Canonical format (UTF-8)::

    n m f C
    <id> <label> <split> <f_0> ... <f_{f-1}>     # n node lines, ids 0..n-1 in order
    <u> <v>                                      # m edge lines, u < v

``split`` is one of ``train``, ``val``, ``test``.  Blank lines and lines
starting with ``#`` are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, GraphFormatError
from .graph import Graph

DEFAULT_SPLIT = (0.2, 0.4, 0.4)


@dataclass(frozen=True)
class SbmConfig:
    block_sizes: tuple
    p_in: float
    p_out: float
    feature_dim: int = 32
    feature_center_scale: float = 1.0
    seed: int = 0
    split: tuple = field(default=DEFAULT_SPLIT)
    shuffle_nodes: bool = True

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        object.__setattr__(self, "split", tuple(float(s) for s in self.split))
        if not self.block_sizes or min(self.block_sizes) < 1:
            raise ConfigError("block_sizes must be a nonempty list of counts >= 1")
        for name in ("p_in", "p_out"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        if self.feature_dim < len(self.block_sizes):
            raise ConfigError("feature_dim must be >= number of classes (one-hot class centers)")
        if len(self.split) != 3 or min(self.split) < 0 or not math.isclose(sum(self.split), 1.0):
            raise ConfigError("split must be three nonnegative fractions summing to 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")


def _split_masks(labels, ratios, rng):
    n = labels.size
    masks = np.zeros((3, n), dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_train = max(1, int(round(ratios[0] * idx.size)))
        n_val = min(idx.size - n_train, int(round(ratios[1] * idx.size)))
        masks[0, idx[:n_train]] = True
        masks[1, idx[n_train:n_train + n_val]] = True
        masks[2, idx[n_train + n_val:]] = True
    return masks


def generate_sbm(cfg):
    """Sample a stochastic-block-model graph with Gaussian class features.

    Class ``c`` features are ``feature_center_scale * e_c + N(0, I)``.  Each
    unordered node pair is connected independently with probability ``p_in``
    (same block) or ``p_out``.  Masks follow ``cfg.split`` within each class.
    The output is a pure function of ``cfg``.
    """
    rng = np.random.default_rng(cfg.seed)
    sizes = np.array(cfg.block_sizes)
    C = sizes.size
    n = int(sizes.sum())
    labels = np.repeat(np.arange(C), sizes)
    if cfg.shuffle_nodes:
        labels = labels[rng.permutation(n)]

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, cfg.p_in, cfg.p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)

    centers = np.zeros((C, cfg.feature_dim))
    centers[np.arange(C), np.arange(C)] = cfg.feature_center_scale
    features = centers[labels] + rng.standard_normal((n, cfg.feature_dim))

    train, val, test = _split_masks(labels, cfg.split, rng)
    return Graph(features, labels, edges, train, val, test, C)


def _fmt(x):
    return repr(float(x))


def save_graph(g, path):
    split = g.split_of()
    if np.any(split == "none"):
        raise ValueError("every node needs a split to be written in canonical format")
    lines = [f"{g.num_nodes} {g.num_edges} {g.num_features} {g.num_classes}"]
    for i in range(g.num_nodes):
        feats = " ".join(_fmt(v) for v in g.features[i])
        lines.append(f"{i} {g.labels[i]} {split[i]} {feats}".rstrip())
    lines.extend(f"{u} {v}" for u, v in g.edges)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _ints(tokens, lineno, what):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise GraphFormatError(f"expected integers in {what}", lineno) from None


def load_graph(path):
    """Parse a canonical-format file into a validated :class:`Graph`."""
    with open(path, encoding="utf-8") as fh:
        rows = [
            (i, line.split())
            for i, line in enumerate(fh, start=1)
            if line.strip() and not line.lstrip().startswith("#")
        ]
    if not rows:
        raise GraphFormatError("empty file", 1)
    lineno, head = rows[0]
    if len(head) != 4:
        raise GraphFormatError("header must be 'n m f C'", lineno)
    n, m, f, C = _ints(head, lineno, "header")
    if min(n, m, f) < 0 or C < 1:
        raise GraphFormatError("header values out of range", lineno)
    if len(rows) != 1 + n + m:
        last = rows[-1][0]
        raise GraphFormatError(f"expected {n} node lines and {m} edge lines, found {len(rows) - 1} data lines", last)

    features = np.zeros((n, f))
    labels = np.zeros(n, dtype=np.int64)
    masks = {s: np.zeros(n, dtype=bool) for s in ("train", "val", "test")}
    for k, (lineno, tok) in enumerate(rows[1:1 + n]):
        if len(tok) != 3 + f:
            raise GraphFormatError(f"node line needs {3 + f} fields, got {len(tok)}", lineno)
        node_id, label = _ints(tok[:2], lineno, "node line")
        if node_id != k:
            raise GraphFormatError(f"node ids must appear in order; expected {k}, got {node_id}", lineno)
        if not 0 <= label < C:
            raise GraphFormatError(f"label {label} out of range [0, {C})", lineno)
        if tok[2] not in masks:
            raise GraphFormatError(f"unknown split {tok[2]!r}", lineno)
        try:
            features[k] = [float(t) for t in tok[3:]]
        except ValueError:
            raise GraphFormatError("non-numeric feature value", lineno) from None
        labels[k] = label
        masks[tok[2]][k] = True

    edges = np.zeros((m, 2), dtype=np.int64)
    seen = set()
    for k, (lineno, tok) in enumerate(rows[1 + n:]):
        if len(tok) != 2:
            raise GraphFormatError("edge line must be 'u v'", lineno)
        u, v = _ints(tok, lineno, "edge line")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"edge endpoint out of range for n={n}: {u} {v}", lineno)
        if u >= v:
            raise GraphFormatError("edge lines must satisfy u < v", lineno)
        if (u, v) in seen:
            raise GraphFormatError(f"duplicate edge {u} {v}", lineno)
        seen.add((u, v))
        edges[k] = (u, v)

    return Graph(features, labels, edges, masks["train"], masks["val"], masks["test"], C)


def graph_stats(g):
    return {
        "n": g.num_nodes,
        "m": g.num_edges,
        "f": g.num_features,
        "C": g.num_classes,
        "class_counts": g.class_counts().tolist(),
    }
