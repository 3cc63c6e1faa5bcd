"""Split one graph into per-client node sets.

Two partitioners are provided: a one-pass Fennel-style streaming min-cut
partitioner (topology driven) and a Dirichlet label-skew partitioner
(distribution driven).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, PartitionError
from .graph import induce_subgraph

log = logging.getLogger(__name__)

MAX_RETRIES = 20


@dataclass(frozen=True, eq=False)
class PartitionAssignment:
    part_of: np.ndarray
    num_parts: int

    def __post_init__(self):
        p = np.array(self.part_of, dtype=np.int64)
        p.setflags(write=False)
        object.__setattr__(self, "part_of", p)
        if p.size and (p.min() < 0 or p.max() >= self.num_parts):
            raise ValueError("part id out of range")
        sizes = np.bincount(p, minlength=self.num_parts)
        if np.any(sizes == 0):
            raise PartitionError(f"empty part(s): {np.flatnonzero(sizes == 0).tolist()}")

    def sizes(self):
        return np.bincount(self.part_of, minlength=self.num_parts)

    def nodes_of(self, part):
        return np.flatnonzero(self.part_of == part)

    def class_histogram(self, g):
        """``num_parts x C`` matrix of label counts per part."""
        H = np.zeros((self.num_parts, g.num_classes), dtype=np.int64)
        np.add.at(H, (self.part_of, g.labels), 1)
        return H


def _check_parts(g, n_parts):
    if n_parts < 2:
        raise ConfigError("n_parts must be >= 2")
    if n_parts > g.num_nodes:
        raise ConfigError(f"n_parts={n_parts} exceeds the number of nodes ({g.num_nodes})")


def partition_fennel(g, n_parts, balance_gamma=1.5, slack=1.1):
    """Streaming Fennel assignment in node-id order.

    Node ``v`` goes to the part maximising
    ``|N(v) ∩ P| - a * ((|P| + 1)**gamma - |P|**gamma)`` (the exact marginal
    balance cost, so an empty part is not free) with
    ``a = sqrt(k) * m / n**1.5``, subject to a hard capacity of
    ``max(ceil(n/k), floor(slack * n/k))``.  Ties go to the lowest part id.
    Once the number of remaining nodes equals the number of empty parts the
    remaining nodes are sent to those parts, so no part is ever empty.
    """
    _check_parts(g, n_parts)
    if balance_gamma < 1.0:
        raise ConfigError("balance_gamma must be >= 1")
    n, k, m = g.num_nodes, n_parts, g.num_edges
    A = g.adjacency()
    a = np.sqrt(k) * m / n ** 1.5 if m else 1.0
    capacity = max(-(-n // k), int(np.floor(slack * n / k)))

    part_of = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(k, dtype=np.int64)
    for v in range(n):
        empty = np.flatnonzero(sizes == 0)
        if n - v <= empty.size:
            best = int(empty[0])
        else:
            nbrs = A.indices[A.indptr[v]:A.indptr[v + 1]]
            placed = part_of[nbrs]
            gain = np.bincount(placed[placed >= 0], minlength=k).astype(np.float64)
            s = sizes.astype(np.float64)
            score = gain - a * ((s + 1.0) ** balance_gamma - s ** balance_gamma)
            score[sizes >= capacity] = -np.inf
            best = int(np.argmax(score))
        part_of[v] = best
        sizes[best] += 1
    return PartitionAssignment(part_of, k)


def partition_label_skew(g, n_parts, alpha=0.5, seed=0):
    """Dirichlet label-skew split.

    For every class, proportions over the parts are drawn from
    ``Dirichlet(alpha)``; the class's nodes (in a seeded random order) are cut
    at the cumulative proportions.  Smaller ``alpha`` means stronger skew.
    Draws that leave a part empty are retried with the same generator.
    """
    _check_parts(g, n_parts)
    if not alpha > 0:
        raise ConfigError("alpha must be > 0")
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_RETRIES):
        part_of = np.full(g.num_nodes, -1, dtype=np.int64)
        for c in range(g.num_classes):
            idx = np.flatnonzero(g.labels == c)
            if idx.size == 0:
                continue
            idx = idx[rng.permutation(idx.size)]
            props = rng.dirichlet(np.full(n_parts, float(alpha)))
            cuts = np.round(np.cumsum(props)[:-1] * idx.size).astype(np.int64)
            for p, chunk in enumerate(np.split(idx, cuts)):
                part_of[chunk] = p
        if np.all(np.bincount(part_of, minlength=n_parts) > 0):
            return PartitionAssignment(part_of, n_parts)
        log.debug("label-skew draw %d left a part empty; retrying", attempt)
    raise PartitionError(f"could not produce {n_parts} nonempty parts after {MAX_RETRIES} draws")


def split_graph(g, assignment):
    """Induced subgraph for every part, in part-id order."""
    return [induce_subgraph(g, assignment.nodes_of(p)) for p in range(assignment.num_parts)]


def save_assignment(assignment, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# n={assignment.part_of.size} parts={assignment.num_parts}\n")
        fh.write("\n".join(str(int(p)) for p in assignment.part_of) + "\n")


def load_assignment(path):
    values = []
    num_parts = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("parts="):
                        num_parts = int(tok.split("=", 1)[1])
                continue
            if line:
                values.append(int(line))
    if num_parts is None:
        num_parts = max(values) + 1
    return PartitionAssignment(np.array(values), num_parts)
