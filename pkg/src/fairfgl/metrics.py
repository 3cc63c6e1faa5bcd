"""Node-group tags and classification metrics.

Group metrics pool test nodes across clients while tags stay client
relative: a node is *minority* if its class is not a majority class of its
own client, and *heterophilous* if it sits in the lower half of its client's
test nodes ranked by homophily.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .client import majority_classes
from .graph import homophily_scores

log = logging.getLogger(__name__)

UNDEFINED = float("nan")
GROUPS = ("minority", "heterophilous", "hete-min")


def accuracy(preds, labels):
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.size == 0 or preds.shape != labels.shape:
        raise ValueError("accuracy needs aligned, nonempty predictions and labels")
    return float(np.mean(preds == labels))


def per_class_f1(preds, labels, class_set):
    """F1 per class in ``class_set`` order, with 0 for every zero division."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    out = []
    for y in class_set:
        tp = np.sum((preds == y) & (labels == y))
        fp = np.sum((preds == y) & (labels != y))
        fn = np.sum((preds != y) & (labels == y))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        out.append(2 * p * r / (p + r) if p + r else 0.0)
    return np.array(out, dtype=np.float64)


def macro_f1(preds, labels, class_set=None):
    """Unweighted mean of per-class F1 over ``class_set`` (default: classes in ``labels``)."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.size == 0 or preds.shape != labels.shape:
        raise ValueError("macro_f1 needs aligned, nonempty predictions and labels")
    if class_set is None:
        class_set = np.unique(labels)
    class_set = list(class_set)
    if not class_set:
        raise ValueError("class_set is empty")
    return float(np.mean(per_class_f1(preds, labels, class_set)))


@dataclass
class GroupTags:
    """Flags for pooled test nodes; ``client`` and ``node`` locate each one."""

    client: np.ndarray
    node: np.ndarray
    labels: np.ndarray
    is_minority: np.ndarray
    is_heterophilous: np.ndarray

    @property
    def is_hete_min(self):
        return self.is_minority & self.is_heterophilous

    def mask(self, group):
        if group == "all":
            return np.ones(self.node.size, dtype=bool)
        if group == "minority":
            return self.is_minority
        if group == "heterophilous":
            return self.is_heterophilous
        if group == "hete-min":
            return self.is_hete_min
        raise ValueError(f"unknown group {group!r}")

    def counts(self):
        return {
            "test": int(self.node.size),
            "minority": int(self.is_minority.sum()),
            "heterophilous": int(self.is_heterophilous.sum()),
            "hete-min": int(self.is_hete_min.sum()),
        }


def heterophilous_half(scores):
    """Bottom half (rounded up) of ``scores``; ties rank the lower index as more homophilous."""
    n = len(scores)
    order = np.lexsort((np.arange(n), -np.asarray(scores)))
    flags = np.ones(n, dtype=bool)
    flags[order[: n // 2]] = False
    return flags


def client_tags(g):
    """``(test node ids, is_minority, is_heterophilous)`` for one client subgraph."""
    test = np.flatnonzero(g.test_mask)
    majority = majority_classes(g, "all-labels")
    minority = np.array([int(y) not in majority for y in g.labels[test]], dtype=bool)
    if test.size < 2:
        log.warning("client with %d test node(s): none tagged heterophilous", test.size)
        hete = np.zeros(test.size, dtype=bool)
    else:
        hete = heterophilous_half(homophily_scores(g)[test])
    return test, minority, hete


def build_group_tags(client_graphs):
    parts = []
    for cid, g in enumerate(client_graphs):
        test, minority, hete = client_tags(g)
        parts.append((np.full(test.size, cid), test, g.labels[test], minority, hete))
    cols = list(zip(*parts)) if parts else [[]] * 5
    return GroupTags(*(np.concatenate(c) if len(c) else np.zeros(0) for c in cols))


def group_f1(preds, labels, tags, group):
    """Macro-F1 restricted to a tag group, over the classes present in it.

    Returns :data:`UNDEFINED` (nan) for an empty group.
    """
    m = tags.mask(group)
    if not m.any():
        return UNDEFINED
    labels = np.asarray(labels)[m]
    return macro_f1(np.asarray(preds)[m], labels, np.unique(labels))


@dataclass
class MetricsBundle:
    accuracy: float
    overall_f1: float
    min_f1: float
    hete_f1: float
    hete_min_f1: float
    per_class_f1: list = field(default_factory=list)

    def as_dict(self):
        return asdict(self)


def evaluate_test(preds, tags, num_classes):
    """Metrics on pooled test nodes; ``preds`` is aligned with ``tags``."""
    labels = tags.labels
    classes = list(range(num_classes))
    return MetricsBundle(
        accuracy=accuracy(preds, labels),
        overall_f1=macro_f1(preds, labels, np.unique(labels)),
        min_f1=group_f1(preds, labels, tags, "minority"),
        hete_f1=group_f1(preds, labels, tags, "heterophilous"),
        hete_min_f1=group_f1(preds, labels, tags, "hete-min"),
        per_class_f1=per_class_f1(preds, labels, classes).tolist(),
    )


def is_undefined(x):
    return x is None or (isinstance(x, float) and math.isnan(x))
