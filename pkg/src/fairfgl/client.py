"""One client's local round.

Per epoch the client trains the fused model (history + local weights) on
cross-entropy, distillation from the frozen history model on unlabeled
nodes, and majority alignment of heterophilous majority-class nodes towards
homophilous prototypes.  When the server supplied a deviated package, the
gradient is corrected against the deviated model's gradient on the masked
coordinates before the step.  After training only the top-k changed
weights are uploaded, as signed deltas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .exceptions import ConfigError
from .gcn import (
    KLTerm,
    LossSpec,
    ModelParams,
    fuse,
    gcn_forward,
    kl_rows,
    optimizer_step,
    value_and_grad,
)
from .graph import homophily_scores, normalize_adjacency

HISTORY_WINDOW = 5


@dataclass
class FairnessLossConfig:
    lambda_distill: float = 1.0
    lambda_struct: float = 1.0
    margin: float = 0.1
    topk_ratio: float = 0.4
    homophily_threshold: float = 0.5
    local_epochs: int = 3
    fine_tune_epochs: int = 1
    history_window: int = HISTORY_WINDOW
    use_fusion: bool = True
    temperature: float = 1.0

    def __post_init__(self):
        if self.lambda_distill < 0 or self.lambda_struct < 0 or self.margin < 0:
            raise ConfigError("lambda_distill, lambda_struct and margin must be >= 0")
        if not 0 < self.topk_ratio <= 1:
            raise ConfigError("topk_ratio must lie in (0, 1]")
        if not 0 <= self.homophily_threshold <= 1:
            raise ConfigError("homophily_threshold must lie in [0, 1]")
        if self.local_epochs < 1 or self.fine_tune_epochs < 0:
            raise ConfigError("local_epochs must be >= 1 and fine_tune_epochs >= 0")
        if self.history_window < 1:
            raise ConfigError("history_window must be >= 1")
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0")

    @classmethod
    def disabled(cls, **overrides):
        """Every fairness mechanism switched off; training reduces to plain local GD."""
        kw = dict(
            lambda_distill=0.0, lambda_struct=0.0, topk_ratio=1.0,
            fine_tune_epochs=0, history_window=1, use_fusion=False,
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass
class SparseDelta:
    """Signed weight changes at sorted flat positions into ``concat(W1, W2)``."""

    positions: np.ndarray
    values: np.ndarray
    size: int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.positions.shape != self.values.shape:
            raise ValueError("positions and values must have the same length")
        if self.positions.size and (self.positions[0] < 0 or self.positions[-1] >= self.size):
            raise ValueError("delta position out of range")
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("delta positions must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("delta values must be finite")

    def __len__(self):
        return int(self.positions.size)

    def support(self):
        m = np.zeros(self.size, dtype=bool)
        m[self.positions] = True
        return m


@dataclass
class DeviatedPackage:
    params: ModelParams
    mask: np.ndarray  # flat boolean over concat(W1, W2)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.params.num_weights,):
            raise ValueError("mask must cover every weight of the deviated model")


@dataclass
class ClientUpdate:
    delta: SparseDelta
    num_train_samples: int
    train_loss_trace: list = field(default_factory=list)

    @property
    def transmitted_coords(self):
        return len(self.delta)


@dataclass
class ClientState:
    subgraph: object
    norm_adj: object
    local_params: ModelParams
    global_history: list = field(default_factory=list)
    rng_seed: int = 0

    @classmethod
    def create(cls, subgraph, init, r=0.5, rng_seed=0):
        if not subgraph.train_mask.any():
            raise ConfigError("client subgraph has no training nodes")
        return cls(subgraph, normalize_adjacency(subgraph, r), init.copy(), [], rng_seed)


def build_history_model(global_history, window=HISTORY_WINDOW):
    """Elementwise mean of the last ``window`` global models."""
    if not global_history:
        raise ValueError("history is empty")
    recent = global_history[-window:]
    W1 = np.mean([p.W1 for p in recent], axis=0)
    W2 = np.mean([p.W2 for p in recent], axis=0)
    return ModelParams(W1, W2, recent[-1].alpha_logit)


def fused_params(local, hist):
    """``sigmoid(local.alpha_logit) * hist + (1 - alpha) * local``."""
    if local.W1.shape != hist.W1.shape or local.W2.shape != hist.W2.shape:
        raise ValueError("history and local shapes differ")
    return fuse(local, hist)


def majority_classes(subgraph, basis="train-labels"):
    """Classes whose count is strictly above the mean count per class."""
    if basis == "train-labels":
        counts = subgraph.class_counts(subgraph.train_mask)
    elif basis == "all-labels":
        counts = subgraph.class_counts()
    else:
        raise ValueError(f"unknown basis {basis!r}")
    total = counts.sum()
    if total == 0:
        raise ValueError("no labeled nodes in the chosen basis")
    # count > total / C, compared in integers
    return {int(c) for c in np.flatnonzero(counts * subgraph.num_classes > total)}


def alignment_groups(subgraph, majority, tau_h):
    """Train nodes of majority classes split into homophilous / heterophilous.

    Uses labeled-only homophily so that no label outside the train mask is read.
    Returns ``{class: (homo_index, hete_index)}``.
    """
    scores = homophily_scores(subgraph, use_labeled_only=True)
    groups = {}
    train = subgraph.train_mask
    for y in sorted(majority):
        in_class = train & (subgraph.labels == y)
        homo = np.flatnonzero(in_class & (scores >= tau_h))
        hete = np.flatnonzero(in_class & (scores < tau_h))
        groups[y] = (homo, hete)
    return groups


def compute_prototypes(cache, subgraph, majority, tau_h, groups=None):
    """Mean logits of homophilous train nodes for each majority class.

    Classes without a homophilous node are left out.  Prototypes are copies,
    so they never carry gradient.
    """
    logits = cache.logits if hasattr(cache, "logits") else np.asarray(cache)
    if groups is None:
        groups = alignment_groups(subgraph, majority, tau_h)
    return {y: logits[homo].mean(axis=0).copy() for y, (homo, _) in groups.items() if homo.size}


def _alignment_term(subgraph, prototypes, groups, weight, temperature):
    index, targets = [], []
    for y, (_, hete) in groups.items():
        if y in prototypes and hete.size:
            index.append(hete)
            targets.append(np.repeat(softmax(prototypes[y] / temperature)[None, :], hete.size, axis=0))
    if not index:
        return None
    return KLTerm(np.concatenate(targets), np.concatenate(index), weight)


def majority_alignment_loss(cache, subgraph, prototypes, tau_h, temperature=1.0):
    """Mean ``KL(softmax(prototype) || softmax(logits))`` over heterophilous majority nodes."""
    groups = alignment_groups(subgraph, set(prototypes), tau_h)
    term = _alignment_term(subgraph, prototypes, groups, 1.0, temperature)
    if term is None:
        return 0.0
    return float(np.mean(kl_rows(term.targets, cache.logits[term.index], temperature)))


def deviated_gradient(dev, subgraph, norm_adj):
    """Masked cross-entropy gradient of the deviated model on local train nodes."""
    idx = np.flatnonzero(subgraph.train_mask)
    if idx.size == 0:
        raise ValueError("client has no training nodes")
    spec = LossSpec(labels=subgraph.labels, train_index=idx)
    _, g, _ = value_and_grad(dev.params, norm_adj, subgraph.features, spec)
    flat = np.where(dev.mask, g.flat(), 0.0)
    return g.with_flat(flat, alpha_logit=0.0)


def modify_gradient(g_local, g_dev, mask, margin):
    """Project out the conflicting component of ``g_local`` on masked coordinates.

    With ``d = g_local . g_dev`` over the mask: ``d >= 0`` returns ``g_local``
    unchanged; otherwise the masked part becomes
    ``g_local - d / |g_dev|^2 * g_dev + margin * g_dev / |g_dev|``.
    Unmasked coordinates and the alpha gradient are never touched.
    """
    mask = np.asarray(mask, dtype=bool)
    gl = g_local.flat()
    gd = g_dev.flat()[mask]
    sq = float(gd @ gd)
    if sq < 1e-24:
        return g_local
    d = float(gl[mask] @ gd)
    if d >= 0:
        return g_local
    norm = math.sqrt(sq)
    out = gl.copy()
    out[mask] = gl[mask] - (d / sq) * gd + (margin / norm) * gd
    return g_local.with_flat(out)


def topk_count(ratio, size):
    # rounding guards against 0.4 * 5 = 2.0000000000000004
    return min(size, max(1, math.ceil(round(ratio * size, 9))))


def select_topk_delta(W_local, W_global, topk_ratio):
    """Keep the ``ceil(topk_ratio * P)`` largest ``|W_local - W_global|`` positions.

    Ties at the cut are resolved towards lower flat index.  Values are signed.
    """
    if not 0 < topk_ratio <= 1:
        raise ValueError("topk_ratio must lie in (0, 1]")
    delta = W_local.flat() - W_global.flat()
    P = delta.size
    k = topk_count(topk_ratio, P)
    order = np.argsort(-np.abs(delta), kind="stable")
    keep = np.sort(order[:k])
    return SparseDelta(keep, delta[keep], P)


def _reset_to_global(state, global_params, window=0):
    if window:
        state.global_history.append(global_params.copy())
        del state.global_history[:-window]
    local = global_params.copy()
    local.alpha_logit = state.local_params.alpha_logit
    return local


def train_local_round(state, global_params, dev, cfg, lr=0.05):
    """Run one FairFGL round on ``state``; returns ``(ClientUpdate, fused model)``.

    ``state.local_params`` is updated in place with the trained local weights
    (its ``alpha_logit`` persists across rounds; it is never uploaded).
    """
    g = state.subgraph
    A = state.norm_adj
    X = g.features
    train_idx = np.flatnonzero(g.train_mask)
    unlabeled_idx = np.flatnonzero(~g.train_mask)

    local = _reset_to_global(state, global_params, cfg.history_window)
    hist = build_history_model(state.global_history, cfg.history_window)

    kl_terms = []
    if cfg.lambda_distill and unlabeled_idx.size:
        teacher = gcn_forward(hist, A, X).logits
        targets = softmax(teacher[unlabeled_idx] / cfg.temperature, axis=1)
        kl_terms.append(KLTerm(targets, unlabeled_idx, cfg.lambda_distill))

    groups = None
    if cfg.lambda_struct:
        majority = majority_classes(g, "train-labels")
        groups = alignment_groups(g, majority, cfg.homophily_threshold)

    g_dev = deviated_gradient(dev, g, A) if dev is not None else None

    def epoch(params, topk_mask=None):
        spec = LossSpec(
            labels=g.labels,
            train_index=train_idx,
            kl_terms=list(kl_terms),
            temperature=cfg.temperature,
            history=hist if cfg.use_fusion else None,
        )
        if groups:
            # prototypes come from this epoch's (detached) logits
            cache = gcn_forward(fuse(params, hist) if cfg.use_fusion else params, A, X)
            protos = compute_prototypes(cache, g, set(groups), cfg.homophily_threshold, groups)
            term = _alignment_term(g, protos, groups, cfg.lambda_struct, cfg.temperature)
            if term is not None:
                spec.kl_terms.append(term)
        loss, grads, _ = value_and_grad(params, A, X, spec)
        if g_dev is not None:
            grads = modify_gradient(grads, g_dev, dev.mask, cfg.margin)
        if topk_mask is not None:
            grads = grads.with_flat(np.where(topk_mask, grads.flat(), 0.0), alpha_logit=0.0)
        return loss, optimizer_step(params, grads, lr, update_alpha=cfg.use_fusion and topk_mask is None)

    trace = []
    for _ in range(cfg.local_epochs):
        loss, local = epoch(local)
        trace.append(loss)

    delta = select_topk_delta(local, global_params, cfg.topk_ratio)
    if cfg.fine_tune_epochs:
        support = delta.support()
        for _ in range(cfg.fine_tune_epochs):
            loss, local = epoch(local, support)
            trace.append(loss)
        refreshed = local.flat() - global_params.flat()
        delta = SparseDelta(delta.positions, refreshed[delta.positions], delta.size)

    state.local_params = local
    final = fused_params(local, hist) if cfg.use_fusion else local.copy()
    return ClientUpdate(delta, int(train_idx.size), trace), final


def train_baseline_round(state, global_params, local_epochs, lr, prox_mu=0.0):
    """FedAvg / FedProx local training: CE (+ proximal term) with plain GD.

    Returns ``(trained params, loss trace)``.
    """
    g = state.subgraph
    local = _reset_to_global(state, global_params)
    spec = LossSpec(
        labels=g.labels,
        train_index=np.flatnonzero(g.train_mask),
        prox_mu=prox_mu,
        prox_center=global_params if prox_mu else None,
    )
    trace = []
    for _ in range(local_epochs):
        loss, grads, _ = value_and_grad(local, state.norm_adj, g.features, spec)
        local = optimizer_step(local, grads, lr, update_alpha=False)
        trace.append(loss)
    state.local_params = local
    return local, trace
