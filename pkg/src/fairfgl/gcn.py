"""Two-layer GCN numerics with hand-written backpropagation.

The model is ``logits = A @ relu(A @ X @ W1) @ W2`` (no biases).  When a
history model is attached to the loss, the weights actually used in the
forward pass are the convex fusion ``a * W_hist + (1 - a) * W_local`` with
``a = sigmoid(alpha_logit)``; gradients are mapped back to ``W_local`` and
``alpha_logit``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, logit, softmax, xlogy

DEFAULT_ALPHA = 0.1


@dataclass
class ModelParams:
    W1: np.ndarray
    W2: np.ndarray
    alpha_logit: float = float(logit(DEFAULT_ALPHA))

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.alpha_logit = float(self.alpha_logit)
        if self.W1.ndim != 2 or self.W2.ndim != 2 or self.W1.shape[1] != self.W2.shape[0]:
            raise ValueError(f"inconsistent weight shapes {self.W1.shape} and {self.W2.shape}")

    @property
    def dims(self):
        """``(f, h, C)``"""
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    @property
    def num_weights(self):
        return self.W1.size + self.W2.size

    @property
    def alpha(self):
        return float(expit(self.alpha_logit))

    def flat(self):
        """W1 and W2 raveled (C order) and concatenated; ``alpha_logit`` excluded."""
        return np.concatenate([self.W1.ravel(), self.W2.ravel()])

    def with_flat(self, vec, alpha_logit=None):
        f, h, C = self.dims
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.num_weights,):
            raise ValueError(f"flat vector must have length {self.num_weights}")
        return type(self)(
            vec[: f * h].reshape(f, h).copy(),
            vec[f * h:].reshape(h, C).copy(),
            self.alpha_logit if alpha_logit is None else alpha_logit,
        )

    def copy(self):
        return type(self)(self.W1.copy(), self.W2.copy(), self.alpha_logit)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.W1)) and np.all(np.isfinite(self.W2)) and math.isfinite(self.alpha_logit))


class Gradients(ModelParams):
    """Same layout as :class:`ModelParams`; ``alpha_logit`` holds d/d alpha_logit."""

    def __init__(self, W1, W2, alpha_logit=0.0):
        super().__init__(W1, W2, alpha_logit)

    @classmethod
    def zeros_like(cls, params):
        return cls(np.zeros_like(params.W1), np.zeros_like(params.W2), 0.0)

    def norm(self):
        return float(np.sqrt(np.sum(self.W1 ** 2) + np.sum(self.W2 ** 2) + self.alpha_logit ** 2))


def init_params(f, h, C, rng, alpha=DEFAULT_ALPHA):
    """Glorot-uniform weights, ``U(-s, s)`` with ``s = sqrt(6 / (fan_in + fan_out))``."""
    s1 = np.sqrt(6.0 / (f + h))
    s2 = np.sqrt(6.0 / (h + C))
    W1 = rng.uniform(-s1, s1, size=(f, h))
    W2 = rng.uniform(-s2, s2, size=(h, C))
    return ModelParams(W1, W2, float(logit(alpha)))


@dataclass
class ForwardCache:
    AX: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    prop_hidden: np.ndarray
    logits: np.ndarray
    W1: np.ndarray
    W2: np.ndarray


def gcn_forward(params, A, X):
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"adjacency shape {A.shape} does not match {n} nodes")
    if X.shape[1] != params.W1.shape[0]:
        raise ValueError(f"feature dim {X.shape[1]} does not match W1 rows {params.W1.shape[0]}")
    AX = np.asarray(A @ X)
    pre = AX @ params.W1
    hidden = np.maximum(pre, 0.0)
    prop_hidden = np.asarray(A @ hidden)
    logits = prop_hidden @ params.W2
    return ForwardCache(AX, pre, hidden, prop_hidden, logits, params.W1, params.W2)


def _mask_index(mask, n):
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise ValueError("mask selects no nodes")
    if mask.dtype == bool and mask.shape != (n,):
        raise ValueError("mask length does not match the number of nodes")
    return idx


def cross_entropy_loss(logits, labels, mask):
    """Mean softmax cross-entropy over the masked nodes."""
    idx = _mask_index(mask, logits.shape[0])
    lp = log_softmax(logits[idx], axis=1)
    return float(-np.mean(lp[np.arange(idx.size), np.asarray(labels)[idx]]))


def kl_rows(p, student_logits, temperature=1.0):
    """Per-row ``KL(p || softmax(student / T))``."""
    lq = log_softmax(student_logits / temperature, axis=1)
    return np.sum(xlogy(p, p) - p * lq, axis=1)


def kl_div_loss(teacher_logits, student_logits, mask, temperature=1.0):
    """Mean over masked nodes of ``KL(softmax(teacher/T) || softmax(student/T))``."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    idx = _mask_index(mask, student_logits.shape[0])
    p = softmax(teacher_logits[idx] / temperature, axis=1)
    return float(np.mean(kl_rows(p, student_logits[idx], temperature)))


@dataclass
class KLTerm:
    """Pull the student's masked rows towards fixed target distributions."""

    targets: np.ndarray  # rows are probability vectors, treated as constants
    index: np.ndarray    # node indices the term averages over
    weight: float = 1.0


@dataclass
class LossSpec:
    """Weighted composite loss evaluated by :func:`composite_loss`.

    ``history`` switches on weight fusion (and the alpha gradient).  ``prox_mu``
    adds ``mu/2 * ||W_local - prox_center||^2``.
    """

    labels: np.ndarray
    train_index: np.ndarray
    ce_weight: float = 1.0
    kl_terms: list = field(default_factory=list)
    temperature: float = 1.0
    history: ModelParams | None = None
    prox_mu: float = 0.0
    prox_center: ModelParams | None = None


def fuse(local, hist):
    a = local.alpha
    return ModelParams(a * hist.W1 + (1.0 - a) * local.W1, a * hist.W2 + (1.0 - a) * local.W2, local.alpha_logit)


def effective_params(params, spec):
    return params if spec.history is None else fuse(params, spec.history)


def _loss_from_logits(logits, spec):
    total = 0.0
    if spec.ce_weight:
        total += spec.ce_weight * cross_entropy_loss(logits, spec.labels, spec.train_index)
    for term in spec.kl_terms:
        if term.weight and len(term.index):
            kl = kl_rows(term.targets, logits[term.index], spec.temperature)
            total += term.weight * float(np.mean(kl))
    return total


def _prox(params, spec):
    if not spec.prox_mu:
        return 0.0
    c = spec.prox_center
    return 0.5 * spec.prox_mu * float(np.sum((params.W1 - c.W1) ** 2) + np.sum((params.W2 - c.W2) ** 2))


def composite_loss(params, A, X, spec):
    cache = gcn_forward(effective_params(params, spec), A, X)
    return _loss_from_logits(cache.logits, spec) + _prox(params, spec)


def logits_grad(logits, spec):
    """dL/dlogits for the data terms of ``spec``."""
    G = np.zeros_like(logits)
    if spec.ce_weight:
        idx = spec.train_index
        P = softmax(logits[idx], axis=1)
        P[np.arange(idx.size), spec.labels[idx]] -= 1.0
        G[idx] += spec.ce_weight * P / idx.size
    T = spec.temperature
    for term in spec.kl_terms:
        if term.weight and len(term.index):
            Q = softmax(logits[term.index] / T, axis=1)
            np.add.at(G, term.index, term.weight * (Q - term.targets) / (T * len(term.index)))
    return G


def gcn_backward(cache, params, A, X, spec):
    """Exact gradients of ``composite_loss`` with respect to ``params``."""
    eff = effective_params(params, spec)
    if (
        cache.logits.shape[0] != np.shape(X)[0]
        or cache.W1.shape != eff.W1.shape
        or cache.W2.shape != eff.W2.shape
    ):
        raise ValueError("stale forward cache: shapes do not match the current parameters")
    G = logits_grad(cache.logits, spec)
    dW2 = cache.prop_hidden.T @ G
    d_hidden = np.asarray(A.T @ (G @ cache.W2.T))
    d_pre = d_hidden * (cache.pre > 0)
    dW1 = cache.AX.T @ d_pre

    if spec.history is None:
        grads = Gradients(dW1, dW2, 0.0)
    else:
        a = params.alpha
        hist = spec.history
        d_alpha = float(np.sum(dW1 * (hist.W1 - params.W1)) + np.sum(dW2 * (hist.W2 - params.W2)))
        grads = Gradients((1.0 - a) * dW1, (1.0 - a) * dW2, d_alpha * a * (1.0 - a))

    if spec.prox_mu:
        c = spec.prox_center
        grads.W1 += spec.prox_mu * (params.W1 - c.W1)
        grads.W2 += spec.prox_mu * (params.W2 - c.W2)
    return grads


def value_and_grad(params, A, X, spec):
    cache = gcn_forward(effective_params(params, spec), A, X)
    loss = _loss_from_logits(cache.logits, spec) + _prox(params, spec)
    return loss, gcn_backward(cache, params, A, X, spec), cache


def finite_diff_check(params, A, X, spec, step=1e-5, max_coords=500, seed=0, grads=None, floor=1e-6):
    """Max relative error between analytic and central-difference gradients.

    Checks at most ``max_coords`` coordinates (seeded sample over W1, W2 and,
    when fusion is active, ``alpha_logit``).  Relative error per coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.
    Pass ``grads`` to check a gradient other than :func:`gcn_backward`'s.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    if grads is None:
        grads = value_and_grad(params, A, X, spec)[1]
    P = params.num_weights
    n_coords = P + (1 if spec.history is not None else 0)
    rng = np.random.default_rng(seed)
    coords = np.arange(n_coords) if n_coords <= max_coords else np.sort(rng.choice(n_coords, max_coords, replace=False))
    base = params.flat()
    analytic = np.append(grads.flat(), grads.alpha_logit)

    def loss_at(c, delta):
        if c == P:
            p = params.copy()
            p.alpha_logit += delta
        else:
            v = base.copy()
            v[c] += delta
            p = params.with_flat(v)
        return composite_loss(p, A, X, spec)

    worst = 0.0
    for c in coords:
        num = (loss_at(c, step) - loss_at(c, -step)) / (2.0 * step)
        an = analytic[c]
        err = abs(an - num) / max(abs(an), abs(num), floor)
        worst = max(worst, err)
    return worst


def optimizer_step(params, grads, lr, weight_decay=0.0, update_alpha=True):
    """Plain gradient descent ``p <- p - lr * (g + weight_decay * p)``.

    Weight decay is off by default and never applies to ``alpha_logit``.
    """
    if not lr > 0:
        raise ValueError("lr must be > 0")
    for name in ("W1", "W2"):
        if not np.all(np.isfinite(getattr(grads, name))):
            raise FloatingPointError(f"non-finite gradient in {name}")
    if not math.isfinite(grads.alpha_logit):
        raise FloatingPointError("non-finite gradient in alpha_logit")
    W1 = params.W1 - lr * (grads.W1 + weight_decay * params.W1)
    W2 = params.W2 - lr * (grads.W2 + weight_decay * params.W2)
    a = params.alpha_logit - lr * grads.alpha_logit if update_alpha else params.alpha_logit
    return ModelParams(W1, W2, a)


def predict_logits(params, A, X):
    return gcn_forward(params, A, X).logits
