"""Synchronous federated training loop and the FedAvg / FedProx baselines."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import client as client_mod
from .client import ClientState, ClientUpdate, FairnessLossConfig, SparseDelta, build_history_model, fused_params
from .exceptions import ConfigError
from .gcn import init_params, predict_logits
from .metrics import MetricsBundle, accuracy, build_group_tags, evaluate_test, macro_f1
from .server import (
    RoundUploads,
    ServerConfig,
    aggregate_round,
    build_deviated_packages,
    cluster_updates,
    pair_deviated,
)

log = logging.getLogger(__name__)

STRATEGIES = ("fairfgl", "fedavg", "fedprox")


@dataclass
class RunConfig:
    strategy: str = "fairfgl"
    rounds: int = 150
    hidden: int = 64
    lr: float = 0.05
    kernel_r: float = 0.5
    fedprox_mu: float = 0.01
    use_deviated: bool = True
    seed: int = 0
    fairness: FairnessLossConfig = field(default_factory=FairnessLossConfig)
    server: ServerConfig = field(default_factory=ServerConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.rounds < 1 or self.hidden < 1:
            raise ConfigError("rounds and hidden must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        if self.fedprox_mu < 0:
            raise ConfigError("fedprox_mu must be >= 0")
        if not 0 <= self.kernel_r <= 1:
            raise ConfigError("kernel_r must lie in [0, 1]")

    @property
    def local_epochs(self):
        return self.fairness.local_epochs


@dataclass
class RoundReport:
    round: int
    val_accuracy: float
    val_f1: float
    test: MetricsBundle
    train_loss: float
    uplink_coords: list
    num_clusters: int = 1
    per_client: list = field(default_factory=list)


@dataclass
class RunReport:
    strategy: str
    seed: int
    rounds: list
    best_round: int
    best_metrics: MetricsBundle
    wall_clock: list
    group_counts: dict
    global_params: object = None

    def val_f1_trace(self):
        return [r.val_f1 for r in self.rounds]


def select_best_round(reports):
    """Index of the highest validation Overall-F1; earliest wins ties."""
    trace = [r.val_f1 if isinstance(r, RoundReport) else float(r) for r in reports]
    if not trace:
        raise ValueError("no rounds to select from")
    return int(np.argmax(trace))


def convergence_summary(reports, target=0.9):
    """First round whose validation F1 reaches ``target * best``."""
    if not 0 < target <= 1:
        raise ValueError("target must lie in (0, 1]")
    trace = np.array([r.val_f1 if isinstance(r, RoundReport) else float(r) for r in reports])
    if trace.size == 0:
        raise ValueError("empty trace")
    return int(np.flatnonzero(trace >= target * trace.max())[0])


def _check_datasets(datasets):
    if not datasets:
        raise ConfigError("at least one client dataset is required")
    f = {g.num_features for g in datasets}
    C = {g.num_classes for g in datasets}
    if len(f) != 1 or len(C) != 1:
        raise ConfigError(f"clients disagree on feature dim {sorted(f)} or class count {sorted(C)}")
    for i, g in enumerate(datasets):
        if g.num_nodes == 0 or not g.train_mask.any():
            raise ConfigError(f"client {i} has no nodes or no training nodes")
    return f.pop(), C.pop()


def _fedavg(params_list, weights):
    total = float(sum(weights))
    W1 = sum((w / total) * p.W1 for w, p in zip(weights, params_list))
    W2 = sum((w / total) * p.W2 for w, p in zip(weights, params_list))
    return params_list[0].with_flat(np.concatenate([W1.ravel(), W2.ravel()]))


def _deployed_model(state, W_global, cfg):
    """The model a client predicts with after receiving ``W_global``."""
    fc = cfg.fairness
    if cfg.strategy != "fairfgl" or not fc.use_fusion:
        return W_global
    hist = build_history_model(state.global_history + [W_global], fc.history_window)
    local = W_global.copy()
    local.alpha_logit = state.local_params.alpha_logit
    return fused_params(local, hist)


class Federation:
    """Owns the client states and the global model for one run.

    ``step()`` runs exactly one communication round; ``run()`` runs them all.
    """

    def __init__(self, datasets, cfg):
        self.f, self.C = _check_datasets(datasets)
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.global_params = init_params(self.f, cfg.hidden, self.C, rng)
        self.states = [
            ClientState.create(g, self.global_params, cfg.kernel_r, rng_seed=cfg.seed * 1000 + i)
            for i, g in enumerate(datasets)
        ]
        self.tags = build_group_tags(datasets)
        self.deviated = {}
        self.round = 0

    def _train_clients(self):
        cfg = self.cfg
        W = self.global_params
        uploads, locals_, traces = {}, [], []
        for cid, state in enumerate(self.states):
            if cfg.strategy == "fairfgl":
                dev = self.deviated.get(cid) if cfg.use_deviated else None
                update, _ = client_mod.train_local_round(state, W, dev, cfg.fairness, cfg.lr)
                uploads[cid] = update
            else:
                mu = cfg.fedprox_mu if cfg.strategy == "fedprox" else 0.0
                local, trace = client_mod.train_baseline_round(state, W, cfg.local_epochs, cfg.lr, mu)
                full = local.flat() - W.flat()
                delta = SparseDelta(np.arange(full.size), full, full.size)
                uploads[cid] = ClientUpdate(delta, int(state.subgraph.train_mask.sum()), trace)
                locals_.append(local)
        return uploads, locals_

    def step(self):
        cfg = self.cfg
        W = self.global_params
        uploads, locals_ = self._train_clients()
        k = 1
        if cfg.strategy == "fairfgl":
            ups = RoundUploads(uploads, self.round)
            clustering = cluster_updates(ups, cfg.server)
            k = clustering.k
            W_next = aggregate_round(ups, clustering, W, cfg.server)
            if cfg.use_deviated:
                self.deviated = build_deviated_packages(W, ups, pair_deviated(ups))
        else:
            W_next = _fedavg(locals_, [uploads[c].num_train_samples for c in sorted(uploads)])
        self.global_params = W_next
        report = self.evaluate()
        report.train_loss = float(np.mean([u.train_loss_trace[-1] for u in uploads.values()]))
        report.uplink_coords = [uploads[c].transmitted_coords for c in sorted(uploads)]
        report.num_clusters = k
        self.round += 1
        return report

    def predictions(self):
        """Per-client argmax predictions of each client's deployed model."""
        return [
            np.argmax(predict_logits(_deployed_model(s, self.global_params, self.cfg), s.norm_adj, s.subgraph.features), axis=1)
            for s in self.states
        ]

    def evaluate(self):
        preds = self.predictions()
        graphs = [s.subgraph for s in self.states]
        val_p = np.concatenate([p[g.val_mask] for p, g in zip(preds, graphs)])
        val_y = np.concatenate([g.labels[g.val_mask] for g in graphs])
        test_p = np.concatenate([p[g.test_mask] for p, g in zip(preds, graphs)])
        test = evaluate_test(test_p, self.tags, self.C)
        per_client = []
        for cid, (p, g) in enumerate(zip(preds, graphs)):
            if g.test_mask.any():
                yt = g.labels[g.test_mask]
                per_client.append({
                    "client": cid,
                    "accuracy": accuracy(p[g.test_mask], yt),
                    "overall_f1": macro_f1(p[g.test_mask], yt),
                })
        return RoundReport(
            round=self.round,
            val_accuracy=accuracy(val_p, val_y) if val_y.size else float("nan"),
            val_f1=macro_f1(val_p, val_y) if val_y.size else float("nan"),
            test=test,
            train_loss=float("nan"),
            uplink_coords=[],
            per_client=per_client,
        )

    def run(self, callback=None):
        reports, clock = [], []
        for _ in range(self.cfg.rounds):
            t0 = time.perf_counter()
            rep = self.step()
            clock.append(time.perf_counter() - t0)
            reports.append(rep)
            if callback is not None:
                callback(rep)
        best = select_best_round(reports)
        return RunReport(
            strategy=self.cfg.strategy,
            seed=self.cfg.seed,
            rounds=reports,
            best_round=best,
            best_metrics=reports[best].test,
            wall_clock=clock,
            group_counts=self.tags.counts(),
            global_params=self.global_params,
        )


def run_federation(datasets, cfg, callback=None):
    """Train ``cfg.rounds`` synchronous rounds over the client graphs.

    ``callback`` receives each :class:`RoundReport` as soon as it is ready.
    """
    return Federation(datasets, cfg).run(callback)
