"""scikit-learn style wrapper around a federated run.

``fit`` takes the list of client graphs (one per client) and trains a global
GCN; ``predict`` labels every node of a graph with that global model.
"""

from __future__ import annotations

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .client import FairnessLossConfig
from .exceptions import ConfigError
from .federation import RunConfig, run_federation
from .gcn import predict_logits
from .graph import Graph, normalize_adjacency
from .server import ServerConfig


def check_graph(g, n_features=None):
    if not isinstance(g, Graph):
        raise TypeError(f"expected a Graph, got {type(g).__name__}")
    if n_features is not None and g.num_features != n_features:
        raise ValueError(f"graph has {g.num_features} features, model expects {n_features}")
    return g


def check_client_graphs(graphs):
    if isinstance(graphs, Graph):
        graphs = [graphs]
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one client graph")
    for g in graphs:
        check_graph(g, graphs[0].num_features)
    if len({g.num_classes for g in graphs}) != 1:
        raise ValueError("client graphs disagree on num_classes")
    return graphs


class FederatedGCNClassifier(ClassifierMixin, BaseEstimator):
    """Node classifier trained by FairFGL or a FedAvg/FedProx baseline.

    Parameters mirror :class:`~fairfgl.federation.RunConfig`,
    :class:`~fairfgl.client.FairnessLossConfig` and
    :class:`~fairfgl.server.ServerConfig`, flattened so that ``get_params``,
    ``set_params`` and ``clone`` work.
    """

    def __init__(
        self,
        strategy="fairfgl",
        rounds=150,
        local_epochs=3,
        hidden=64,
        lr=0.05,
        lambda_distill=1.0,
        lambda_struct=1.0,
        margin=0.1,
        topk_ratio=0.4,
        tau_h=0.5,
        fine_tune_epochs=1,
        history_window=5,
        use_fusion=True,
        use_deviated=True,
        eta=None,
        k_max=8,
        kmeans_restarts=5,
        fedprox_mu=0.01,
        kernel_r=0.5,
        random_state=0,
    ):
        self.strategy = strategy
        self.rounds = rounds
        self.local_epochs = local_epochs
        self.hidden = hidden
        self.lr = lr
        self.lambda_distill = lambda_distill
        self.lambda_struct = lambda_struct
        self.margin = margin
        self.topk_ratio = topk_ratio
        self.tau_h = tau_h
        self.fine_tune_epochs = fine_tune_epochs
        self.history_window = history_window
        self.use_fusion = use_fusion
        self.use_deviated = use_deviated
        self.eta = eta
        self.k_max = k_max
        self.kmeans_restarts = kmeans_restarts
        self.fedprox_mu = fedprox_mu
        self.kernel_r = kernel_r
        self.random_state = random_state

    def _run_config(self):
        fairness = FairnessLossConfig(
            lambda_distill=self.lambda_distill,
            lambda_struct=self.lambda_struct,
            margin=self.margin,
            topk_ratio=self.topk_ratio,
            homophily_threshold=self.tau_h,
            local_epochs=self.local_epochs,
            fine_tune_epochs=self.fine_tune_epochs,
            history_window=self.history_window,
            use_fusion=self.use_fusion,
        )
        server = ServerConfig(eta=self.eta, k_max=self.k_max, kmeans_restarts=self.kmeans_restarts, seed=self.random_state)
        return RunConfig(
            strategy=self.strategy,
            rounds=self.rounds,
            hidden=self.hidden,
            lr=self.lr,
            kernel_r=self.kernel_r,
            fedprox_mu=self.fedprox_mu,
            use_deviated=self.use_deviated,
            seed=self.random_state,
            fairness=fairness,
            server=server,
        )

    def fit(self, X, y=None):
        """Train on client graphs ``X``; labels come from the graphs, ``y`` is ignored."""
        graphs = check_client_graphs(X)
        try:
            cfg = self._run_config()
        except ConfigError as exc:
            raise ValueError(str(exc)) from exc
        self.run_report_ = run_federation(graphs, cfg)
        self.global_params_ = self.run_report_.global_params
        self.classes_ = np.arange(graphs[0].num_classes)
        self.n_features_in_ = graphs[0].num_features
        self.n_clients_ = len(graphs)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "global_params_")
        g = check_graph(X, self.n_features_in_)
        return predict_logits(self.global_params_, normalize_adjacency(g, self.kernel_r), g.features)

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def score(self, X, y=None, mask="test"):
        """Accuracy on the nodes selected by ``mask`` ('train', 'val', 'test' or 'all')."""
        g = check_graph(X)
        m = np.ones(g.num_nodes, dtype=bool) if mask == "all" else getattr(g, f"{mask}_mask")
        labels = g.labels if y is None else np.asarray(y)
        return float(np.mean(self.predict(g)[m] == labels[m]))
