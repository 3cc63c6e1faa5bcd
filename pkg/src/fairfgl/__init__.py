"""Fairness-aware federated graph learning on a numpy 2-layer GCN."""

from .client import ClientState, DeviatedPackage, FairnessLossConfig, SparseDelta, train_local_round
from .datasets import SbmConfig, generate_sbm, load_graph, save_graph
from .estimator import FederatedGCNClassifier
from .federation import RunConfig, run_federation
from .gcn import ModelParams
from .graph import Graph, homophily_scores, induce_subgraph, normalize_adjacency
from .metrics import accuracy, macro_f1
from .partition import partition_fennel, partition_label_skew, split_graph
from .server import ServerConfig

__version__ = "0.1.0"

__all__ = [
    "ClientState",
    "DeviatedPackage",
    "FairnessLossConfig",
    "FederatedGCNClassifier",
    "Graph",
    "ModelParams",
    "RunConfig",
    "SbmConfig",
    "ServerConfig",
    "SparseDelta",
    "accuracy",
    "generate_sbm",
    "homophily_scores",
    "induce_subgraph",
    "load_graph",
    "macro_f1",
    "normalize_adjacency",
    "partition_fennel",
    "partition_label_skew",
    "run_federation",
    "save_graph",
    "split_graph",
    "train_local_round",
]
