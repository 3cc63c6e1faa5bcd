import numpy as np
import pytest

from fairfgl.datasets import SbmConfig, generate_sbm
from fairfgl.graph import Graph


def random_graph(n=20, f=5, C=3, p=0.25, seed=0, train_frac=0.6):
    """Erdos-Renyi graph with random labels/features and a random split."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    labels = rng.integers(0, C, size=n)
    X = rng.standard_normal((n, f))
    r = rng.random(n)
    train = r < train_frac
    val = (r >= train_frac) & (r < train_frac + (1 - train_frac) / 2)
    test = ~(train | val)
    return Graph(X, labels, edges, train, val, test, C)


def graph_from(edges, labels, f=2, train=None):
    n = len(labels)
    train = np.ones(n, dtype=bool) if train is None else np.asarray(train)
    zeros = np.zeros(n, dtype=bool)
    return Graph(np.zeros((n, f)), labels, edges, train, zeros, zeros & ~train, max(labels) + 1)


@pytest.fixture
def small_graph():
    return random_graph()


@pytest.fixture(scope="session")
def sbm_graph():
    return generate_sbm(SbmConfig([60, 30, 30], 0.2, 0.03, feature_dim=8, seed=3))


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
