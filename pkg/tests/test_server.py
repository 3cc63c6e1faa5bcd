import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairfgl.client import ClientUpdate, SparseDelta
from fairfgl.exceptions import ConfigError
from fairfgl.server import (
    ClusteringResult,
    RoundUploads,
    ServerConfig,
    aggregate_round,
    build_deviated_packages,
    cluster_updates,
    densify,
    pair_deviated,
    silhouette_score,
)

from .test_client import vec_params


def uploads_from(rows, sizes=None, round_index=0):
    sizes = sizes or [1] * len(rows)
    return RoundUploads({i: ClientUpdate(SparseDelta(np.arange(len(r)), r, len(r)), n) for i, (r, n) in enumerate(zip(rows, sizes))}, round_index)


def test_densify_examples():
    assert densify(SparseDelta([0, 3], [1.0, -2.0], 4)).tolist() == [1, 0, 0, -2]
    assert densify(SparseDelta([], [], 3)).tolist() == [0, 0, 0]
    with pytest.raises(IndexError):
        densify(SparseDelta([0, 3], [1.0, -2.0], 4), size=2)


def brute_silhouette(points, labels):
    n = len(points)
    s = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            s.append(0.0)
            continue
        a = np.mean([np.linalg.norm(points[i] - points[j]) for j in own])
        b = min(
            np.mean([np.linalg.norm(points[i] - points[j]) for j in range(n) if labels[j] == c])
            for c in set(labels) if c != labels[i]
        )
        s.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return float(np.mean(s))


def test_four_points_two_pairs():
    ups = uploads_from([[0.0], [0.1], [10.0], [10.1]])
    res = cluster_updates(ups, ServerConfig())
    assert res.k == 2
    assert res.assignment[0] == res.assignment[1] != res.assignment[2] == res.assignment[3]
    # brute-force best over every 2-partition
    pts = ups.dense_matrix()
    best = max(
        brute_silhouette(pts, lab)
        for lab in itertools.product([0, 1], repeat=4) if len(set(lab)) == 2
    )
    assert res.silhouette == pytest.approx(best, abs=1e-12)
    assert res.silhouette == pytest.approx(0.99, abs=0.01)


def test_clustering_fallbacks():
    assert cluster_updates(uploads_from([[1.0], [5.0]]), ServerConfig()).k == 1
    same = cluster_updates(uploads_from([[1.0, 2.0]] * 5), ServerConfig())
    assert same.k == 1 and np.all(same.assignment == 0)
    assert cluster_updates(uploads_from([[0.0], [0.1], [10.0], [10.1]]), ServerConfig(k_max=1)).k == 1


def test_clustering_is_seeded_and_a_partition():
    rng = np.random.default_rng(0)
    rows = list(np.concatenate([rng.normal(0, 0.1, (3, 4)), rng.normal(5, 0.1, (3, 4))]))
    a = cluster_updates(uploads_from(rows), ServerConfig(seed=3))
    b = cluster_updates(uploads_from(rows), ServerConfig(seed=3))
    assert np.array_equal(a.assignment, b.assignment) and a.k == b.k == 2
    assert sorted(sum((a.members(c) for c in range(a.k)), [])) == list(range(6))


def test_silhouette_conventions():
    pts = np.zeros((4, 2))
    assert silhouette_score(pts, [0, 1, 0, 1]) == 0.0
    pts = np.array([[0.0], [0.1], [10.0]])
    # the singleton contributes 0
    a0, b0 = 0.1, 10.0
    a1, b1 = 0.1, 9.9
    assert silhouette_score(pts, [0, 0, 1]) == pytest.approx(((b0 - a0) / b0 + (b1 - a1) / b1) / 3)
    with pytest.raises(ValueError):
        silhouette_score(pts, [0, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 7), st.integers(0, 10_000))
def test_silhouette_matches_brute_force(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 2))
    labels = rng.integers(0, 3, n)
    if len(set(labels)) < 2:
        labels[0] = (labels[1] + 1) % 3
    assert silhouette_score(pts, labels) == pytest.approx(brute_silhouette(pts, labels), abs=1e-12)


def test_aggregate_examples():
    W = vec_params([0.0])
    two = ClusteringResult(2, np.array([0, 1]), 0.5, [0, 1])
    out = aggregate_round(uploads_from([[2.0], [4.0]]), two, W, ServerConfig(eta=0.5))
    assert out.W1[0, 0] == pytest.approx(3.0)
    assert aggregate_round(uploads_from([[2.0], [4.0]]), two, W, ServerConfig()).W1[0, 0] == pytest.approx(3.0)
    one = ClusteringResult(1, np.array([0, 0]), float("nan"), [0, 1])
    out = aggregate_round(uploads_from([[1.0], [3.0]], sizes=[1, 3]), one, W, ServerConfig(eta=1.0))
    assert out.W1[0, 0] == pytest.approx(2.5)


def test_aggregate_full_deltas_is_fedavg():
    rng = np.random.default_rng(0)
    W = vec_params(rng.normal(size=6))
    locals_ = [rng.normal(size=6) for _ in range(4)]
    sizes = [3, 1, 5, 2]
    ups = uploads_from([l - W.flat() for l in locals_], sizes)
    one = ClusteringResult(1, np.zeros(4, dtype=int), float("nan"), list(range(4)))
    out = aggregate_round(ups, one, W, ServerConfig(eta=1.0))
    expected = sum(n * l for n, l in zip(sizes, locals_)) / sum(sizes)
    np.testing.assert_allclose(out.flat(), expected, atol=1e-12)


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(1)
    rows = [rng.normal(size=5) for _ in range(4)]
    W = vec_params(np.zeros(5))
    ups = uploads_from(rows, [1, 2, 3, 4])
    shuffled = RoundUploads({i: ups.updates[i] for i in [2, 0, 3, 1]})
    cl = ClusteringResult(2, np.array([0, 1, 0, 1]), 0.1, [0, 1, 2, 3])
    a = aggregate_round(ups, cl, W, ServerConfig())
    b = aggregate_round(shuffled, cl, W, ServerConfig())
    assert np.array_equal(a.flat(), b.flat())


def test_pairing_examples():
    s = 1 / np.sqrt(2)
    assert pair_deviated(uploads_from([[1.0, 0.0], [0.0, 1.0], [s, s]]))[0] == 1
    assert pair_deviated(uploads_from([[1.0, 0.0], [-1.0, 0.0]])) == {0: 1, 1: 0}
    assert pair_deviated(uploads_from([[1.0, 2.0]] * 3)) == {0: 1, 1: 0, 2: 0}
    assert pair_deviated(uploads_from([[1.0]])) == {}
    # a zero delta has cosine 0 against everything
    assert pair_deviated(uploads_from([[1.0, 0.0], [0.0, 0.0], [2.0, 0.0]]))[0] == 1


def test_deviated_package_examples():
    W = vec_params([1.0, 2.0, 3.0, 4.0])
    ups = RoundUploads({
        0: ClientUpdate(SparseDelta([0, 2], [0.0, 0.0], 4), 1),
        1: ClientUpdate(SparseDelta([1, 3], [0.5, -1.0], 4), 1),
    })
    pk = build_deviated_packages(W, ups, {0: 1, 1: 0})
    assert pk[1].params.flat().tolist() == [1, 2, 3, 4]
    assert pk[1].mask.tolist() == [True, False, True, False]
    assert pk[0].params.flat().tolist() == [1, 2.5, 3, 3]
    assert pk[0].mask.sum() == 2


def test_config_validation():
    with pytest.raises(ConfigError):
        ServerConfig(eta=0.0)
    with pytest.raises(ConfigError):
        ServerConfig(k_max=0)
