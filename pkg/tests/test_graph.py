import math

import numpy as np
import pytest

from src.errors import GraphDegeneracyError, ShapeError
from src.network.graph import adjacency, build_snapshot, normalized_laplacian, pairwise_distances
from src.network.numerics import make_rng

COLLINEAR = [(0.0, 0.0), (0.0, 1.0), (0.0, 3.0)]


def test_pairwise_distances_examples():
    assert pairwise_distances([(0, 0), (3, 4)])[0, 1] == 5.0
    assert np.array_equal(pairwise_distances([(2, 2)] * 3), np.zeros((3, 3)))
    d = pairwise_distances(COLLINEAR)
    assert (d[0, 1], d[0, 2], d[1, 2]) == (1.0, 3.0, 2.0)


def test_pairwise_distances_symmetric_zero_diagonal():
    d = pairwise_distances(make_rng(0).uniform(-50, 50, size=(5, 2)))
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0.0)


def test_too_few_nodes():
    with pytest.raises(ShapeError):
        adjacency([(0.0, 0.0)])


def test_colocated_adjacency_is_uniform():
    assert np.allclose(adjacency([(1.0, 1.0)] * 3), 1.0 / 3.0, atol=1e-12)


def test_collinear_first_row():
    e1, e3 = math.exp(-1.0), math.exp(-3.0)
    total = 1.0 + e1 + e3
    row = adjacency(COLLINEAR)[0].tolist()
    assert row == pytest.approx([1.0 / total, e1 / total, e3 / total], abs=1e-12)
    assert row == pytest.approx([0.7054, 0.2595, 0.0351], abs=5e-5)


def test_colocated_laplacian():
    lap = normalized_laplacian(adjacency([(0.0, 0.0)] * 3))
    assert np.allclose(np.diag(lap), 2.0 / 3.0, atol=1e-12)
    assert np.allclose(lap[~np.eye(3, dtype=bool)], 1.0 / 6.0, atol=1e-12)


def test_zero_adjacency_gives_identity():
    assert np.array_equal(normalized_laplacian(np.zeros((3, 3))), np.eye(3))


def test_laplacian_matches_elementwise_oracle():
    a = adjacency(make_rng(1).uniform(0, 5, size=(3, 2)))
    a_tilde = a + np.eye(3)
    degree = a_tilde.sum(axis=1)
    lap = normalized_laplacian(a)
    for i in range(3):
        for j in range(3):
            assert lap[i, j] == pytest.approx(a_tilde[i, j] / math.sqrt(degree[i] * degree[j]), rel=1e-12)


def test_degree_from_adjacency_variant():
    a = adjacency(COLLINEAR)
    lap = normalized_laplacian(a, degree_source="adjacency")
    # softmax rows sum to 1
    assert np.allclose(lap, a + np.eye(3), atol=1e-12)


def test_degenerate_degree():
    with pytest.raises(GraphDegeneracyError):
        normalized_laplacian(np.zeros((3, 3)), degree_source="adjacency")


def test_symmetric_input_gives_symmetric_operator():
    m = make_rng(2).uniform(0, 1, size=(4, 4))
    lap = normalized_laplacian(m + m.T)
    assert np.allclose(lap, lap.T, atol=1e-12)


def test_snapshot_of_colocated_team():
    snap = build_snapshot([(5.0, 5.0)] * 3, 0.0)
    assert snap.timestamp == 0.0
    assert np.allclose(snap.adjacency, 1.0 / 3.0, atol=1e-12)
    assert np.allclose(np.diag(snap.laplacian), 2.0 / 3.0, atol=1e-12)


def test_moving_apart_lowers_mutual_weight():
    near = build_snapshot([(0, 0), (1, 0), (0, 2)], 0.0).adjacency
    far = build_snapshot([(0, 0), (4, 0), (0, 2)], 0.0).adjacency
    assert far[0, 1] < near[0, 1]
    assert far[1, 0] < near[1, 0]


def test_invariants_over_random_positions():
    rng = make_rng(3)
    for _ in range(1000):
        snap = build_snapshot(rng.uniform(0, 20, size=(3, 2)), 0.0)
        assert np.allclose(snap.adjacency.sum(axis=1), 1.0, atol=1e-9)
        assert np.all((snap.adjacency > 0.0) & (snap.adjacency < 1.0))
        assert np.all(np.isfinite(snap.laplacian)) and np.all(snap.laplacian >= 0.0)


def test_rigid_motion_invariance():
    rng = make_rng(4)
    p = rng.uniform(0, 10, size=(3, 2))
    angle = 0.7
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    moved = p @ rotation.T + np.array([12.5, -3.0])
    assert np.max(np.abs(adjacency(moved) - adjacency(p))) < 1e-9


def test_permutation_equivariance():
    p = make_rng(5).uniform(0, 10, size=(3, 2))
    perm = np.eye(3)[[2, 0, 1]]
    assert np.allclose(adjacency(perm @ p), perm @ adjacency(p) @ perm.T, atol=1e-12)


def test_distance_scale():
    p = [(0.0, 0.0), (1.0, 0.0), (3.0, 0.0)]
    assert np.allclose(adjacency(p, distance_scale=2.0), adjacency(np.array(p) * 2.0), atol=1e-12)
