"""Hypergraph model, per-modality construction and serialization."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hypergraph
from hypertv.hypergraph import (Hyperedge, Hypergraph, ModalityTable,
                                build_hypergraph, concat_hypergraphs,
                                knn_modal_hypergraph, load_hypergraph,
                                phenotypic_hypergraph, save_hypergraph)


def test_degree_hand_example():
    H = build_hypergraph([((0, 1), 2.0, (1.0, 1.0)),
                          ((1, 2), 3.0, (1.0, 1.0))], 3)
    assert np.allclose(H.vertex_degrees, [2.0, 5.0, 3.0])


def test_rejects_duplicate_vertex_in_edge():
    with pytest.raises(ValueError, match="duplicate"):
        Hypergraph(3, [Hyperedge((0, 0, 1), 1.0, (1.0, 1.0, 1.0))])


def test_rejects_singleton_edge_and_empty_list():
    with pytest.raises(ValueError, match="cardinality"):
        Hypergraph(2, [Hyperedge((0,), 1.0, (1.0,))])
    with pytest.raises(ValueError, match="empty"):
        build_hypergraph([], 2)


def test_rejects_bad_weight_and_incidence():
    with pytest.raises(ValueError, match="weight"):
        Hypergraph(2, [Hyperedge((0, 1), 0.0, (1.0, 1.0))])
    with pytest.raises(ValueError, match="incidence"):
        Hypergraph(2, [Hyperedge((0, 1), 1.0, (1.0,))])
    with pytest.raises(ValueError, match="positive"):
        Hypergraph(2, [Hyperedge((0, 1), 1.0, (1.0, -1.0))])


def test_knn_identical_vectors_full_incidence():
    X = np.tile([1.0, 0.0], (4, 1))
    H = knn_modal_hypergraph(X, 2)
    assert H.m == 4
    for e in H.edges:
        assert e.cardinality == 3
        assert np.allclose(e.incidence, 1.0)
        assert np.isclose(e.weight, 1.0)


def test_knn_orthonormal_rescaled_incidence():
    # mutually orthogonal rows: every neighbour cosine is 0, rescaled to 1/2
    X = np.eye(3)
    H = knn_modal_hypergraph(X, 1)
    for j, e in enumerate(H.edges):
        assert j in e.verts
        inc = dict(zip(e.verts, e.incidence))
        assert inc[j] == 1.0
        others = [inc[v] for v in e.verts if v != j]
        assert np.allclose(others, 0.5)
        assert np.isclose(e.weight, 0.75)


def test_knn_two_clusters_no_spanning_edges():
    rng = np.random.default_rng(0)
    A = np.array([1.0, 0.0]) + 0.01 * rng.normal(size=(5, 2))
    B = np.array([-1.0, 0.0]) + 0.01 * rng.normal(size=(5, 2))
    X = np.vstack([A, B])
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    H = knn_modal_hypergraph(X, 3)
    for e in H.edges:
        sides = set(v < 5 for v in e.verts)
        assert len(sides) == 1


def test_knn_rejects_unnormalised_rows_and_bad_k():
    with pytest.raises(ValueError, match="unit-normalised"):
        knn_modal_hypergraph(np.array([[2.0, 0.0], [0.0, 1.0]]), 1)
    X = np.eye(3)
    with pytest.raises(ValueError, match="1 <= k < n"):
        knn_modal_hypergraph(X, 3)
    with pytest.raises(ValueError, match="1 <= k < n"):
        knn_modal_hypergraph(X, 0)


def test_phenotypic_categorical_groups():
    t = ModalityTable("phenotypic", np.array([0.0, 0.0, 1.0, 1.0, 1.0]),
                      "site", categorical=True)
    H = phenotypic_hypergraph(t, 3)
    assert sorted(tuple(e.verts) for e in H.edges) == [(0, 1), (2, 3, 4)]
    assert all(e.weight == 1.0 for e in H.edges)


def test_phenotypic_numeric_knn_dedup():
    # ages [20, 21, 50], k=1: {0,1} from both 0 and 1, deduplicated; {1,2}
    t = ModalityTable("phenotypic", np.array([20.0, 21.0, 50.0]), "age")
    H = phenotypic_hypergraph(t, 1)
    assert sorted(tuple(e.verts) for e in H.edges) == [(0, 1), (1, 2)]


def test_phenotypic_singleton_category_warns():
    t = ModalityTable("phenotypic", np.array([0.0, 1.0, 1.0]), "site",
                      categorical=True)
    with pytest.warns(UserWarning, match="< 2 members"):
        H = phenotypic_hypergraph(t, 2)
    assert [tuple(e.verts) for e in H.edges] == [(1, 2)]


def test_phenotypic_constant_numeric_single_edge():
    t = ModalityTable("phenotypic", np.full(4, 7.0), "age")
    with pytest.warns(UserWarning, match="constant"):
        H = phenotypic_hypergraph(t, 2)
    assert H.m == 1
    assert H.edges[0].verts == (0, 1, 2, 3)


def test_concat_identity_and_additivity():
    H1 = random_hypergraph(1, n_range=(8, 9))
    H2 = random_hypergraph(2, n_range=(8, 9))
    both = concat_hypergraphs([H1, H2])
    assert both.m == H1.m + H2.m
    assert np.allclose(both.vertex_degrees,
                       H1.vertex_degrees + H2.vertex_degrees)
    assert concat_hypergraphs([H1]) == H1
    # associativity of the edge order
    H3 = random_hypergraph(3, n_range=(8, 9))
    a = concat_hypergraphs([concat_hypergraphs([H1, H2]), H3])
    b = concat_hypergraphs([H1, concat_hypergraphs([H2, H3])])
    assert a == b


def test_concat_rejects_vertex_mismatch():
    H1 = random_hypergraph(1, n_range=(8, 9))
    H2 = random_hypergraph(2, n_range=(10, 11))
    with pytest.raises(ValueError, match="mismatch"):
        concat_hypergraphs([H1, H2])


def test_knn_permutation_equivariance():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(7, 4))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    H = knn_modal_hypergraph(X, 3)
    perm = rng.permutation(7)
    Hp = knn_modal_hypergraph(X[perm], 3)
    # row j of the permuted table is original row perm[j], so edge sets must
    # map back through perm
    orig = sorted(tuple(sorted(e.verts)) for e in H.edges)
    mapped = sorted(tuple(sorted(int(perm[v]) for v in e.verts))
                    for e in Hp.edges)
    assert orig == mapped


def test_json_round_trip(tmp_path):
    H = random_hypergraph(7)
    path = tmp_path / "h.json"
    save_hypergraph(H, path)
    H2 = load_hypergraph(path)
    assert H2.n == H.n and H2.m == H.m
    assert np.allclose(H2.vertex_degrees, H.vertex_degrees, atol=1e-12)
    for e, f in zip(H.edges, H2.edges):
        assert e.verts == f.verts
        assert abs(e.weight - f.weight) <= 1e-12
        assert np.allclose(e.incidence, f.incidence, atol=1e-12)
    json.loads(path.read_text())  # stays valid JSON


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_degrees_match_edge_weights_property(seed):
    H = random_hypergraph(seed)
    d = np.zeros(H.n)
    for e in H.edges:
        for v in e.verts:
            d[v] += e.weight
    assert np.allclose(d, H.vertex_degrees, atol=1e-12)
    assert np.all(H.vertex_degrees > 0)
