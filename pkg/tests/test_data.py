import os
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfds.data import (
    Dataset,
    GraphBatch,
    GraphSample,
    embed_dataset,
    embed_nodes,
    generate_pc_graphs,
    generate_separable,
    knn_graph,
    load_dataset,
    make_folds,
    parse_benchmark_dataset,
    save_dataset,
    walk_length,
    write_benchmark_dataset,
)
from lfds.data.cache import MAGIC, dataset_from_bytes, dataset_to_bytes
from lfds.data.embedding import expected_cooccurrence
from lfds.errors import FormatError, IngestionError, ParameterError, ShapeError
from lfds.gradcheck import random_graph


def _write(directory, name, **files):
    for suffix, text in files.items():
        (directory / f"{name}_{suffix}.txt").write_text(text)


def _check_adjacency(adj):
    assert np.array_equal(adj, adj.T)
    assert np.all(np.diag(adj) == 0)
    assert set(np.unique(adj)) <= {0.0, 1.0}


def _connected(adj):
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if v not in seen:
                seen.add(int(v))
                queue.append(int(v))
    return len(seen) == len(adj)


@pytest.fixture
def toy_dir(tmp_path):
    # graph 1: triangle on nodes 1-3, graph 2: single edge 4-5
    _write(
        tmp_path,
        "TOY",
        A="1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n",
        graph_indicator="1\n1\n1\n2\n2\n",
        graph_labels="3\n7\n",
        node_labels="0\n1\n0\n2\n1\n",
    )
    return tmp_path


# -- GraphSample / Dataset -------------------------------------------------------


def test_sample_normalizes_edges():
    g = GraphSample(3, [[1, 0], [0, 1], [2, 2], [1, 2]], np.ones((3, 1)), 0)
    np.testing.assert_array_equal(g.edges, [[0, 1], [1, 2]])
    _check_adjacency(g.adjacency)


def test_sample_validation():
    with pytest.raises(ParameterError):
        GraphSample(0, np.zeros((0, 2)), np.ones((0, 1)), 0)
    with pytest.raises(ShapeError):
        GraphSample(2, [[0, 2]], np.ones((2, 1)), 0)
    with pytest.raises(ShapeError):
        GraphSample(2, [[0, 1]], np.ones((3, 1)), 0)


def test_dataset_validation():
    g = GraphSample(2, [[0, 1]], np.ones((2, 1)), 2)
    with pytest.raises(ParameterError):
        Dataset([g], 2)
    with pytest.raises(ParameterError):
        Dataset([GraphSample(2, [[0, 1]], np.ones((2, 1)), 0)], 1)
    h = GraphSample(2, [[0, 1]], np.ones((2, 2)), 0)
    with pytest.raises((ParameterError, ShapeError)):
        Dataset([GraphSample(2, [[0, 1]], np.ones((2, 1)), 0), h], 2)


def test_permuted_relabels_consistently(rng):
    g = random_graph(6, 2, rng)
    perm = rng.permutation(6)
    p = g.permuted(perm)
    np.testing.assert_array_equal(p.adjacency, g.adjacency[np.ix_(perm, perm)])
    np.testing.assert_array_equal(p.node_features, g.node_features[perm])


def test_batch_offsets_and_blocks(rng):
    gs = [random_graph(n, 2, rng, label=i % 2) for i, n in enumerate((3, 1, 4))]
    b = GraphBatch.from_samples(gs)
    np.testing.assert_array_equal(b.offsets, [0, 3, 4, 8])
    assert b.features.shape == (8, 2)
    np.testing.assert_array_equal(b.labels, [0, 1, 0])
    with pytest.raises(ParameterError):
        GraphBatch.from_samples([])


# -- benchmark text format -------------------------------------------------------


def test_parse_toy_dataset(toy_dir):
    ds = parse_benchmark_dataset(toy_dir, "TOY")
    assert [s.n for s in ds.samples] == [3, 2]
    np.testing.assert_array_equal(ds.samples[0].adjacency, 1 - np.eye(3))
    np.testing.assert_array_equal(ds.samples[1].adjacency, [[0, 1], [1, 0]])
    assert ds.labels.tolist() == [0, 1]
    assert ds.num_classes == 2
    np.testing.assert_array_equal(ds.samples[0].node_features, [[1, 0, 0], [0, 1, 0], [1, 0, 0]])
    np.testing.assert_array_equal(ds.samples[1].node_features, [[0, 0, 1], [0, 1, 0]])


def test_parse_symmetrizes_single_direction(tmp_path):
    _write(tmp_path, "ONE", A="1, 2\n3, 3\n", graph_indicator="1\n1\n1\n", graph_labels="0\n")
    # one graph of class 0 only is still a valid parse with num_classes padded to 2
    ds = parse_benchmark_dataset(tmp_path, "ONE")
    adj = ds.samples[0].adjacency
    _check_adjacency(adj)
    assert adj[0, 1] == adj[1, 0] == 1
    assert ds.samples[0].node_features.shape == (3, 1)


def test_parse_missing_file_names_it(tmp_path):
    _write(tmp_path, "BAD", A="1, 2\n", graph_indicator="1\n1\n")
    with pytest.raises(IngestionError, match="BAD_graph_labels.txt"):
        parse_benchmark_dataset(tmp_path, "BAD")


def test_parse_cross_graph_edge_reports_line(tmp_path):
    _write(tmp_path, "BAD", A="1, 2\n2, 3\n", graph_indicator="1\n1\n2\n", graph_labels="0\n1\n")
    with pytest.raises(FormatError, match=r"BAD_A.txt:2:"):
        parse_benchmark_dataset(tmp_path, "BAD")


def test_parse_out_of_range_node(tmp_path):
    _write(tmp_path, "BAD", A="1, 9\n", graph_indicator="1\n1\n", graph_labels="0\n")
    with pytest.raises(FormatError, match=r":1:"):
        parse_benchmark_dataset(tmp_path, "BAD")


def test_text_round_trip_is_fixed_point(toy_dir, tmp_path):
    ds = parse_benchmark_dataset(toy_dir, "TOY")
    out = tmp_path / "again"
    write_benchmark_dataset(ds, out, "TOY")
    again = parse_benchmark_dataset(out, "TOY")
    assert again.same_as(ds)


def test_text_round_trip_of_generated_data(tmp_path):
    ds = generate_pc_graphs(1, points_per_cloud=30, seed=3)
    write_benchmark_dataset(ds, tmp_path, "PC")
    again = parse_benchmark_dataset(tmp_path, "PC")
    for a, b in zip(ds.samples, again.samples):
        np.testing.assert_array_equal(a.edges, b.edges)
        assert a.label == b.label


# -- binary cache ---------------------------------------------------------------


def test_cache_round_trip_bit_exact(tmp_path, rng):
    ds = embed_dataset(generate_separable(4, seed=2))
    ds.samples[0].node_features[0, 0] = np.nextafter(0.1, 1.0)
    path = save_dataset(ds, tmp_path / "x.lfds")
    assert open(path, "rb").read().startswith(MAGIC)
    back = load_dataset(path)
    assert back.same_as(ds)
    assert dataset_to_bytes(back) == dataset_to_bytes(ds)


def test_cache_rejects_garbage():
    with pytest.raises(FormatError):
        dataset_from_bytes(b"not a dataset")


def test_cache_missing_file(tmp_path):
    with pytest.raises(IngestionError):
        load_dataset(tmp_path / "nope.lfds")


def test_cache_write_leaves_no_temp_files(tmp_path):
    save_dataset(generate_separable(2), tmp_path / "a.lfds")
    assert os.listdir(tmp_path) == ["a.lfds"]


# -- kNN graphs --------------------------------------------------------------------


def test_knn_collinear_union():
    adj = knn_graph(np.array([[0.0, 0, 0], [1.0, 0, 0], [2.5, 0, 0]]), 1)
    np.testing.assert_array_equal(adj, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])


def test_knn_ties_prefer_lower_index():
    # node 1 is equidistant from 0 and 2
    adj = knn_graph(np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [10.0, 0, 0]]), 1)
    assert adj[1, 0] == 1
    assert adj[1, 2] == 1  # node 2 picks node 1


def test_knn_parameter_errors():
    pts = np.zeros((3, 3))
    with pytest.raises(ParameterError):
        knn_graph(pts, 3)
    with pytest.raises(ParameterError):
        knn_graph(np.array([[0, 0, np.nan], [1, 1, 1]]), 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 25), st.integers(0, 10_000), st.data())
def test_knn_contract(n, seed, data):
    k = data.draw(st.integers(1, n - 1))
    pts = np.random.default_rng(seed).standard_normal((n, 3))
    adj = knn_graph(pts, k)
    _check_adjacency(adj)
    assert adj.sum(axis=1).min() >= k


def test_knn_duplicate_points_allowed():
    adj = knn_graph(np.zeros((5, 3)), 2)
    _check_adjacency(adj)
    assert adj.sum(axis=1).min() >= 2


def test_knn_150_uniform_points_connected_over_seeds():
    connected = 0
    for seed in range(20):
        adj = knn_graph(np.random.default_rng(seed).random((150, 3)), 4)
        deg = adj.sum(axis=1)
        assert deg.min() >= 4 and deg.max() <= 149
        connected += _connected(adj)
    assert connected >= 18, connected


# -- generators -------------------------------------------------------------------


def test_pc_graphs_counts_and_determinism():
    ds = generate_pc_graphs(5, points_per_cloud=40, seed=11)
    assert len(ds) == 40
    assert ds.num_classes == 8
    np.testing.assert_array_equal(ds.class_counts(), [5] * 8)
    assert generate_pc_graphs(5, points_per_cloud=40, seed=11).same_as(ds)
    assert not generate_pc_graphs(5, points_per_cloud=40, seed=12).same_as(ds)
    for s in ds.samples:
        _check_adjacency(s.adjacency)
        assert s.node_features.shape == (40, 8)
        np.testing.assert_array_equal(s.node_features.sum(axis=1), 1)


def test_pc_graphs_default_size():
    ds = generate_pc_graphs(1, seed=0)
    assert all(s.n == 150 for s in ds.samples)
    with pytest.raises(ParameterError):
        generate_pc_graphs(0)


def test_separable_degrees():
    ds = generate_separable(10, seed=4)
    for s in ds.samples:
        deg = s.degrees
        assert 10 <= s.n <= 20
        if s.label == 0:
            assert np.all(deg == 2)
        else:
            assert sorted(deg.tolist()) == [1] * (s.n - 1) + [s.n - 1]
        np.testing.assert_allclose(s.node_features[:, 0], deg / (s.n - 1))
        np.testing.assert_array_equal(s.node_features[:, 1], 1)
    # max normalized degree alone separates the classes
    top = np.array([s.node_features[:, 0].max() for s in ds.samples])
    assert top[ds.labels == 0].max() < top[ds.labels == 1].min()
    assert generate_separable(10, seed=4).same_as(ds)


# -- embeddings ---------------------------------------------------------------------


@pytest.mark.parametrize("s, expected", [(30, 4), (200, 10), (80, 8), (1, 4), (105, 10), (59, 5)])
def test_walk_length_values(s, expected):
    assert walk_length(s) == expected


@given(st.integers(1, 5000), st.integers(1, 5000))
def test_walk_length_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    assert 4 <= walk_length(lo) <= walk_length(hi) <= 10


def test_walk_length_rejects_empty():
    with pytest.raises(ParameterError):
        walk_length(0)


def test_embedding_shape_and_padding(rng):
    for n in (1, 3, 8, 30):
        emb = embed_nodes(random_graph(n, 1, rng))
        assert emb.shape == (n, 12)
        assert np.all(np.isfinite(emb))
    assert np.all(embed_nodes(random_graph(1, 1, rng)) == 0)
    small = embed_nodes(random_graph(4, 1, rng))
    assert np.all(small[:, 4:] == 0)


def test_embedding_isomorphism():
    rng = np.random.default_rng(5)
    g = random_graph(14, 1, rng, p_edge=0.25)
    perm = rng.permutation(14)
    a = embed_nodes(g, seed=3)
    b = embed_nodes(g.permuted(perm), seed=3)
    np.testing.assert_allclose(b, a[perm], atol=1e-8)


def test_cooccurrence_does_not_cross_components():
    adj = np.zeros((6, 6))
    for i, j in [(0, 1), (1, 2), (3, 4), (4, 5), (3, 5)]:
        adj[i, j] = adj[j, i] = 1
    C = expected_cooccurrence(adj, 4, 5, 10)
    assert np.all(C[:3, 3:] == 0) and np.all(C[3:, :3] == 0)
    assert C[:3, :3].sum() > 0


def test_sampled_embedding_is_seeded(rng):
    g = random_graph(10, 1, rng)
    a = embed_nodes(g, method="sampled", seed=1)
    np.testing.assert_array_equal(a, embed_nodes(g, method="sampled", seed=1))
    assert a.shape == (10, 12)
    with pytest.raises(ParameterError):
        embed_nodes(g, method="skipgram")


def test_embed_dataset_appends_columns():
    ds = generate_separable(2)
    out = embed_dataset(ds)
    assert out.feature_dim == ds.feature_dim + 12
    np.testing.assert_array_equal(out.samples[0].node_features[:, :2], ds.samples[0].node_features)


# -- folds ----------------------------------------------------------------------------


def test_folds_partition_and_sizes():
    labels = np.repeat([0, 1], 50)
    split = make_folds(labels, 10, seed=3)
    np.testing.assert_array_equal(split.sizes(), [10] * 10)
    seen = np.concatenate([split.test_indices(f) for f in range(10)])
    np.testing.assert_array_equal(np.sort(seen), np.arange(100))
    for f in range(10):
        assert np.bincount(labels[split.test_indices(f)]).tolist() == [5, 5]
        assert len(np.intersect1d(split.test_indices(f), split.train_indices(f))) == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=60), st.integers(0, 100), st.data())
def test_folds_balanced_and_deterministic(labels, seed, data):
    k = data.draw(st.integers(1, len(labels)))
    a = make_folds(labels, k, seed)
    sizes = a.sizes()
    assert sizes.max() - sizes.min() <= 1
    np.testing.assert_array_equal(a.assignments, make_folds(labels, k, seed).assignments)


def test_folds_too_many():
    with pytest.raises(ParameterError):
        make_folds([0, 1, 0], 4)


def test_folds_accept_dataset():
    ds = generate_separable(5)
    assert make_folds(ds, 5).sizes().tolist() == [2] * 5
