import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vfgnn.graph import (GraphFormatError, MasterGraph, NeighborIndex, generate_sbm, load_graph,
                         save_graph, single_holder, vertical_partition)


def _toy(n=4, f=10):
    feats = np.arange(n * f, dtype=float).reshape(n, f)
    edges = [(0, 1), (1, 2), (3, 2), (0, 3), (1, 3)]
    labels = [0, 1, 0, 1][:n]
    m = np.array([True, True, False, False])
    return MasterGraph(feats, edges, labels, m, ~m, np.zeros(n, bool))


def test_contiguous_feature_split():
    g = vertical_partition(_toy(), [0.5, 0.5], seed=0)
    assert g.feature_blocks == [(0, 5), (5, 10)]
    g = vertical_partition(_toy(), [0.9, 0.1], seed=0)
    assert [x.shape[1] for x in g.features] == [9, 1]


def test_edges_partitioned_disjointly():
    m = generate_sbm(3, 20, 0.3, 0.05, 4, 1.0, seed=1)
    g = vertical_partition(m, [0.5, 0.5], seed=1)
    a, b = ({tuple(e) for e in es} for es in g.edge_sets)
    assert not (a & b)
    assert a | b == {tuple(e) for e in m.edges}


def test_partition_roundtrip_and_determinism():
    m = generate_sbm(2, 15, 0.3, 0.05, 7, 1.0, seed=2)
    g = vertical_partition(m, [0.2, 0.3, 0.5], seed=9)
    back = g.merge()
    assert np.array_equal(back.features, m.features)
    assert np.array_equal(back.edges, m.edges)
    h = vertical_partition(m, [0.2, 0.3, 0.5], seed=9)
    for e1, e2 in zip(g.edge_sets, h.edge_sets):
        assert np.array_equal(e1, e2)


def test_proportions_must_sum_to_one():
    with pytest.raises(ValueError):
        vertical_partition(_toy(), [0.5, 0.6])
    with pytest.raises(ValueError):
        vertical_partition(_toy(), [0.5, 0.5], edge_proportions=[0.3, 0.3])
    vertical_partition(_toy(), [0.5, 0.5 - 1e-12])


def test_sbm_construction():
    m = generate_sbm(3, 70, 0.1, 0.01, 8, 1.0, seed=0)
    assert m.node_count == 210 and m.num_classes == 3
    assert m.train_mask.sum() == 126 and m.val_mask.sum() == 42 and m.test_mask.sum() == 42
    assert not (m.train_mask & m.val_mask).any()
    with pytest.raises(ValueError):
        generate_sbm(3, 10, 0.1, 0.2, 4, 1.0)


def test_sbm_null_model_features():
    m = generate_sbm(3, 200, 0.1, 0.01, 5, 0.0, seed=4)
    means = np.array([m.features[m.labels == c].mean(0) for c in range(3)])
    # with no class signal, class means are all near zero (se ~ 0.07)
    assert np.abs(means).max() < 0.3


def test_sbm_edge_count_expectation():
    k, n, p_in, p_out = 3, 30, 0.2, 0.02
    mean = k * n * (n - 1) / 2 * p_in + k * (k - 1) / 2 * n * n * p_out
    var = k * n * (n - 1) / 2 * p_in * (1 - p_in) + k * (k - 1) / 2 * n * n * p_out * (1 - p_out)
    counts = [len(generate_sbm(k, n, p_in, p_out, 2, 1.0, seed=s).edges) for s in range(20)]
    assert abs(np.mean(counts) - mean) <= 3 * np.sqrt(var / 20)
    assert all(abs(c - mean) <= 4 * np.sqrt(var) for c in counts)


def test_neighbor_index():
    idx = NeighborIndex(4, np.array([[0, 1], [0, 2], [3, 3]]))
    assert sorted(idx(0)) == [1, 2]
    assert list(idx(3)) == [3]
    assert idx.degree.tolist() == [2, 1, 1, 1]
    assert len(idx(1)) == 1 and idx(1)[0] == 0


def test_load_save_roundtrip(tmp_path):
    m = generate_sbm(2, 5, 0.5, 0.1, 3, 1.0, seed=0)
    paths = save_graph(m, tmp_path)
    back = load_graph(paths["features"], paths["edges"], paths["labels"], paths["masks"])
    assert np.array_equal(back.features, m.features)
    assert np.array_equal(back.edges, m.edges)
    assert np.array_equal(back.labels, m.labels)
    assert np.array_equal(back.test_mask, m.test_mask)


def _write(tmp_path, feats="1\t2\n3\t4\n5\t6\n7\t8\n", edges="0 1\n2 3\n", labels="0\n1\n0\n1\n",
           masks="t\nt\nv\ns\n"):
    files = []
    for name, text in (("f", feats), ("e", edges), ("l", labels), ("m", masks)):
        p = tmp_path / name
        p.write_text(text)
        files.append(p)
    return files


def test_load_toy(tmp_path):
    g = load_graph(*_write(tmp_path))
    assert g.node_count == 4 and len(g.edges) == 2


def test_load_dangling_endpoint(tmp_path):
    with pytest.raises(GraphFormatError, match=r"e:2: dangling endpoint 99"):
        load_graph(*_write(tmp_path, edges="0 1\n0 99\n"))


def test_load_empty_edges(tmp_path):
    g = load_graph(*_write(tmp_path, edges=""))
    assert len(g.edges) == 0
    single_holder(g)


def test_load_parse_errors(tmp_path):
    with pytest.raises(GraphFormatError, match=r"f:2"):
        load_graph(*_write(tmp_path, feats="1\t2\n3\tx\n5\t6\n7\t8\n"))
    with pytest.raises(GraphFormatError, match=r"m:3"):
        load_graph(*_write(tmp_path, masks="t\nt\nq\ns\n"))
    with pytest.raises(GraphFormatError, match="labels for 4 nodes"):
        load_graph(*_write(tmp_path, labels="0\n1\n"))


def test_label_range_validated():
    m = _toy()
    g = single_holder(m)
    g.labels = np.array([0, 5, 0, 1])
    with pytest.raises(GraphFormatError):
        g.validate()


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=4), st.integers(0, 1000))
def test_partition_covers_everything(weights, seed):
    props = np.array(weights) / np.sum(weights)
    m = generate_sbm(2, 10, 0.4, 0.1, 8, 1.0, seed=seed)
    g = vertical_partition(m, props, seed=seed)
    assert sum(x.shape[1] for x in g.features) == 8
    assert all(x.shape[1] >= 1 for x in g.features)
    assert sum(len(e) for e in g.edge_sets) == len(m.edges)
