from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quadvuln.graphs import ViewGraph, ViewKind, apply_metapath
from quadvuln.graphs.metapath import add_reverse_edges


def graph(adj) -> ViewGraph:
    adj = np.array(adj, dtype=np.uint8)
    np.fill_diagonal(adj, 0)
    return ViewGraph(ViewKind.CFG, adj, [f"s{i}" for i in range(adj.shape[0])])


def test_single_edge_gains_its_reverse():
    out = apply_metapath(graph([[0, 1], [0, 0]]))
    assert out.adjacency.tolist() == [[0, 1], [1, 0]]


def test_zero_matrix_unchanged():
    assert apply_metapath(graph(np.zeros((4, 4)))).adjacency.sum() == 0


def test_symmetric_matrix_unchanged():
    g = graph([[0, 1, 1], [1, 0, 0], [1, 0, 0]])
    assert apply_metapath(g) == g


def test_labels_and_kind_preserved():
    g = graph([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    out = apply_metapath(g)
    assert out.kind is g.kind and out.node_labels == g.node_labels
    assert g.adjacency.tolist() == [[0, 1, 0], [0, 0, 1], [0, 0, 0]]  # input untouched


def reference(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    out = m.copy()
    for i in range(n):
        for j in range(n):
            if m[i, j]:
                out[j, i] = 1
    return out


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 32).flatmap(lambda n: arrays(np.uint8, (n, n), elements=st.integers(0, 1))))
def test_metapath_properties(m):
    out = add_reverse_edges(m)
    assert np.array_equal(out, out.T)
    assert (out >= m).all()
    assert np.array_equal(add_reverse_edges(out), out)
    assert np.array_equal(out, reference(m))
