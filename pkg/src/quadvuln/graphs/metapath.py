"""Length-2 MetaPath augmentation: make every directed edge bidirectional."""

from __future__ import annotations

import numpy as np

from quadvuln.viewgraph import ViewGraph


def add_reverse_edges(adjacency: np.ndarray) -> np.ndarray:
    """Return a copy where M[q, i] = 1 whenever M[i, q] = 1."""
    out = np.array(adjacency, copy=True)
    rows, cols = np.nonzero(adjacency)
    out[cols, rows] = 1
    return out


def apply_metapath(g: ViewGraph) -> ViewGraph:
    return ViewGraph(g.kind, add_reverse_edges(g.adjacency), list(g.node_labels))
