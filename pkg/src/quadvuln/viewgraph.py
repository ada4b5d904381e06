"""ViewGraph: one structural view of a snippet as a dense 0/1 adjacency."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class ViewKind(enum.Enum):
    AST = "ast"
    CFG = "cfg"
    DFG = "dfg"


@dataclass(eq=False)
class ViewGraph:
    kind: ViewKind
    adjacency: np.ndarray
    node_labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise ValueError(f"adjacency must be a non-empty square matrix, got shape {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if np.diagonal(adj).any():
            raise ValueError("self-loops are not allowed")
        self.adjacency = adj.astype(np.uint8)
        if not self.node_labels:
            self.node_labels = [""] * adj.shape[0]
        if len(self.node_labels) != adj.shape[0]:
            raise ValueError(f"expected {adj.shape[0]} labels, got {len(self.node_labels)}")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.adjacency)
        return list(zip(rows.tolist(), cols.tolist()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ViewGraph):
            return NotImplemented
        return (
            self.kind is other.kind
            and np.array_equal(self.adjacency, other.adjacency)
            and list(self.node_labels) == list(other.node_labels)
        )

    def __repr__(self) -> str:
        return f"ViewGraph({self.kind.value}, n={self.n}, edges={int(self.adjacency.sum())})"

    def to_matrix_text(self) -> str:
        lines = [str(self.n)]
        lines.extend(" ".join(str(int(v)) for v in row) for row in self.adjacency)
        return "\n".join(lines) + "\n"
