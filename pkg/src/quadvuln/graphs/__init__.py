"""Structural graph views (AST, CFG, DFG), MetaPath augmentation and DOT export."""

from quadvuln.graphs.builders import build_ast_graph, build_cfg, build_dfg, statement_nodes
from quadvuln.graphs.export import export_dot
from quadvuln.graphs.metapath import apply_metapath
from quadvuln.viewgraph import ViewGraph, ViewKind

__all__ = [
    "ViewGraph",
    "ViewKind",
    "apply_metapath",
    "build_ast_graph",
    "build_cfg",
    "build_dfg",
    "export_dot",
    "statement_nodes",
]
