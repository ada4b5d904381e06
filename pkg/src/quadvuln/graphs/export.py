"""DOT emitter, the inverse of :func:`quadvuln.frontend.dot.import_dot`."""

from __future__ import annotations

from quadvuln.viewgraph import ViewGraph


def escape_label(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def export_dot(g: ViewGraph) -> str:
    """Emit every node with its label, then edges in row-major order."""
    lines = ["digraph {"]
    for i, label in enumerate(g.node_labels):
        lines.append(f'  n{i} [label="{escape_label(label)}"];')
    for src, dst in g.edges():
        lines.append(f"  n{src} -> n{dst};")
    lines.append("}")
    return "\n".join(lines) + "\n"
