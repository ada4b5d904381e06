"""Reader for the DOT subset used to exchange graphs with external tools.

Accepted input::

    digraph [name] {
        n0 [label="..."];
        n0 -> n1;
    }

Edges must join ``n<uint>`` ids. ``label`` attributes on node statements
are kept; every other attribute and every other statement kind
(``node [...]``, ``rankdir=LR``, ...) is ignored.
"""

from __future__ import annotations

import re

import numpy as np

from quadvuln.errors import DotError
from quadvuln.viewgraph import ViewGraph, ViewKind

_HEADER = re.compile(r"^\s*(strict\s+)?digraph\b\s*(\"(?:[^\"\\]|\\.)*\"|\w+)?\s*\{", re.S)
_NODE_ID = re.compile(r"^n(\d+)$")
_EDGE = re.compile(r"^(\S+)\s*->\s*(\S+?)\s*(\[.*\])?$", re.S)
_NODE_STMT = re.compile(r"^(\S+)\s*(\[.*\])?$", re.S)
_LABEL = re.compile(r"\blabel\s*=\s*\"((?:[^\"\\]|\\.)*)\"", re.S)
_EDGE_PREFIX = re.compile(r"^[^\s\[\"]+\s*->")
_IGNORED_STMT = re.compile(r"^(node|edge|graph)\b|^\w+\s*=", re.S)


def unescape_label(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"n": "\n", '"': '"', "\\": "\\"}.get(nxt, "\\" + nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _split_statements(body: str, first_line: int) -> list[tuple[str, int]]:
    """Split on ';' and newlines that are not inside quotes or brackets."""
    stmts: list[tuple[str, int]] = []
    buf: list[str] = []
    line = first_line
    start_line = line
    in_str = False
    depth = 0
    i = 0
    while i < len(body):
        ch = body[i]
        if in_str:
            buf.append(ch)
            if ch == "\\" and i + 1 < len(body):
                buf.append(body[i + 1])
                if body[i + 1] == "\n":
                    line += 1
                i += 2
                continue
            if ch == '"':
                in_str = False
            elif ch == "\n":
                line += 1
        elif ch == '"':
            in_str = True
            buf.append(ch)
        elif ch == "[":
            depth += 1
            buf.append(ch)
        elif ch == "]":
            depth -= 1
            buf.append(ch)
        elif ch == ";" or (ch == "\n" and depth == 0):
            text = "".join(buf).strip()
            if text:
                stmts.append((text, start_line))
            buf = []
            if ch == "\n":
                line += 1
            start_line = line
        else:
            if ch == "\n":
                line += 1
            if not buf or not "".join(buf).strip():
                start_line = line
            buf.append(ch)
        i += 1
    if in_str:
        raise DotError("unterminated string", start_line)
    text = "".join(buf).strip()
    if text:
        stmts.append((text, start_line))
    return stmts


def _node_index(token: str, line: int) -> int:
    token = token.strip('"')
    m = _NODE_ID.match(token)
    if not m:
        raise DotError(f"bad node id {token!r}; expected n<non-negative integer>", line)
    return int(m.group(1))


def import_dot(text: str, kind: ViewKind = ViewKind.AST) -> ViewGraph:
    """Build a ViewGraph from DOT text.

    The node count is one more than the largest index mentioned by an edge
    or a node statement.

    Raises:
        DotError: malformed header or statement (with its line number), or a
            graph that mentions no nodes at all.
    """
    header = _HEADER.match(text)
    if not header:
        raise DotError("expected 'digraph {'", 1)
    close = text.rfind("}")
    if close < header.end():
        raise DotError("missing closing '}'", text.count("\n") + 1)
    if text[close + 1 :].strip():
        raise DotError("trailing text after closing '}'", text[: close + 1].count("\n") + 1)
    body = text[header.end() : close]
    first_line = text[: header.end()].count("\n") + 1

    edges: list[tuple[int, int]] = []
    labels: dict[int, str] = {}
    max_index = -1
    for stmt, line in _split_statements(body, first_line):
        if _EDGE_PREFIX.match(stmt):
            m = _EDGE.match(stmt)
            if not m or "->" in m.group(2):
                raise DotError(f"malformed edge statement {stmt!r}", line)
            src, dst = _node_index(m.group(1), line), _node_index(m.group(2), line)
            if src == dst:
                raise DotError(f"self-loop on n{src} is not allowed", line)
            edges.append((src, dst))
            max_index = max(max_index, src, dst)
        elif _IGNORED_STMT.match(stmt):
            continue
        else:
            m = _NODE_STMT.match(stmt)
            if not m:
                raise DotError(f"malformed statement {stmt!r}", line)
            idx = _node_index(m.group(1), line)
            max_index = max(max_index, idx)
            if m.group(2):
                lab = _LABEL.search(m.group(2))
                if lab:
                    labels[idx] = unescape_label(lab.group(1))
    if max_index < 0:
        raise DotError("no nodes")  # deliberately not an empty graph
    n = max_index + 1
    adj = np.zeros((n, n), dtype=np.uint8)
    for src, dst in edges:
        adj[src, dst] = 1
    return ViewGraph(kind, adj, [labels.get(i, "") for i in range(n)])
