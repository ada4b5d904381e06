"""AST, CFG and DFG adjacency views of a parsed snippet.

The AST view has one node per syntax node. CFG and DFG share a
statement-level node universe: the method signature (entry), then every
statement of the body in pre-order, then a synthetic exit node. Compound
statements contribute a single header node (``if (c)``, ``for (...)``,
``while (c)``, ``switch (s)``); blocks contribute none.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from quadvuln.errors import GraphError
from quadvuln.frontend.syntax import STATEMENT_KINDS, NodeKind, SyntaxTree, detokenize
from quadvuln.viewgraph import ViewGraph, ViewKind

EXIT_LABEL = "exit"


def build_ast_graph(tree: SyntaxTree) -> ViewGraph:
    n = len(tree)
    adj = np.zeros((n, n), dtype=np.uint8)
    for node in tree.nodes:
        for child in node.children:
            adj[node.id, child] = 1
    return ViewGraph(ViewKind.AST, adj, [tree.label(i) for i in range(n)])


@dataclass
class StmtNode:
    """One CFG/DFG node and the syntax it stands for."""

    index: int
    syntax_id: int | None  # None for the synthetic exit
    label: str
    header_ids: list[int] = field(default_factory=list)  # syntax subtrees analysed for defs/uses
    loop_end: int | None = None  # for loop headers: last statement index inside the body


def _single_method(tree: SyntaxTree) -> int:
    methods = tree.find(NodeKind.METHOD_DECL)
    if len(methods) != 1:
        raise GraphError(f"method-level CFG requires exactly one method (found {len(methods)})")
    return methods[0]


def _header_children(tree: SyntaxTree, sid: int) -> list[int]:
    """Children of a statement that belong to its own node (not nested statements)."""
    node = tree[sid]
    kind = node.kind
    children = list(node.children)
    if kind is NodeKind.IF_STMT:
        return children[:4]
    if kind in (NodeKind.WHILE_STMT, NodeKind.FOR_STMT):
        return children[:-1]
    if kind is NodeKind.SWITCH_STMT:
        return children[:4]
    return [sid]


def _header_label(tree: SyntaxTree, sid: int, header: list[int]) -> str:
    toks = []
    for cid in header:
        start, end = tree[cid].token_span
        toks.extend(tree.tokens[start : end + 1])
    if toks and toks[-1].text == ";":
        toks = toks[:-1]
    return detokenize(toks)


class _CfgBuilder:
    def __init__(self, tree: SyntaxTree) -> None:
        self.tree = tree
        self.nodes: list[StmtNode] = []
        self.edges: set[tuple[int, int]] = set()
        self.exit_index = -1
        self.returns: list[int] = []

    def new_node(self, sid: int | None, label: str, header: list[int]) -> int:
        idx = len(self.nodes)
        self.nodes.append(StmtNode(idx, sid, label, header))
        return idx

    def link(self, sources: list[int], target: int) -> None:
        for s in sources:
            self.edges.add((s, target))

    def build(self) -> tuple[list[StmtNode], set[tuple[int, int]]]:
        tree = self.tree
        method = _single_method(tree)
        children = tree[method].children
        body = children[-1]
        signature = list(children[:-1])
        entry = self.new_node(method, _header_label(tree, method, signature), signature)
        tails = self.stmt(body, [entry], break_targets=[])
        self.exit_index = self.new_node(None, EXIT_LABEL, [])
        self.link(tails, self.exit_index)
        self.link(self.returns, self.exit_index)
        return self.nodes, self.edges

    def stmt_list(self, sids: list[int], preds: list[int], break_targets: list[list[int]]) -> list[int]:
        for pos, sid in enumerate(sids):
            if not preds:
                start_tok = self.tree.tokens[self.tree[sid].token_span[0]]
                raise GraphError(f"unreachable statement at {start_tok.line}:{start_tok.col}")
            preds = self.stmt(sid, preds, break_targets)
        return preds

    def stmt(self, sid: int, preds: list[int], break_targets: list[list[int]]) -> list[int]:
        """Add nodes for one statement; return the dangling fall-through tails."""
        tree = self.tree
        node = tree[sid]
        kind = node.kind
        if kind is NodeKind.BLOCK:
            inner = [c for c in node.children if tree[c].kind in STATEMENT_KINDS]
            return self.stmt_list(inner, preds, break_targets)

        header = _header_children(tree, sid)
        idx = self.new_node(sid, _header_label(tree, sid, header), header)
        self.link(preds, idx)

        if kind is NodeKind.RETURN_STMT:
            self.returns.append(idx)
            return []
        if kind is NodeKind.BREAK_STMT:
            if not break_targets:
                raise GraphError("break outside loop or switch")
            break_targets[-1].append(idx)
            return []
        if kind is NodeKind.IF_STMT:
            then_tails = self.stmt(node.children[4], [idx], break_targets)
            if len(node.children) > 5:
                else_tails = self.stmt(node.children[6], [idx], break_targets)
            else:
                else_tails = [idx]
            return then_tails + else_tails
        if kind in (NodeKind.WHILE_STMT, NodeKind.FOR_STMT):
            breaks: list[int] = []
            body_tails = self.stmt(node.children[-1], [idx], break_targets + [breaks])
            self.link(body_tails, idx)
            self.nodes[idx].loop_end = len(self.nodes) - 1
            return [idx] + breaks
        if kind is NodeKind.SWITCH_STMT:
            breaks = []
            tails: list[int] = []
            has_default = False
            for clause in node.children:
                if tree[clause].kind is not NodeKind.CASE_CLAUSE:
                    continue
                if tree.tokens[tree[clause].token_span[0]].text == "default":
                    has_default = True
                body = [c for c in tree[clause].children if tree[c].kind in STATEMENT_KINDS]
                if body:
                    tails.extend(self.stmt_list(body, [idx], break_targets + [breaks]))
                else:
                    tails.append(idx)
            if not has_default:
                tails.append(idx)
            return sorted(set(tails + breaks))
        return [idx]


def statement_nodes(tree: SyntaxTree) -> tuple[list[StmtNode], set[tuple[int, int]]]:
    """Statement-level node list and control-flow edges for the single method."""
    return _CfgBuilder(tree).build()


def build_cfg(tree: SyntaxTree) -> ViewGraph:
    """Control-flow graph of the snippet's single method.

    ``for``/``while`` headers branch into the body and to the statement
    after the loop; the body's tail jumps back to the header. ``switch``
    branches to every case body, and case tails fall out of the switch.
    Every ``return`` jumps to the synthetic exit.

    Raises:
        GraphError: zero or several methods, stray ``break``, or a
            statement made unreachable by a preceding return/break.
    """
    nodes, edges = statement_nodes(tree)
    n = len(nodes)
    adj = np.zeros((n, n), dtype=np.uint8)
    for s, t in edges:
        if s != t:
            adj[s, t] = 1
    return ViewGraph(ViewKind.CFG, adj, [node.label for node in nodes])


# -- data flow ----------------------------------------------------------------


def _defs_uses(tree: SyntaxTree, roots: list[int]) -> tuple[set[str], set[str]]:
    defs: set[str] = set()
    uses: set[str] = set()

    def target_name(nid: int) -> str | None:
        node = tree[nid]
        if node.kind is NodeKind.IDENTIFIER:
            return tree.leaf_text(nid)
        if node.kind in (NodeKind.ARRAY_ACCESS, NodeKind.FIELD_ACCESS, NodeKind.PAREN_EXPR):
            inner = node.children[1] if node.kind is NodeKind.PAREN_EXPR else node.children[0]
            return target_name(inner)
        return None

    def visit(nid: int) -> None:
        node = tree[nid]
        kind = node.kind
        if kind is NodeKind.IDENTIFIER:
            uses.add(tree.leaf_text(nid))
            return
        if kind in (NodeKind.VAR_DECL_STMT, NodeKind.PARAM):
            for c in node.children:
                if tree[c].kind is NodeKind.IDENTIFIER:
                    defs.add(tree.leaf_text(c))
                else:
                    visit(c)
            return
        if kind is NodeKind.ASSIGN_EXPR:
            target, op, value = node.children
            name = target_name(target)
            if name is not None:
                defs.add(name)
            if tree.leaf_text(op) != "=" or tree[target].kind is not NodeKind.IDENTIFIER:
                visit(target)
            visit(value)
            return
        if kind is NodeKind.UNARY_EXPR:
            ops = [c for c in node.children if tree[c].kind is NodeKind.TOKEN_LEAF]
            if any(tree.leaf_text(o) in ("++", "--") for o in ops):
                operand = [c for c in node.children if tree[c].kind is not NodeKind.TOKEN_LEAF][0]
                name = target_name(operand)
                if name is not None:
                    defs.add(name)
        for c in node.children:
            visit(c)

    for r in roots:
        visit(r)
    return defs, uses


def def_use_table(tree: SyntaxTree, nodes: list[StmtNode]) -> list[tuple[set[str], set[str]]]:
    return [_defs_uses(tree, node.header_ids) for node in nodes]


def build_dfg(tree: SyntaxTree) -> ViewGraph:
    """Def-use graph over the CFG's statement nodes.

    Statements are taken in pre-order regardless of branching. A definition
    of ``v`` links to every later statement that uses or redefines ``v``,
    stopping after the first redefinition. A definition inside a loop body
    that survives to the end of the body also links to uses from the loop
    header up to itself, modelling one extra iteration.
    """
    nodes, _ = statement_nodes(tree)
    table = def_use_table(tree, nodes)
    n = len(nodes)
    adj = np.zeros((n, n), dtype=np.uint8)
    loops = [(node.index, node.loop_end) for node in nodes if node.loop_end is not None]

    for k, (defs, _) in enumerate(table):
        for var in defs:
            for j in range(k + 1, n):
                d_j, u_j = table[j]
                if var in u_j or var in d_j:
                    adj[k, j] = 1
                if var in d_j:
                    break
            # innermost loop strictly containing k in its body
            enclosing = [(h, end) for h, end in loops if h < k <= end]
            if not enclosing:
                continue
            head, end = max(enclosing)
            if any(var in table[j][0] for j in range(k + 1, end + 1)):
                continue
            for j in range(head, k):
                d_j, u_j = table[j]
                if var in u_j or var in d_j:
                    adj[k, j] = 1
                if var in d_j:
                    break
    np.fill_diagonal(adj, 0)
    return ViewGraph(ViewKind.DFG, adj, [node.label for node in nodes])
