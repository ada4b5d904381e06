from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadvuln.errors import GraphError
from quadvuln.frontend import NodeKind, SyntaxNode, SyntaxTree, import_dot, parse_source
from quadvuln.graphs import build_ast_graph, build_cfg, build_dfg, export_dot, statement_nodes
from quadvuln.graphs.builders import def_use_table

DIAMOND = """\
int m(int a) {
    int b = 0;
    if (a > 0) {
        b = 1;
    } else {
        b = 2;
    }
    return b;
}
"""

REDEFINE = """\
void m() {
    int a = 1;
    a = 2;
    print(a);
}
"""

SWITCH_NO_DEFAULT = """\
void m(int k) {
    switch (k) {
        case 1:
            k = 5;
            break;
        case 2:
            k = 6;
    }
    emit(k);
}
"""

COUNTER = """\
int m() {
    int k = 0;
    while (k < 10) {
        emit(k);
        k = k + 1;
    }
    return k;
}
"""

SNIPPETS = [DIAMOND, REDEFINE, SWITCH_NO_DEFAULT, COUNTER]


def edge_set(g) -> set[tuple[int, int]]:
    return set(g.edges())


def test_square_cfg_golden(square_source):
    g = build_cfg(parse_source(square_source))
    assert g.node_labels == [
        "public int square(int n)",
        "int result = 1",
        "for (int i = 0; i < n; i++)",
        "result *= 2",
        "return result",
        "exit",
    ]
    assert edge_set(g) == {(0, 1), (1, 2), (2, 3), (3, 2), (2, 4), (4, 5)}


def test_square_dfg(square_source):
    g = build_dfg(parse_source(square_source))
    assert g.adjacency[1, 3] == 1  # int result = 1 -> result *= 2
    # n: signature -> for header; result: decl -> body -> return
    assert edge_set(g) == {(0, 2), (1, 3), (3, 4)}


def test_square_ast_is_a_tree(square_source):
    tree = parse_source(square_source)
    g = build_ast_graph(tree)
    # 37 tokens (one leaf each) plus 13 inner nodes counted by hand:
    # CompilationUnit, MethodDecl, Param, body Block, VarDeclStmt, ForStmt,
    # for-init VarDeclStmt, i < n, i++, loop Block, ExprStmt, AssignExpr, ReturnStmt
    assert len(tree.tokens) == 37
    assert g.n == 50
    assert int(g.adjacency.sum()) == g.n - 1
    assert g.adjacency.sum(axis=0).max() == 1


def test_statement_owns_token_leaves():
    tree = parse_source("void m() { int result = 1; }")
    g = build_ast_graph(tree)
    (decl,) = tree.find(NodeKind.VAR_DECL_STMT)
    children = [int(j) for j in np.nonzero(g.adjacency[decl])[0]]
    assert [g.node_labels[j] for j in children][:4] == [
        "TokenLeaf:int",
        "Identifier:result",
        "TokenLeaf:=",
        "Literal:1",
    ]


def test_single_node_ast():
    tok_tree = parse_source("void m() {}")
    lone = SyntaxTree((SyntaxNode(0, NodeKind.COMPILATION_UNIT, (), (0, 0)),), tok_tree.tokens[:1])
    g = build_ast_graph(lone)
    assert g.adjacency.tolist() == [[0]]


def test_straight_line_chain():
    g = build_cfg(parse_source("void m() { a(); b(); c(); }"))
    assert edge_set(g) == {(0, 1), (1, 2), (2, 3), (3, 4)}


def test_if_else_diamond():
    # 0 sig, 1 int b = 0, 2 if, 3 b = 1, 4 b = 2, 5 return b, 6 exit
    g = build_cfg(parse_source(DIAMOND))
    assert edge_set(g) == {(0, 1), (1, 2), (2, 3), (2, 4), (3, 5), (4, 5), (5, 6)}


def test_diamond_dfg_is_sequence_based():
    g = build_dfg(parse_source(DIAMOND))
    assert edge_set(g) == {(0, 2), (1, 3), (3, 4), (4, 5)}


def test_redefinition_kills_earlier_definition():
    tree = parse_source(REDEFINE)
    nodes, _ = statement_nodes(tree)
    table = def_use_table(tree, nodes)
    # hand-computed: (defs, uses) per statement node
    assert table == [
        (set(), set()),
        ({"a"}, set()),
        ({"a"}, set()),
        (set(), {"a"}),
        (set(), set()),
    ]
    g = build_dfg(tree)
    assert edge_set(g) == {(1, 2), (2, 3)}
    assert g.adjacency[1, 3] == 0


def test_no_variables_means_no_dfg_edges():
    g = build_dfg(parse_source("void m() { run(); stop(); }"))
    assert g.adjacency.sum() == 0
    assert g.n == 4


def test_loop_carried_dependence():
    # 0 sig, 1 int k = 0, 2 while, 3 emit(k), 4 k = k + 1, 5 return k, 6 exit
    g = build_dfg(parse_source(COUNTER))
    assert edge_set(g) == {(1, 2), (1, 3), (1, 4), (4, 5), (4, 2), (4, 3)}


def test_switch_without_default_can_skip_all_cases():
    # 0 sig, 1 switch, 2 k = 5, 3 break, 4 k = 6, 5 emit(k), 6 exit
    g = build_cfg(parse_source(SWITCH_NO_DEFAULT))
    assert edge_set(g) == {(0, 1), (1, 2), (1, 4), (1, 5), (2, 3), (3, 5), (4, 5), (5, 6)}


@pytest.mark.parametrize(
    "source",
    [
        "class A { void f() {} void g() {} }",
        "class A { int x; }",
    ],
)
def test_cfg_needs_exactly_one_method(source):
    with pytest.raises(GraphError, match="exactly one method"):
        build_cfg(parse_source(source))
    with pytest.raises(GraphError, match="exactly one method"):
        build_dfg(parse_source(source))


def test_unreachable_statement_is_rejected():
    with pytest.raises(GraphError, match="unreachable"):
        build_cfg(parse_source("int m() { return 1; foo(); }"))


def reachable(adj: np.ndarray, start: int) -> set[int]:
    seen, stack = {start}, [start]
    while stack:
        i = stack.pop()
        for j in np.nonzero(adj[i])[0]:
            if int(j) not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def assert_entry_exit_paths(g) -> None:
    everything = set(range(g.n))
    assert reachable(g.adjacency, 0) == everything
    assert reachable(g.adjacency.T, g.n - 1) == everything


@pytest.mark.parametrize("source", SNIPPETS)
def test_every_node_on_entry_exit_path(source):
    assert_entry_exit_paths(build_cfg(parse_source(source)))


@pytest.mark.parametrize("source", SNIPPETS)
@pytest.mark.parametrize("builder", [build_ast_graph, build_cfg, build_dfg])
def test_dot_round_trip_for_each_view(source, builder):
    g = builder(parse_source(source))
    assert import_dot(export_dot(g), g.kind) == g


_SIMPLE = ["a = a + 1;", "b = a * 2;", "call(a, b);", "int c = b;", "a++;"]


@st.composite
def statements(draw, depth=0):
    choices = list(_SIMPLE)
    if depth < 2:
        choices += ["if", "ifelse", "while", "for", "switch"]
    kind = draw(st.sampled_from(choices))
    if kind in _SIMPLE:
        return kind
    body = " ".join(draw(st.lists(statements(depth + 1), min_size=1, max_size=3)))
    if kind == "if":
        return f"if (a > b) {{ {body} }}"
    if kind == "ifelse":
        other = " ".join(draw(st.lists(statements(depth + 1), min_size=1, max_size=2)))
        return f"if (a < 3) {{ {body} }} else {{ {other} }}"
    if kind == "while":
        return f"while (a < b) {{ {body} }}"
    if kind == "for":
        return f"for (int i = 0; i < b; i++) {{ {body} }}"
    return f"switch (a) {{ case 1: {body} break; case 2: b = 0; default: a = 1; }}"


@settings(max_examples=150, deadline=None)
@given(st.lists(statements(), min_size=1, max_size=5))
def test_generated_cfgs_are_well_formed(stmts):
    source = "int m(int a, int b) { " + " ".join(stmts) + " return a; }"
    tree = parse_source(source)
    cfg = build_cfg(tree)
    assert_entry_exit_paths(cfg)
    assert np.diagonal(cfg.adjacency).sum() == 0
    dfg = build_dfg(tree)
    assert dfg.n == cfg.n
    nodes, _ = statement_nodes(tree)
    table = def_use_table(tree, nodes)
    for i, j in dfg.edges():
        names_i = table[i][0] | table[i][1]
        names_j = table[j][0] | table[j][1]
        assert names_i & names_j
