"""Syntax tree produced by the parser.

Nodes are numbered in pre-order; every token of the input is owned by
exactly one leaf (a node with no children).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from quadvuln.frontend.lexer import Token


class NodeKind(enum.Enum):
    COMPILATION_UNIT = "CompilationUnit"
    CLASS_DECL = "ClassDecl"
    METHOD_DECL = "MethodDecl"
    PARAM = "Param"
    BLOCK = "Block"
    VAR_DECL_STMT = "VarDeclStmt"
    EXPR_STMT = "ExprStmt"
    IF_STMT = "IfStmt"
    FOR_STMT = "ForStmt"
    WHILE_STMT = "WhileStmt"
    SWITCH_STMT = "SwitchStmt"
    CASE_CLAUSE = "CaseClause"
    RETURN_STMT = "ReturnStmt"
    BREAK_STMT = "BreakStmt"
    CALL_EXPR = "CallExpr"
    BINARY_EXPR = "BinaryExpr"
    UNARY_EXPR = "UnaryExpr"
    ASSIGN_EXPR = "AssignExpr"
    FIELD_ACCESS = "FieldAccess"
    ARRAY_ACCESS = "ArrayAccess"
    NEW_EXPR = "NewExpr"
    PAREN_EXPR = "ParenExpr"
    IDENTIFIER = "Identifier"
    LITERAL = "Literal"
    TOKEN_LEAF = "TokenLeaf"


STATEMENT_KINDS = frozenset(
    {
        NodeKind.BLOCK,
        NodeKind.VAR_DECL_STMT,
        NodeKind.EXPR_STMT,
        NodeKind.IF_STMT,
        NodeKind.FOR_STMT,
        NodeKind.WHILE_STMT,
        NodeKind.SWITCH_STMT,
        NodeKind.RETURN_STMT,
        NodeKind.BREAK_STMT,
    }
)

LEAF_KINDS = frozenset({NodeKind.IDENTIFIER, NodeKind.LITERAL, NodeKind.TOKEN_LEAF})


@dataclass(frozen=True)
class SyntaxNode:
    id: int
    kind: NodeKind
    children: tuple[int, ...]
    token_span: tuple[int, int]  # inclusive

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class SyntaxTree:
    nodes: tuple[SyntaxNode, ...]
    tokens: tuple[Token, ...]
    root: int = 0
    _parents: tuple[int, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        parents = [-1] * len(self.nodes)
        for node in self.nodes:
            for child in node.children:
                parents[child] = node.id
        object.__setattr__(self, "_parents", tuple(parents))

    def __getitem__(self, node_id: int) -> SyntaxNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def parent(self, node_id: int) -> int | None:
        p = self._parents[node_id]
        return None if p < 0 else p

    def leaf_text(self, node_id: int) -> str:
        node = self.nodes[node_id]
        if not node.is_leaf:
            raise ValueError(f"node {node_id} ({node.kind.value}) is not a leaf")
        return self.tokens[node.token_span[0]].text

    def text(self, node_id: int) -> str:
        start, end = self.nodes[node_id].token_span
        return detokenize(self.tokens[start : end + 1])

    def walk(self, node_id: int | None = None):
        """Yield node ids of the subtree rooted at ``node_id`` in pre-order."""
        stack = [self.root if node_id is None else node_id]
        while stack:
            nid = stack.pop()
            yield nid
            stack.extend(reversed(self.nodes[nid].children))

    def find(self, kind: NodeKind) -> list[int]:
        return [n.id for n in self.nodes if n.kind is kind]

    def label(self, node_id: int) -> str:
        node = self.nodes[node_id]
        if node.is_leaf:
            return f"{node.kind.value}:{self.leaf_text(node_id)}"
        return node.kind.value

    def pretty(self) -> str:
        lines: list[str] = []

        def rec(nid: int, depth: int) -> None:
            lines.append(f"{'  ' * depth}[{nid}] {self.label(nid)}")
            for child in self.nodes[nid].children:
                rec(child, depth + 1)

        rec(self.root, 0)
        return "\n".join(lines)


def detokenize(tokens) -> str:
    """Rebuild source text for a token run, keeping intra-line spacing."""
    parts: list[str] = []
    prev: Token | None = None
    for tok in tokens:
        if prev is not None:
            if tok.line == prev.line:
                gap = tok.col - (prev.col + len(prev.text))
                parts.append(" " * max(gap, 0))
            else:
                parts.append(" ")
        parts.append(tok.text)
        prev = tok
    return "".join(parts)
