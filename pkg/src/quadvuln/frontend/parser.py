"""Recursive-descent parser for the supported Java subset.

Supported: classes (with fields, constructors, methods), parameters, local
variable declarations, assignments, binary/unary expressions, casts,
method calls, field and array access, ``new``, literals, ``if``/``else``,
``for``, ``while``, ``switch``/``case``, ``break`` and ``return``.
Anything else is rejected with a located diagnostic instead of being
guessed at.

A top-level method without an enclosing class is accepted, since
vulnerability datasets are usually method-level snippets.
"""

from __future__ import annotations

from quadvuln.errors import ParseDiagnostic, ParseError
from quadvuln.frontend.lexer import Token, TokenKind, tokenize
from quadvuln.frontend.syntax import NodeKind, SyntaxNode, SyntaxTree

MODIFIERS = frozenset(
    {"public", "private", "protected", "static", "final", "abstract", "synchronized", "native", "transient", "volatile", "strictfp"}
)
PRIMITIVES = frozenset({"int", "long", "short", "byte", "char", "boolean", "float", "double", "void", "var"})
ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>="})
BINARY_LEVELS: tuple[frozenset[str], ...] = (
    frozenset({"||"}),
    frozenset({"&&"}),
    frozenset({"|"}),
    frozenset({"^"}),
    frozenset({"&"}),
    frozenset({"==", "!="}),
    frozenset({"<", ">", "<=", ">="}),
    frozenset({"<<", ">>", ">>>"}),
    frozenset({"+", "-"}),
    frozenset({"*", "/", "%"}),
)
PREFIX_OPS = frozenset({"+", "-", "!", "~", "++", "--"})
UNSUPPORTED_STATEMENTS = {
    "do": "do/while loops",
    "try": "try/catch",
    "throw": "throw statements",
    "continue": "continue statements",
    "synchronized": "synchronized blocks",
    "assert": "assert statements",
    "class": "local classes",
    "interface": "interfaces",
    "enum": "enums",
}


class _Node:
    """Mutable build-time node; flattened into SyntaxNode in pre-order."""

    __slots__ = ("kind", "children", "token")

    def __init__(self, kind: NodeKind, children: list[_Node] | None = None, token: int | None = None) -> None:
        self.kind = kind
        self.children = children if children is not None else []
        self.token = token


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.toks = tokens
        self.pos = 0

    # -- token helpers ---------------------------------------------------

    def peek(self, offset: int = 0) -> Token | None:
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def at(self, text: str, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok is not None and tok.text == text and tok.kind is not TokenKind.LITERAL

    def at_kind(self, kind: TokenKind, offset: int = 0) -> bool:
        tok = self.peek(offset)
        return tok is not None and tok.kind is kind

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        if tok is None:
            tok = self.peek()
        if tok is None:
            last = self.toks[-1] if self.toks else None
            line, col = (last.line, last.col + len(last.text)) if last else (1, 1)
            return ParseError(ParseDiagnostic(f"{message} (at end of input)", line, col))
        return ParseError(ParseDiagnostic(f"{message}, found {tok.text!r}", tok.line, tok.col))

    def leaf(self, kind: NodeKind = NodeKind.TOKEN_LEAF) -> _Node:
        if self.pos >= len(self.toks):
            raise self.error("unexpected end of input")
        node = _Node(kind, token=self.pos)
        self.pos += 1
        return node

    def expect(self, text: str) -> _Node:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.leaf()

    def expect_ident(self, kind: NodeKind = NodeKind.TOKEN_LEAF) -> _Node:
        if not self.at_kind(TokenKind.IDENTIFIER):
            raise self.error("expected identifier")
        return self.leaf(kind)

    # -- declarations ----------------------------------------------------

    def compilation_unit(self) -> _Node:
        if not self.toks:
            raise ParseError(ParseDiagnostic("empty input", 1, 1))
        unit = _Node(NodeKind.COMPILATION_UNIT)
        while self.pos < len(self.toks):
            if self.at("import") or self.at("package"):
                raise self.error("package/import declarations are not supported")
            unit.children.append(self.member(class_name=None))
        return unit

    def modifiers(self) -> list[_Node]:
        mods = []
        while self.peek() is not None and self.peek().text in MODIFIERS and self.peek().kind is TokenKind.KEYWORD:
            if self.at("synchronized") and self.at("(", 1):
                break
            mods.append(self.leaf())
        if self.at("@"):
            raise self.error("annotations are not supported")
        return mods

    def member(self, class_name: str | None) -> _Node:
        start = self.pos
        mods = self.modifiers()
        if self.at("class"):
            return self.class_decl(mods)
        if self.at("interface") or self.at("enum"):
            raise self.error("interfaces and enums are not supported")
        if class_name is not None and self.at(class_name) and self.at("(", 1):
            name = self.leaf()
            return self.method_rest(mods, [], name)
        if self.at("{") or self.at("static") and self.at("{", 1):
            raise self.error("initializer blocks are not supported")
        if self.at("<"):
            raise self.error("generic methods are not supported")
        type_leaves = self.type_ref()
        if not self.at_kind(TokenKind.IDENTIFIER):
            raise self.error("expected declaration name")
        if self.at("(", 1):
            name = self.leaf()
            return self.method_rest(mods, type_leaves, name)
        if class_name is None:
            self.pos = start
            raise self.error("expected a class or method declaration")
        decl = _Node(NodeKind.VAR_DECL_STMT, mods + type_leaves)
        self.declarators(decl)
        decl.children.append(self.expect(";"))
        return decl

    def class_decl(self, mods: list[_Node]) -> _Node:
        node = _Node(NodeKind.CLASS_DECL, mods)
        node.children.append(self.expect("class"))
        name_tok = self.peek()
        node.children.append(self.expect_ident())
        if self.at("<"):
            raise self.error("generic classes are not supported")
        if self.at("extends"):
            node.children.append(self.leaf())
            node.children.extend(self.qualified_name())
        if self.at("implements"):
            node.children.append(self.leaf())
            node.children.extend(self.qualified_name())
            while self.at(","):
                node.children.append(self.leaf())
                node.children.extend(self.qualified_name())
        node.children.append(self.expect("{"))
        while not self.at("}"):
            if self.peek() is None:
                raise self.error("unbalanced braces: class body is not closed")
            node.children.append(self.member(class_name=name_tok.text))
        node.children.append(self.leaf())
        return node

    def method_rest(self, mods: list[_Node], type_leaves: list[_Node], name: _Node) -> _Node:
        node = _Node(NodeKind.METHOD_DECL, mods + type_leaves + [name])
        node.children.append(self.expect("("))
        if not self.at(")"):
            node.children.append(self.param())
            while self.at(","):
                node.children.append(self.leaf())
                node.children.append(self.param())
        node.children.append(self.expect(")"))
        if self.at("throws"):
            node.children.append(self.leaf())
            node.children.extend(self.qualified_name())
            while self.at(","):
                node.children.append(self.leaf())
                node.children.extend(self.qualified_name())
        if not self.at("{"):
            raise self.error("expected method body")
        node.children.append(self.block())
        return node

    def param(self) -> _Node:
        children = []
        if self.at("final"):
            children.append(self.leaf())
        children.extend(self.type_ref())
        if self.at("."):
            raise self.error("varargs are not supported")
        children.append(self.expect_ident(NodeKind.IDENTIFIER))
        return _Node(NodeKind.PARAM, children)

    def qualified_name(self) -> list[_Node]:
        parts = [self.expect_ident()]
        while self.at(".") and self.at_kind(TokenKind.IDENTIFIER, 1):
            parts.append(self.leaf())
            parts.append(self.leaf())
        if self.at("<"):
            raise self.error("generic types are not supported")
        return parts

    def type_ref(self) -> list[_Node]:
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.KEYWORD and tok.text in PRIMITIVES:
            parts = [self.leaf()]
        elif tok is not None and tok.kind is TokenKind.IDENTIFIER:
            parts = self.qualified_name()
        else:
            raise self.error("expected a type")
        while self.at("[") and self.at("]", 1):
            parts.append(self.leaf())
            parts.append(self.leaf())
        return parts

    def looks_like_decl(self) -> bool:
        i = 0
        if self.at("final"):
            i += 1
        tok = self.peek(i)
        if tok is None:
            return False
        if tok.kind is TokenKind.KEYWORD and tok.text in PRIMITIVES:
            return True
        if tok.kind is not TokenKind.IDENTIFIER:
            return False
        i += 1
        while self.at(".", i) and self.at_kind(TokenKind.IDENTIFIER, i + 1):
            i += 2
        while self.at("[", i) and self.at("]", i + 1):
            i += 2
        if self.at("<", i) and self.at_kind(TokenKind.IDENTIFIER, i + 1) and (self.at(">", i + 2) or self.at(",", i + 2)):
            raise self.error("generic types are not supported", self.peek(i))
        return self.at_kind(TokenKind.IDENTIFIER, i)

    def declarators(self, decl: _Node) -> None:
        while True:
            decl.children.append(self.expect_ident(NodeKind.IDENTIFIER))
            if self.at("[") and self.at("]", 1):
                raise self.error("C-style array declarators are not supported")
            if self.at("="):
                decl.children.append(self.leaf())
                if self.at("{"):
                    raise self.error("array initializers are not supported")
                decl.children.append(self.expression())
            if not self.at(","):
                return
            decl.children.append(self.leaf())

    def local_decl(self, terminated: bool = True) -> _Node:
        decl = _Node(NodeKind.VAR_DECL_STMT)
        if self.at("final"):
            decl.children.append(self.leaf())
        decl.children.extend(self.type_ref())
        self.declarators(decl)
        if terminated:
            decl.children.append(self.expect(";"))
        return decl

    # -- statements ------------------------------------------------------

    def block(self) -> _Node:
        node = _Node(NodeKind.BLOCK, [self.expect("{")])
        while not self.at("}"):
            if self.peek() is None:
                raise self.error("unbalanced braces: block is not closed")
            node.children.append(self.statement())
        node.children.append(self.leaf())
        return node

    def statement(self) -> _Node:
        tok = self.peek()
        if tok is None:
            raise self.error("expected statement")
        if tok.kind is TokenKind.KEYWORD and tok.text in UNSUPPORTED_STATEMENTS:
            raise self.error(f"{UNSUPPORTED_STATEMENTS[tok.text]} are not supported")
        if self.at("{"):
            return self.block()
        if self.at("}"):
            raise self.error("unbalanced braces: unexpected closing brace")
        if self.at(";"):
            raise self.error("empty statements are not supported")
        if self.at("if"):
            return self.if_stmt()
        if self.at("for"):
            return self.for_stmt()
        if self.at("while"):
            node = _Node(NodeKind.WHILE_STMT, [self.leaf(), self.expect("(")])
            node.children.append(self.expression())
            node.children.append(self.expect(")"))
            node.children.append(self.statement())
            return node
        if self.at("switch"):
            return self.switch_stmt()
        if self.at("return"):
            node = _Node(NodeKind.RETURN_STMT, [self.leaf()])
            if not self.at(";"):
                node.children.append(self.expression())
            node.children.append(self.expect(";"))
            return node
        if self.at("break"):
            node = _Node(NodeKind.BREAK_STMT, [self.leaf()])
            if self.at_kind(TokenKind.IDENTIFIER):
                raise self.error("labelled break is not supported")
            node.children.append(self.expect(";"))
            return node
        if self.at("else"):
            raise self.error("'else' without 'if'")
        if self.at("case") or self.at("default"):
            raise self.error("case label outside switch")
        if self.at_kind(TokenKind.IDENTIFIER) and self.at(":", 1):
            raise self.error("labelled statements are not supported")
        if self.looks_like_decl():
            return self.local_decl()
        expr = self.expression()
        return _Node(NodeKind.EXPR_STMT, [expr, self.expect(";")])

    def if_stmt(self) -> _Node:
        node = _Node(NodeKind.IF_STMT, [self.leaf(), self.expect("(")])
        node.children.append(self.expression())
        node.children.append(self.expect(")"))
        node.children.append(self.statement())
        if self.at("else"):
            node.children.append(self.leaf())
            node.children.append(self.statement())
        return node

    def for_stmt(self) -> _Node:
        node = _Node(NodeKind.FOR_STMT, [self.leaf(), self.expect("(")])
        if not self.at(";"):
            if self.looks_like_decl():
                node.children.append(self.local_decl(terminated=False))
                if self.at(":"):
                    raise self.error("enhanced for loops are not supported")
            else:
                self.expression_list(node)
        node.children.append(self.expect(";"))
        if not self.at(";"):
            node.children.append(self.expression())
        node.children.append(self.expect(";"))
        if not self.at(")"):
            self.expression_list(node)
        node.children.append(self.expect(")"))
        node.children.append(self.statement())
        return node

    def expression_list(self, into: _Node) -> None:
        into.children.append(self.expression())
        while self.at(","):
            into.children.append(self.leaf())
            into.children.append(self.expression())

    def switch_stmt(self) -> _Node:
        node = _Node(NodeKind.SWITCH_STMT, [self.leaf(), self.expect("(")])
        node.children.append(self.expression())
        node.children.append(self.expect(")"))
        node.children.append(self.expect("{"))
        while not self.at("}"):
            if self.peek() is None:
                raise self.error("unbalanced braces: switch body is not closed")
            if not (self.at("case") or self.at("default")):
                raise self.error("expected 'case' or 'default'")
            clause = _Node(NodeKind.CASE_CLAUSE, [self.leaf()])
            if self.toks[self.pos - 1].text == "case":
                clause.children.append(self.expression())
            if self.at("->"):
                raise self.error("arrow-form switch cases are not supported")
            clause.children.append(self.expect(":"))
            while not (self.at("case") or self.at("default") or self.at("}")):
                if self.peek() is None:
                    raise self.error("unbalanced braces: switch body is not closed")
                clause.children.append(self.statement())
            node.children.append(clause)
        node.children.append(self.leaf())
        return node

    # -- expressions -----------------------------------------------------

    def expression(self) -> _Node:
        lhs = self.binary(0)
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.OPERATOR and tok.text in ASSIGN_OPS:
            op = self.leaf()
            return _Node(NodeKind.ASSIGN_EXPR, [lhs, op, self.expression()])
        if self.at("?"):
            raise self.error("conditional expressions are not supported")
        if self.at("->"):
            raise self.error("lambdas are not supported")
        return lhs

    def binary(self, level: int) -> _Node:
        if level == len(BINARY_LEVELS):
            return self.unary()
        lhs = self.binary(level + 1)
        ops = BINARY_LEVELS[level]
        while True:
            tok = self.peek()
            if tok is None or tok.kind is not TokenKind.OPERATOR or tok.text not in ops:
                if self.at("instanceof"):
                    raise self.error("instanceof is not supported")
                return lhs
            op = self.leaf()
            lhs = _Node(NodeKind.BINARY_EXPR, [lhs, op, self.binary(level + 1)])

    def unary(self) -> _Node:
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.OPERATOR and tok.text in PREFIX_OPS:
            op = self.leaf()
            return _Node(NodeKind.UNARY_EXPR, [op, self.unary()])
        if self.at("(") and self.is_cast():
            children = [self.leaf()]
            children.extend(self.type_ref())
            children.append(self.expect(")"))
            children.append(self.unary())
            return _Node(NodeKind.UNARY_EXPR, children)
        return self.postfix()

    def is_cast(self) -> bool:
        tok = self.peek(1)
        if tok is None:
            return False
        if tok.kind is TokenKind.KEYWORD and tok.text in PRIMITIVES:
            i = 2
            while self.at("[", i) and self.at("]", i + 1):
                i += 2
            return self.at(")", i)
        if tok.kind is not TokenKind.IDENTIFIER:
            return False
        i = 2
        while self.at(".", i) and self.at_kind(TokenKind.IDENTIFIER, i + 1):
            i += 2
        while self.at("[", i) and self.at("]", i + 1):
            i += 2
        if not self.at(")", i):
            return False
        after = self.peek(i + 1)
        if after is None:
            return False
        return after.kind in (TokenKind.IDENTIFIER, TokenKind.LITERAL) or after.text in ("(", "!", "~", "this", "new")

    def postfix(self) -> _Node:
        expr = self.primary()
        while True:
            if self.at("."):
                dot = self.leaf()
                if self.at("new") or self.at("class") or self.at("<"):
                    raise self.error("qualified new, class literals and explicit generics are not supported")
                name = self.expect_ident()
                if self.at("("):
                    expr = _Node(NodeKind.CALL_EXPR, [expr, dot, name])
                    self.arguments(expr)
                else:
                    expr = _Node(NodeKind.FIELD_ACCESS, [expr, dot, name])
            elif self.at("["):
                expr = _Node(NodeKind.ARRAY_ACCESS, [expr, self.leaf(), self.expression(), self.expect("]")])
            elif self.at("++") or self.at("--"):
                expr = _Node(NodeKind.UNARY_EXPR, [expr, self.leaf()])
            elif self.at("::"):
                raise self.error("method references are not supported")
            else:
                return expr

    def arguments(self, call: _Node) -> None:
        call.children.append(self.expect("("))
        if not self.at(")"):
            self.expression_list(call)
        call.children.append(self.expect(")"))

    def primary(self) -> _Node:
        tok = self.peek()
        if tok is None:
            raise self.error("expected expression")
        if tok.kind is TokenKind.LITERAL:
            return self.leaf(NodeKind.LITERAL)
        if tok.kind is TokenKind.IDENTIFIER:
            if self.at("(", 1):
                call = _Node(NodeKind.CALL_EXPR, [self.leaf()])
                self.arguments(call)
                return call
            return self.leaf(NodeKind.IDENTIFIER)
        if self.at("this") or self.at("super"):
            if self.at("(", 1):
                raise self.error("explicit constructor calls are not supported")
            return self.leaf()
        if self.at("("):
            return _Node(NodeKind.PAREN_EXPR, [self.leaf(), self.expression(), self.expect(")")])
        if self.at("new"):
            return self.new_expr()
        raise self.error("expected expression")

    def new_expr(self) -> _Node:
        node = _Node(NodeKind.NEW_EXPR, [self.leaf()])
        tok = self.peek()
        if tok is not None and tok.kind is TokenKind.KEYWORD and tok.text in PRIMITIVES:
            node.children.append(self.leaf())
        else:
            node.children.extend(self.qualified_name())
        if self.at("["):
            while self.at("["):
                node.children.append(self.leaf())
                if self.at("]"):
                    raise self.error("array initializers are not supported")
                node.children.append(self.expression())
                node.children.append(self.expect("]"))
            return node
        self.arguments(node)
        if self.at("{"):
            raise self.error("anonymous classes are not supported")
        return node


def _flatten(root: _Node, tokens: list[Token]) -> SyntaxTree:
    nodes: list[SyntaxNode | None] = []

    def visit(node: _Node) -> tuple[int, int, int]:
        nid = len(nodes)
        nodes.append(None)
        if node.token is not None:
            span = (node.token, node.token)
            nodes[nid] = SyntaxNode(nid, node.kind, (), span)
            return nid, span[0], span[1]
        child_ids = []
        lo, hi = len(tokens), -1
        for child in node.children:
            cid, clo, chi = visit(child)
            child_ids.append(cid)
            lo, hi = min(lo, clo), max(hi, chi)
        nodes[nid] = SyntaxNode(nid, node.kind, tuple(child_ids), (lo, hi))
        return nid, lo, hi

    visit(root)
    return SyntaxTree(nodes=tuple(nodes), tokens=tuple(tokens), root=0)


def parse(tokens: list[Token]) -> SyntaxTree:
    """Build a pre-order numbered syntax tree from a token list.

    Raises:
        ParseError: on unbalanced braces or any construct outside the
            supported subset.
    """
    parser = _Parser(list(tokens))
    root = parser.compilation_unit()
    return _flatten(root, parser.toks)


def parse_source(source: str) -> SyntaxTree:
    return parse(tokenize(source))
