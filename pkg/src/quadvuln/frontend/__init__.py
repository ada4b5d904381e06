"""Java subset front end: tokenizer, parser and DOT reader."""

from quadvuln.frontend.dot import import_dot
from quadvuln.frontend.lexer import Token, TokenKind, tokenize
from quadvuln.frontend.parser import parse, parse_source
from quadvuln.frontend.syntax import NodeKind, SyntaxNode, SyntaxTree

__all__ = [
    "NodeKind",
    "SyntaxNode",
    "SyntaxTree",
    "Token",
    "TokenKind",
    "import_dot",
    "parse",
    "parse_source",
    "tokenize",
]
