"""Tokenizer for the supported Java subset.

Comments and whitespace are dropped. Identifiers are maximal runs of
letters, digits, ``_`` and ``$``, so names such as ``LF_NORMAL`` always
come out as one token.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from quadvuln.errors import ParseDiagnostic, ParseError


class TokenKind(enum.Enum):
    KEYWORD = "Keyword"
    IDENTIFIER = "Identifier"
    LITERAL = "Literal"
    OPERATOR = "Operator"
    PUNCTUATION = "Punctuation"


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenKind
    line: int
    col: int

    def __repr__(self) -> str:
        return f"Token({self.text!r}, {self.kind.value}, {self.line}:{self.col})"


KEYWORDS = frozenset(
    """
    abstract assert boolean break byte case catch char class const continue
    default do double else enum extends final finally float for goto if
    implements import instanceof int interface long native new package private
    protected public return short static strictfp super switch synchronized
    this throw throws transient try void volatile while var
    """.split()
)

LITERAL_WORDS = frozenset({"true", "false", "null"})

# Longest first so that maximal munch falls out of a linear scan.
OPERATORS = sorted(
    """
    >>>= <<= >>= >>> == != <= >= && || ++ -- += -= *= /= %= &= |= ^= -> :: << >>
    + - * / % = < > ! ~ ? : & | ^ @
    """.split(),
    key=len,
    reverse=True,
)

PUNCTUATION = frozenset("(){}[];,.")


def _is_ident_start(ch: str) -> bool:
    return ch.isalpha() or ch in "_$"


def _is_ident_part(ch: str) -> bool:
    return ch.isalnum() or ch in "_$"


class _Scanner:
    def __init__(self, source: str) -> None:
        self.src = source
        self.pos = 0
        self.line = 1
        self.col = 1
        self.tokens: list[Token] = []

    def _error(self, message: str, line: int, col: int) -> ParseError:
        return ParseError(ParseDiagnostic(message, line, col))

    def _advance(self, count: int = 1) -> None:
        for _ in range(count):
            if self.src[self.pos] == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
            self.pos += 1

    def _peek(self, offset: int = 0) -> str:
        i = self.pos + offset
        return self.src[i] if i < len(self.src) else ""

    def _emit(self, start: int, kind: TokenKind, line: int, col: int) -> None:
        self.tokens.append(Token(self.src[start : self.pos], kind, line, col))

    def run(self) -> list[Token]:
        while self.pos < len(self.src):
            ch = self._peek()
            line, col, start = self.line, self.col, self.pos
            if ch.isspace():
                self._advance()
            elif ch == "/" and self._peek(1) == "/":
                while self.pos < len(self.src) and self._peek() != "\n":
                    self._advance()
            elif ch == "/" and self._peek(1) == "*":
                self._advance(2)
                while not (self._peek() == "*" and self._peek(1) == "/"):
                    if self.pos >= len(self.src):
                        raise self._error("unterminated block comment", line, col)
                    self._advance()
                self._advance(2)
            elif _is_ident_start(ch):
                while self.pos < len(self.src) and _is_ident_part(self._peek()):
                    self._advance()
                word = self.src[start : self.pos]
                if word in LITERAL_WORDS:
                    kind = TokenKind.LITERAL
                elif word in KEYWORDS:
                    kind = TokenKind.KEYWORD
                else:
                    kind = TokenKind.IDENTIFIER
                self._emit(start, kind, line, col)
            elif ch.isdigit() or (ch == "." and self._peek(1).isdigit()):
                self._number()
                self._emit(start, TokenKind.LITERAL, line, col)
            elif ch in "\"'":
                self._quoted(ch, line, col)
                self._emit(start, TokenKind.LITERAL, line, col)
            elif ch in PUNCTUATION:
                self._advance()
                self._emit(start, TokenKind.PUNCTUATION, line, col)
            else:
                for op in OPERATORS:
                    if self.src.startswith(op, self.pos):
                        self._advance(len(op))
                        self._emit(start, TokenKind.OPERATOR, line, col)
                        break
                else:
                    raise self._error(f"unexpected character {ch!r}", line, col)
        return self.tokens

    def _number(self) -> None:
        if self._peek() == "0" and self._peek(1) in ("x", "X"):
            self._advance(2)
            while _is_hex(self._peek()) or self._peek() == "_":
                self._advance()
        else:
            while self._peek().isdigit() or self._peek() == "_":
                self._advance()
            if self._peek() == "." and self._peek(1).isdigit():
                self._advance()
                while self._peek().isdigit() or self._peek() == "_":
                    self._advance()
            elif self._peek() == "." and not _is_ident_start(self._peek(1)):
                # "1." is a valid double literal, "1.foo" is not ours to accept
                self._advance()
            if self._peek() in ("e", "E"):
                nxt = self._peek(1)
                if nxt.isdigit() or (nxt in "+-" and self._peek(2).isdigit()):
                    self._advance(2)
                    while self._peek().isdigit():
                        self._advance()
        if self._peek() and self._peek() in "lLfFdD":
            self._advance()

    def _quoted(self, quote: str, line: int, col: int) -> None:
        what = "string" if quote == '"' else "char"
        self._advance()
        while True:
            ch = self._peek()
            if ch == "" or ch == "\n":
                raise self._error(f"unterminated {what} literal", line, col)
            if ch == "\\":
                if self._peek(1) in ("", "\n"):
                    raise self._error(f"unterminated {what} literal", line, col)
                self._advance(2)
                continue
            self._advance()
            if ch == quote:
                return


def _is_hex(ch: str) -> bool:
    return ch != "" and ch in "0123456789abcdefABCDEF"


def tokenize(source: str) -> list[Token]:
    """Split Java source into tokens, dropping comments and whitespace.

    Raises:
        ParseError: on an unterminated literal or block comment, or a
            character that cannot start any token.
    """
    return _Scanner(source).run()
