from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadvuln.errors import ParseError
from quadvuln.frontend.lexer import TokenKind, tokenize


def texts(source: str) -> list[str]:
    return [t.text for t in tokenize(source)]


def test_declaration_tokens():
    assert texts("int result = 1;") == ["int", "result", "=", "1", ";"]


def test_underscore_identifier_is_one_token():
    toks = tokenize("LF_NORMAL")
    assert len(toks) == 1
    assert toks[0].text == "LF_NORMAL"
    assert toks[0].kind is TokenKind.IDENTIFIER


def test_empty_source():
    assert tokenize("") == []


def test_kinds():
    kinds = [t.kind for t in tokenize('if (x >= 10) return "a";')]
    assert kinds == [
        TokenKind.KEYWORD,
        TokenKind.PUNCTUATION,
        TokenKind.IDENTIFIER,
        TokenKind.OPERATOR,
        TokenKind.LITERAL,
        TokenKind.PUNCTUATION,
        TokenKind.KEYWORD,
        TokenKind.LITERAL,
        TokenKind.PUNCTUATION,
    ]


def test_boolean_and_null_are_literals():
    assert all(t.kind is TokenKind.LITERAL for t in tokenize("true false null"))


def test_maximal_munch_operators():
    assert texts("a >>>= b >> c >= d") == ["a", ">>>=", "b", ">>", "c", ">=", "d"]
    assert texts("i++ + ++j") == ["i", "++", "+", "++", "j"]


def test_numbers():
    assert texts("0x1F 1_000 3.14 2e-3 10L .5f") == ["0x1F", "1_000", "3.14", "2e-3", "10L", ".5f"]


def test_strings_and_chars_with_escapes():
    toks = tokenize(r'"a\"b" '"'\\n'")
    assert [t.text for t in toks] == [r'"a\"b"', r"'\n'"]
    assert all(t.kind is TokenKind.LITERAL for t in toks)


def test_comments_are_stripped():
    src = "int a; // trailing\n/* block\n comment */ int b;"
    assert texts(src) == ["int", "a", ";", "int", "b", ";"]


def test_positions_are_one_based():
    toks = tokenize("int a;\n  a = 2;")
    assert (toks[0].line, toks[0].col) == (1, 1)
    assert (toks[3].line, toks[3].col) == (2, 3)


@pytest.mark.parametrize(
    "source, line, col",
    [
        ('String s = "abc', 1, 12),
        ("char c = 'x", 1, 10),
        ("int a;\n/* never closed", 2, 1),
        ("int a = #;", 1, 9),
    ],
)
def test_errors_carry_location(source, line, col):
    with pytest.raises(ParseError) as info:
        tokenize(source)
    assert (info.value.diagnostic.line, info.value.diagnostic.col) == (line, col)


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=80))
def test_tokenize_is_total(source):
    try:
        toks = tokenize(source)
    except ParseError as exc:
        assert exc.diagnostic.line >= 1 and exc.diagnostic.col >= 1
        return
    positions = [(t.line, t.col) for t in toks]
    assert positions == sorted(set(positions))
    assert all(t.text for t in toks)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["int", "x_1", "=", "42", ";", "(", ")", "a_b_c", "+", '"s"', "\n", " "]), max_size=30))
def test_tokens_reconstruct_source(parts):
    source = " ".join(parts)
    toks = tokenize(source)
    assert "".join(t.text for t in toks) == "".join(source.split())
    lines = source.split("\n")
    for t in toks:
        assert lines[t.line - 1][t.col - 1 : t.col - 1 + len(t.text)] == t.text
