"""Token-sequence embeddings (the CSS view) and their on-disk formats.

Two providers produce a ``CssMatrix`` for a snippet:

* ``LearnedProvider``: trainable lookup table indexed through a corpus
  vocabulary, updated by the optimizer during training.
* ``FileBackedProvider``: matrices precomputed offline by any external
  code model and stored one per snippet in the CSSM format.

CSSM layout (little endian): ``b"CSSM"``, u32 version (=1), u32 rows,
u32 cols, then rows*cols float32 values in row-major order.
"""

from __future__ import annotations

import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from quadvuln.errors import FormatError, InputError
from quadvuln.frontend.lexer import Token

log = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1

CSSM_MAGIC = b"CSSM"
CSSM_VERSION = 1
_CSSM_HEADER = struct.Struct("<4sIII")
MAX_CSSM_DIM = 1 << 20


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]  # id -> token text, PAD and UNK first

    def __post_init__(self) -> None:
        if self.tokens[:2] != (PAD, UNK):
            raise ValueError("vocabulary must start with PAD and UNK")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary entries must be unique")
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def token_to_id(self) -> dict[str, int]:
        return dict(self._index)

    def __contains__(self, text: str) -> bool:
        return text in self._index

    def id_of(self, text: str) -> int:
        return self._index.get(text, UNK_ID)

    def encode(self, tokens: Iterable[Token | str]) -> list[int]:
        return [self.id_of(t if isinstance(t, str) else t.text) for t in tokens]

    def to_json(self) -> str:
        return json.dumps(list(self.tokens), ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> Vocabulary:
        return cls(tuple(json.loads(text)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Vocabulary:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_vocabulary(corpus: Sequence[Sequence[Token | str]], min_count: int = 1) -> Vocabulary:
    """Whole-token vocabulary over a corpus of token lists.

    Tokens seen at least ``min_count`` times get an id, ordered by
    descending frequency then text so the result is deterministic.
    """
    if not corpus:
        raise InputError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for tokens in corpus:
        counts.update(t if isinstance(t, str) else t.text for t in tokens)
    kept = sorted((tok for tok, c in counts.items() if c >= min_count and tok not in (PAD, UNK)), key=lambda t: (-counts[t], t))
    return Vocabulary((PAD, UNK, *kept))


@dataclass(eq=False)
class CssMatrix:
    data: np.ndarray  # (t_max, d) float64
    valid_len: int

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ValueError("CSS data must be 2-D")
        if not 0 <= self.valid_len <= self.data.shape[0]:
            raise ValueError(f"valid_len {self.valid_len} outside [0, {self.data.shape[0]}]")
        if not np.isfinite(self.data).all():
            raise FormatError("CSS matrix contains non-finite values")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.rows, dtype=bool)
        m[: self.valid_len] = True
        return m


def init_embedding_table(vocab_size: int, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, 0.02, size=(vocab_size, d))


def token_ids(tokens: Sequence[Token | str], vocab: Vocabulary, t_max: int) -> tuple[np.ndarray, int]:
    """Ids padded with PAD to ``t_max``; long inputs are truncated."""
    ids = vocab.encode(tokens[:t_max])
    out = np.full(t_max, PAD_ID, dtype=np.int64)
    out[: len(ids)] = ids
    return out, len(ids)


def encode_learned(tokens: Sequence[Token | str], vocab: Vocabulary, table: np.ndarray, t_max: int = 512) -> CssMatrix:
    if table.shape[0] != vocab.size:
        raise ValueError(f"table has {table.shape[0]} rows but vocabulary has {vocab.size} entries")
    ids, valid = token_ids(tokens, vocab, t_max)
    data = np.zeros((t_max, table.shape[1]), dtype=np.float64)
    data[:valid] = table[ids[:valid]]
    return CssMatrix(data, valid)


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


# -- CSSM files ---------------------------------------------------------------


def write_css_file(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("CSSM payload must be 2-D")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_CSSM_HEADER.pack(CSSM_MAGIC, CSSM_VERSION, rows, cols))
        fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def read_css_payload(path: str | Path) -> np.ndarray:
    """Raw float32 matrix exactly as stored."""
    raw = Path(path).read_bytes()
    if len(raw) < _CSSM_HEADER.size:
        raise FormatError(f"{path}: short file ({len(raw)} bytes, header needs {_CSSM_HEADER.size})")
    magic, version, rows, cols = _CSSM_HEADER.unpack_from(raw)
    if magic != CSSM_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != CSSM_VERSION:
        raise FormatError(f"{path}: unsupported CSSM version {version}")
    if rows > MAX_CSSM_DIM or cols > MAX_CSSM_DIM or rows * cols > MAX_CSSM_DIM * 64:
        raise FormatError(f"{path}: dimensions {rows}x{cols} overflow the supported size")
    need = _CSSM_HEADER.size + rows * cols * 4
    if len(raw) < need:
        raise FormatError(f"{path}: short file, declared {rows}x{cols} needs {need} bytes, got {len(raw)}")
    if len(raw) > need:
        raise FormatError(f"{path}: {len(raw) - need} trailing bytes after payload")
    return np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=_CSSM_HEADER.size).reshape(rows, cols)


def load_css_file(path: str | Path, t_max: int = 512, d: int | None = None) -> CssMatrix:
    """Load a CSSM file widened to float64 and fitted to ``t_max`` rows.

    Rows past ``t_max`` are dropped and missing rows zero-filled. If ``d``
    is given, columns are cut or zero-padded the same way. Either fix-up
    logs a warning.
    """
    payload = read_css_payload(path).astype(np.float64)
    rows, cols = payload.shape
    d = cols if d is None else d
    if rows > t_max or cols != d:
        log.warning("%s: CSS matrix %dx%d refitted to %dx%d", path, rows, cols, t_max, d)
    out = np.zeros((t_max, d), dtype=np.float64)
    r, c = min(rows, t_max), min(cols, d)
    out[:r, :c] = payload[:r, :c]
    return CssMatrix(out, r)


# -- providers ----------------------------------------------------------------


class EmbeddingProvider(Protocol):
    def embed(self, tokens: Sequence[Token | str], snippet_id: str | None = None) -> CssMatrix: ...


class LearnedProvider:
    def __init__(self, vocab: Vocabulary, table: np.ndarray, t_max: int = 512) -> None:
        self.vocab = vocab
        self.table = table
        self.t_max = t_max

    def embed(self, tokens: Sequence[Token | str], snippet_id: str | None = None) -> CssMatrix:
        return encode_learned(tokens, self.vocab, self.table, self.t_max)


class FileBackedProvider:
    """Looks matrices up by snippet id in a {id: path} mapping."""

    def __init__(self, paths: dict[str, str | Path], t_max: int = 512, d: int | None = None) -> None:
        self.paths = dict(paths)
        self.t_max = t_max
        self.d = d

    def embed(self, tokens: Sequence[Token | str], snippet_id: str | None = None) -> CssMatrix:
        if snippet_id not in self.paths:
            raise InputError(f"no CSS file registered for snippet {snippet_id!r}")
        return load_css_file(self.paths[snippet_id], self.t_max, self.d)
