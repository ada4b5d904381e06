"""Binary checkpoint format.

Layout (little endian)::

    b"VFCK"  u32 version  u32 header_len  header (UTF-8 "key=value" lines)
    then for each parameter in Architecture.param_shapes() order:
        u32 rank  u32 dims[rank]  f64 payload[prod(dims)]
"""

from __future__ import annotations

import io
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from quadvuln.embedding import Vocabulary
from quadvuln.errors import ConfigError, FormatError
from quadvuln.nn.model import Architecture

MAGIC = b"VFCK"
VERSION = 1
_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    arch: Architecture
    params: dict[str, np.ndarray]
    vocab: Vocabulary | None = None
    settings: dict[str, str] = field(default_factory=dict)  # non-shape run settings (metapath, threshold, ...)

    def header(self) -> dict[str, str]:
        out = {k: _fmt(v) for k, v in asdict(self.arch).items()}
        out["params"] = ",".join(name for name, _ in self.arch.param_shapes())
        for k, v in sorted(self.settings.items()):
            out[f"run.{k}"] = v
        if self.vocab is not None:
            out["vocab"] = self.vocab.to_json()
        return out


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _parse_arch(header: dict[str, str]) -> Architecture:
    kwargs = {}
    for f in fields(Architecture):
        if f.name not in header:
            raise FormatError(f"checkpoint header lacks {f.name!r}")
        raw = header[f.name]
        if f.type in ("bool", bool):
            kwargs[f.name] = raw == "true"
        elif f.type in ("int", int):
            kwargs[f.name] = int(raw)
        else:
            kwargs[f.name] = raw
    return Architecture(**kwargs)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    header = "".join(f"{k}={v}\n" for k, v in ckpt.header().items()).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_U32.pack(VERSION))
    buf.write(_U32.pack(len(header)))
    buf.write(header)
    for name, shape in ckpt.arch.param_shapes():
        arr = np.asarray(ckpt.params[name], dtype="<f8")
        if arr.shape != shape:
            raise ValueError(f"{name}: shape {arr.shape} does not match architecture {shape}")
        buf.write(_U32.pack(arr.ndim))
        for dim in arr.shape:
            buf.write(_U32.pack(dim))
        buf.write(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path, expect: Architecture | None = None) -> Checkpoint:
    """Read a checkpoint; if ``expect`` is given its fields must match the header."""
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"{path}: truncated checkpoint")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise FormatError(f"{path}: bad magic")
    (version,) = _U32.unpack(take(4))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = _U32.unpack(take(4))
    header: dict[str, str] = {}
    for line in bytes(take(hlen)).decode("utf-8").splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}: malformed header line {line!r}")
        header[key] = value
    arch = _parse_arch(header)
    if expect is not None and expect != arch:
        diffs = [f.name for f in fields(Architecture) if getattr(expect, f.name) != getattr(arch, f.name)]
        raise ConfigError(f"checkpoint does not match configuration: {', '.join(diffs)} differ")
    names = [name for name, _ in arch.param_shapes()]
    if header.get("params", "").split(",") != names:
        raise FormatError(f"{path}: parameter list does not match the architecture")

    params = {}
    for name, shape in arch.param_shapes():
        (rank,) = _U32.unpack(take(4))
        dims = tuple(_U32.unpack(take(4))[0] for _ in range(rank))
        if dims != shape:
            raise FormatError(f"{path}: {name} stored as {dims}, expected {shape}")
        count = int(np.prod(dims)) if dims else 1
        params[name] = np.frombuffer(take(8 * count), dtype="<f8").reshape(dims).astype(np.float64)
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes")
    vocab = Vocabulary.from_json(header["vocab"]) if "vocab" in header else None
    if vocab is not None and vocab.size != arch.vocab_size:
        raise FormatError(f"{path}: vocabulary has {vocab.size} entries, header says {arch.vocab_size}")
    settings = {k[4:]: v for k, v in header.items() if k.startswith("run.")}
    return Checkpoint(arch, params, vocab, settings)
