"""Generated corpora with a known separating feature.

The credential corpus plants a hard-coded password: a positive assigns a
string literal to the credential variable, a negative reads it from an
identifier that the method never defines (a field or injected setting).
Both classes share every other statement, drawn independently of the
label. Because an undefined identifier adds no def-use edge, the AST,
CFG and DFG adjacency matrices have the same shape distribution in both
classes, so the label is decidable from token text alone.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from quadvuln.pipeline import LabeledSnippet, write_manifest

HARDCODED = ('"admin123"', '"P@ssw0rd"', '"letmein"', '"changeme"')
EXTERNAL = ("configuredSecret", "vaultPassword", "envPassword", "injectedCredential")
METHODS = ("openConnection", "connectDb", "loginService", "initPool", "authenticate", "bindAccount")

_FILLERS = (
    "int retries = {k};",
    "int timeout = {k} * 1000;",
    'String host = "db{k}.internal";',
    "boolean verbose = false;",
    "long started = System.currentTimeMillis();",
    "int port = 5432 + {k};",
)
_TAILS = (
    "if (conn == null) {{\n            return false;\n        }}",
    "for (int i = 0; i < {k}; i++) {{\n            conn.ping();\n        }}",
    "while (conn.busy()) {{\n            conn.waitFor({k});\n        }}",
    "conn.setAutoCommit(false);",
    "logger.info(url);",
)


def credential_method(name: str, credential: str, fillers: Sequence[str], tail: str) -> str:
    """``credential`` is either a string literal or a bare identifier."""
    body = [*fillers, f"String data = {credential};", "Connection conn = DriverManager.getConnection(url, user, data);", tail, "return true;"]
    lines = [f"    public boolean {name}(String url, String user) {{"]
    lines += [f"        {stmt}" for stmt in body]
    lines.append("    }")
    return "\n".join(lines) + "\n"


def _pick(rng: np.random.Generator, pool: Sequence[str]) -> str:
    return pool[int(rng.integers(len(pool)))]


def credential_corpus(n: int, seed: int) -> list[LabeledSnippet]:
    """``n`` snippets, alternating labels (n/2 of each for even n).

    Credentials cycle through their pools, so any run of eight or more
    snippets uses every pool entry at least once per class.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = 1 if i % 2 == 0 else 0
        pool = HARDCODED if label else EXTERNAL
        credential = pool[(i // 2) % len(pool)]
        k = int(rng.integers(2, 9))
        count = int(rng.integers(1, 4))
        picks = rng.choice(len(_FILLERS), size=count, replace=False)
        fillers = [_FILLERS[j].format(k=k) for j in sorted(picks)]
        tail = _pick(rng, _TAILS).format(k=k)
        name = f"{_pick(rng, METHODS)}{i}"
        out.append(LabeledSnippet(f"s{seed}_{i:03d}.java", credential_method(name, credential, fillers, tail), label))
    return out


# Case study pair: the same method before and after moving the password out of the source.
CASE2_VULNERABLE = credential_method(
    "connectInventory",
    '"admin123"',
    ["int retries = 3;", 'String host = "db3.internal";'],
    "conn.setAutoCommit(false);",
)
CASE2_PATCHED = credential_method(
    "connectInventory",
    "envPassword",
    ["int retries = 3;", 'String host = "db3.internal";'],
    "conn.setAutoCommit(false);",
)


def write_corpus(directory: str | Path, snippets: Sequence[LabeledSnippet], manifest: str = "manifest.csv") -> Path:
    """Write each snippet to ``directory`` and a manifest that lists them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in snippets:
        (directory / s.id).write_text(s.source, encoding="utf-8")
    path = directory / manifest
    write_manifest(path, [(s.id, s.label) for s in snippets])
    return path


def labeled_corpus(total: int, positives: int, seed: int = 0) -> list[LabeledSnippet]:
    """Credential snippets with an exact class tally, labels in shuffled order."""
    if not 0 <= positives <= total:
        raise ValueError("positives must lie in [0, total]")
    labels = np.zeros(total, dtype=int)
    labels[:positives] = 1
    labels = np.random.default_rng(seed).permutation(labels)
    base = credential_corpus(2 * total, seed)
    pos = iter(s for s in base if s.label == 1)
    neg = iter(s for s in base if s.label == 0)
    return [LabeledSnippet(f"f{i:04d}.java", next(pos if y else neg).source, int(y)) for i, y in enumerate(labels)]
