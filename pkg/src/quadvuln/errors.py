"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class ParseDiagnostic:
    message: str
    line: int
    col: int
    severity: Severity = Severity.ERROR

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.severity.value}: {self.message}"


class QuadVulnError(Exception):
    """Base class for all errors raised by this package."""


class InputError(QuadVulnError):
    """Malformed user input: source text, DOT, manifests, binary files."""


class ParseError(InputError):
    """Tokenizer or parser failure carrying a located diagnostic."""

    def __init__(self, diagnostic: ParseDiagnostic) -> None:
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


class DotError(InputError):
    def __init__(self, message: str, line: int | None = None) -> None:
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line


class GraphError(InputError):
    """A syntax tree that cannot be turned into a method-level graph."""


class FormatError(InputError):
    """Corrupt or mismatched CSSM / checkpoint file."""


class DatasetError(InputError):
    pass


class ConfigError(QuadVulnError):
    pass


class NumericError(QuadVulnError):
    """A NaN or infinity appeared where only finite values are allowed."""
