"""Java vulnerability classifier over AST, CFG, DFG and token views."""

from quadvuln.config import RunConfig
from quadvuln.errors import ConfigError, InputError, NumericError, ParseError, QuadVulnError
from quadvuln.pipeline import LabeledSnippet, Metrics, SplitSpec, evaluate, load_dataset, predict, split, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "InputError",
    "LabeledSnippet",
    "Metrics",
    "NumericError",
    "ParseError",
    "QuadVulnError",
    "RunConfig",
    "SplitSpec",
    "evaluate",
    "load_dataset",
    "predict",
    "split",
    "train",
]
