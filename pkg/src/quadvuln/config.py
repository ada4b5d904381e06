"""Run configuration: defaults, ``key=value`` config files, validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from quadvuln.errors import ConfigError
from quadvuln.nn.model import FUSION_MODES, PROVIDERS, Architecture


@dataclass(frozen=True)
class RunConfig:
    d: int = 64
    n_heads: int = 4
    t_max: int = 512
    l_ast: int = 256
    l_cfg: int = 64
    l_dfg: int = 64
    conv_kernels: int = 8
    kernel_h: int = 3
    kernel_w: int = 3
    mlp_hidden: int = 32
    lr: float = 1e-5
    batch_size: int = 16
    epochs: int = 50
    seed: int = 42
    metapath: bool = True
    fusion: str = "rows"
    provider: str = "learned"
    threshold: float = 0.5
    min_count: int = 1
    positional: bool = False
    learned_qkv: bool = False
    train_ratio: float = 0.8
    val_ratio: float = 0.1
    test_ratio: float = 0.1
    jobs: int = 1

    def __post_init__(self) -> None:
        for name in ("d", "n_heads", "t_max", "l_ast", "l_cfg", "l_dfg", "conv_kernels", "kernel_h", "kernel_w", "mlp_hidden", "batch_size", "min_count", "jobs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if self.d % self.n_heads:
            raise ConfigError(f"d={self.d} is not divisible by n_heads={self.n_heads}")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {', '.join(FUSION_MODES)}")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"provider must be one of {', '.join(PROVIDERS)}")
        ratios = (self.train_ratio, self.val_ratio, self.test_ratio)
        if min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError("split ratios must be positive and sum to 1")

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def architecture(self, vocab_size: int, css_width: int | None = None) -> Architecture:
        return Architecture(
            d=self.d,
            n_heads=self.n_heads,
            t_max=self.t_max,
            l_ast=self.l_ast,
            l_cfg=self.l_cfg,
            l_dfg=self.l_dfg,
            css_width=self.d if css_width is None else css_width,
            vocab_size=vocab_size if self.provider == "learned" else 0,
            conv_kernels=self.conv_kernels,
            kernel_h=self.kernel_h,
            kernel_w=self.kernel_w,
            mlp_hidden=self.mlp_hidden,
            fusion=self.fusion,
            learned_qkv=self.learned_qkv,
            positional=self.positional,
        )


FIELD_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def coerce(name: str, raw: str):
    if name not in FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {name!r}")
    kind = FIELD_TYPES[name]
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None


def read_config_file(path: str | Path) -> dict[str, object]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        values[key] = coerce(key, value)
    return values


def resolve(file_values: dict[str, object] | None = None, overrides: dict[str, object] | None = None) -> RunConfig:
    """Defaults < config file < explicit overrides."""
    merged: dict[str, object] = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**merged)
