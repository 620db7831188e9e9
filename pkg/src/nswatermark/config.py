"""Watermark hyperparameters and the flat ``key = value`` run-config format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .partition import PartitionParams, parse_key

DEFAULT_DELTA_GRID = (4.0, 6.0, 8.0, 10.0, 12.0, 14.0)
SOFT_DELTA_GRID = (4.0, 6.0, 8.0)
GAMMA_GRID = (0.1, 0.01, 0.001, 0.0001)
MODES = ("none", "hard", "soft", "adaptive-soft", "ns", "ns-linear")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WatermarkConfig:
    gamma: float = 0.01
    Z: float = 4.0
    beta: float = 0.0
    alpha: float = 1.0
    T_max: int = 100
    beam_k: int = 1
    key: int = 0
    delta_grid: tuple = DEFAULT_DELTA_GRID

    def __post_init__(self):
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))
        self.validate()

    def validate(self) -> None:
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must be in (0,1)")
        if self.Z < 0:
            raise ConfigError("z must be >= 0")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.gamma + self.beta >= 1:
            raise ConfigError("gamma + beta must be < 1")
        if self.alpha < 1:
            raise ConfigError("alpha must be >= 1")
        if self.T_max < 2:
            raise ConfigError("tmax must be >= 2")
        if self.beam_k < 1:
            raise ConfigError("beam must be >= 1")
        if not 0 <= self.key < 2**64:
            raise ConfigError("key must be an unsigned 64-bit integer")
        grid = self.delta_grid
        if not grid or any(d < 0 for d in grid) or list(grid) != sorted(set(grid)):
            raise ConfigError("delta grid must be nonempty, nonnegative and strictly ascending")

    def partition(self, vocab_size: int) -> PartitionParams:
        return PartitionParams(self.key, self.gamma, vocab_size)

    def with_(self, **changes) -> "WatermarkConfig":
        return replace(self, **changes)


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _fmt_floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


# config-file key -> (attribute name, parser)
_KEYS = {
    "gamma": ("gamma", float),
    "z": ("Z", float),
    "beta": ("beta", float),
    "alpha": ("alpha", float),
    "tmax": ("T_max", int),
    "beam": ("beam_k", int),
    "key": ("key", parse_key),
    "delta_grid": ("delta_grid", _floats),
    "delta": ("delta", float),
    "mode": ("mode", str),
    "model": ("model", str),
    "endpoint": ("endpoint", str),
    "timeout_ms": ("timeout_ms", int),
    "input": ("input", str),
    "output": ("output", str),
    "seed": ("seed", int),
}


@dataclass
class RunConfig:
    watermark: WatermarkConfig = field(default_factory=WatermarkConfig)
    delta: float = 8.0
    mode: str = "ns"
    model: str | None = None
    endpoint: str | None = None
    timeout_ms: int = 10_000
    input: str | None = None
    output: str | None = None
    seed: int = 0

    def validate(self) -> None:
        self.watermark.validate()
        if self.model and self.endpoint:
            raise ConfigError("model and endpoint are mutually exclusive")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")

    def update(self, values: dict) -> "RunConfig":
        """Apply ``{file-key: parsed value}``; watermark fields are re-validated."""
        wm, run = {}, {}
        wm_names = {f.name for f in fields(WatermarkConfig)}
        for k, v in values.items():
            attr = _KEYS[k][0]
            (wm if attr in wm_names else run)[attr] = v
        try:
            new = replace(self, watermark=replace(self.watermark, **wm), **run)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        new.validate()
        return new


def _get(cfg: RunConfig, name: str):
    attr = _KEYS[name][0]
    return getattr(cfg.watermark, attr) if hasattr(cfg.watermark, attr) else getattr(cfg, attr)


def read_config_values(path) -> dict:
    """Parsed ``{key: value}`` pairs of a config file, without validation."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        name, value = name.strip().lower(), value.strip()
        if not sep or not name:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        if name not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {name!r}")
        try:
            values[name] = _KEYS[name][1](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {name}: {exc}") from exc
    return values


def load_config(path) -> RunConfig:
    """Parse a ``key = value`` file; ``#`` starts a comment, unknown keys are errors."""
    values = read_config_values(path)
    try:
        return RunConfig().update(values)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for name in _KEYS:
        value = _get(cfg, name)
        if value is None:
            continue
        if name == "key":
            value = f"0x{value:016x}"
        elif name == "delta_grid":
            value = _fmt_floats(value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


def key_from_env(default: int = 0) -> int:
    text = os.environ.get("NSWM_KEY")
    return parse_key(text) if text else default
