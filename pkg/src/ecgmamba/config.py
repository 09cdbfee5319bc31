"""Flat ``key = value`` run configuration.

Keys are the field names of :class:`ModelConfig` and :class:`TrainConfig`
plus ``folds`` and ``test_frac``.  Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import ModelConfig
from .train import TrainConfig

RUN_KEYS = {"folds": int, "test_frac": float}
MODEL_KEYS = {f.name for f in fields(ModelConfig)}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    folds: int = 5
    test_frac: float = 0.2

    def model_config(self, **defaults) -> ModelConfig:
        return ModelConfig.from_dict({**defaults, **self.model})

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.train)


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep or not value:
            raise ConfigError(f"config line {lineno}: expected key = value, got {raw!r}")
        try:
            if key in MODEL_KEYS:
                cfg.model[key] = float(value) if key == "norm_eps" else int(value)
            elif key in TRAIN_KEYS:
                cfg.train[key] = value
            elif key in RUN_KEYS:
                setattr(cfg, key, RUN_KEYS[key](value))
            else:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"config line {lineno}: bad value for {key}: {value!r}") from None
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(f"invalid training settings: {exc}") from None
    if cfg.folds < 2:
        raise ConfigError("folds must be >= 2")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text())
