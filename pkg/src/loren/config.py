"""Single YAML configuration for every pipeline, with strict keys and centralized defaults."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

import yaml

from .channel import ChannelConfig
from .evaluation import EvalConfig, Stopping
from .hwcost import CostConfig, Datasheet
from .link import LinkConfig
from .receiver import ModelConfig
from .training import OptimizerConfig, TrainConfig

SCHEMA_VERSION = 1
CONSTELLATIONS = ("qam16",)


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class LinkSection:
    num_symbols: int = 14
    num_subcarriers: int = 128
    pilot_symbols: tuple[int, ...] = (2, 11)
    pilot_seed: int = 1
    pilot_sequence: str = "constant"
    ldpc_seed: int = 7
    constellation: str = "qam16"

    def __post_init__(self):
        if self.constellation not in CONSTELLATIONS:
            raise ValueError(f"constellation must be one of {CONSTELLATIONS}")


@dataclass(frozen=True)
class TrainSection:
    base: TrainConfig = field(default_factory=lambda: TrainConfig(
        iterations=8000, optimizer=OptimizerConfig(learning_rate=3e-3)))
    adapters: TrainConfig = field(default_factory=lambda: TrainConfig(
        iterations=3000, optimizer=OptimizerConfig(learning_rate=3e-3)))


@dataclass(frozen=True)
class PathsSection:
    out_dir: str = "runs/default"
    # relative paths resolve against out_dir
    weights: str = "base.lrnw"
    adapters: str = "adapters.lrnw"
    bler_csv: str = "bler.csv"


@dataclass(frozen=True)
class GlobalConfig:
    version: int = SCHEMA_VERSION
    seed: int = 0
    link: LinkSection = field(default_factory=LinkSection)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalConfig = field(default_factory=EvalConfig)
    hwcost: CostConfig = field(default_factory=CostConfig)
    paths: PathsSection = field(default_factory=PathsSection)

    def link_config(self) -> LinkConfig:
        s = self.link
        return LinkConfig(s.num_symbols, s.num_subcarriers, s.pilot_symbols, s.pilot_seed, s.pilot_sequence,
                          s.ldpc_seed, self.channel)

    def model_config(self) -> ModelConfig:
        return self.model

    def train_config(self, phase: str) -> TrainConfig:
        return dataclasses.replace(getattr(self.train, phase), seed=self.seed)

    def eval_config(self) -> EvalConfig:
        return dataclasses.replace(self.eval, seed=self.seed)

    def path(self, name: str) -> Path:
        out = Path(self.paths.out_dir)
        if name == "out_dir":
            return out
        p = Path(getattr(self.paths, name))
        return p if p.is_absolute() else out / p

    def validate(self) -> None:
        if self.version != SCHEMA_VERSION:
            raise ConfigError(f"version: unsupported schema version {self.version} (expected {SCHEMA_VERSION})")
        if self.model.num_rx != self.channel.num_rx_antennas:
            raise ConfigError(f"model.num_rx ({self.model.num_rx}) must equal channel.num_rx_antennas "
                              f"({self.channel.num_rx_antennas})")
        if (self.model.num_symbols, self.model.num_subcarriers) != (self.link.num_symbols, self.link.num_subcarriers):
            raise ConfigError("model.num_symbols/num_subcarriers must match the link grid")


# fields supplied from the top-level seed rather than per section
_SEED_OWNED = {TrainConfig, EvalConfig}


def _to_plain(obj: Any) -> Any:
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)
                if not (type(obj) in _SEED_OWNED and f.name == "seed")}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _tuples(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def _build(cls, default, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    allowed = {f.name: f for f in fields(cls) if not (cls in _SEED_OWNED and f.name == "seed")}
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        current = getattr(default, name)
        key = f"{where}.{name}" if where else name
        if is_dataclass(current):
            kwargs[name] = _build(type(current), current, value, key)
        else:
            kwargs[name] = _tuples(value)
    try:
        return dataclasses.replace(default, **kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where or 'config'}: {e}") from None


def from_dict(data: dict | None) -> GlobalConfig:
    cfg = _build(GlobalConfig, GlobalConfig(), data or {}, "")
    cfg.validate()
    return cfg


def to_dict(cfg: GlobalConfig) -> dict:
    return _to_plain(cfg)


def dump_yaml(cfg: GlobalConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def load_config(path=None, overrides: dict | None = None) -> GlobalConfig:
    """Defaults, then the YAML file at ``path``, then top-level ``overrides`` such as seed."""
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    data = dict(data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.rpartition(".")
        target = data
        if section:
            for part in section.split("."):
                target = target.setdefault(part, {})
        target[name] = value
    return from_dict(data)


# Re-exported so callers can construct nested sections without importing each module.
__all__ = ["ConfigError", "GlobalConfig", "LinkSection", "PathsSection", "TrainSection", "ChannelConfig",
           "ModelConfig", "TrainConfig", "OptimizerConfig", "EvalConfig", "Stopping", "CostConfig", "Datasheet",
           "load_config", "from_dict", "to_dict", "dump_yaml"]
