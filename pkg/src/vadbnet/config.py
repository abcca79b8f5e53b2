"""Run configuration: one JSON document holding every module's settings."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field

from .dataset import DIMENSIONS, CleaningConfig
from .encoders import EncoderConfig
from .metrics import METRICS
from .model import HEAD_KINDS, FusionConfig
from .report import EvaluationSettings
from .training import FinetuneConfig, PretrainConfig


class ConfigError(ValueError):
    """Validation failure; ``errors`` holds one message per offending field."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass
class PathsConfig:
    """Locations only; excluded from the config hash."""

    annotations: str = ""
    data_root: str = ""  # falls back to $VADBNET_DATA_ROOT
    cleaned: str = ""


@dataclass
class DataConfig:
    fps: float = 1.0
    source_fps: float = 1.0
    train_fraction: float = 0.8


@dataclass
class RunConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)

    def to_json(self) -> dict:
        return _to_json(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @property
    def hash(self) -> str:
        """sha256 over the canonical JSON of everything except ``paths``."""
        doc = self.to_json()
        doc.pop("paths")
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)


def _to_json(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_json(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_json(v) for v in obj]
    return obj


def _coerce(value, tp, where: str, errors: list[str]):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], where, errors)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where, errors)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, list):
            errors.append(f"{where}: expected a list, got {type(value).__name__}")
            return None
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{where}[{i}]", errors) for i, v in enumerate(value))
        if len(value) != len(args):
            errors.append(f"{where}: expected {len(args)} items, got {len(value)}")
            return None
        return tuple(_coerce(v, a, f"{where}[{i}]", errors) for i, (v, a) in enumerate(zip(value, args)))
    if tp is bool:
        if not isinstance(value, bool):
            errors.append(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{where}: expected a number, got {value!r}")
            return value
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            errors.append(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, obj, where: str, errors: list[str]):
    if not isinstance(obj, dict):
        errors.append(f"{where or 'config'}: expected an object, got {type(obj).__name__}")
        return cls()
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in sorted(set(obj) - names):
        errors.append(f"{where + '.' if where else ''}{key}: unknown key")
    kwargs = {}
    for name in names & set(obj):
        kwargs[name] = _coerce(obj[name], hints[name], f"{where + '.' if where else ''}{name}", errors)
    if errors:
        return None
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        errors.append(f"{where or 'config'}: {exc}")
        return None


def config_from_json(obj: dict) -> RunConfig:
    errors: list[str] = []
    cfg = _build(RunConfig, obj, "", errors)
    if not errors:
        errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    return config_from_json(obj)


def validate(cfg: RunConfig) -> list[str]:
    """Cross-field checks that the per-field type checks cannot express."""
    errors = []
    if not 0.0 < cfg.data.train_fraction < 1.0:
        errors.append("data.train_fraction: must lie strictly between 0 and 1")
    if cfg.data.fps <= 0 or cfg.data.source_fps <= 0:
        errors.append("data.fps: frame rates must be positive")
    if cfg.finetune.head_kind not in HEAD_KINDS:
        errors.append(f"finetune.head_kind: expected one of {list(HEAD_KINDS)}")
    if cfg.finetune.encoder_init not in ("pretrained", "random"):
        errors.append("finetune.encoder_init: expected 'pretrained' or 'random'")
    for d in cfg.finetune.dimensions:
        if d not in DIMENSIONS:
            errors.append(f"finetune.dimensions: unknown dimension {d!r}")
    if not cfg.finetune.dimensions:
        errors.append("finetune.dimensions: at least one dimension is required")
    for name in ("lr", "batch_size", "epochs"):
        if getattr(cfg.pretrain, name) <= 0:
            errors.append(f"pretrain.{name}: must be positive")
    for name in ("lr", "train_batch", "val_batch", "epochs"):
        if getattr(cfg.finetune, name) <= 0:
            errors.append(f"finetune.{name}: must be positive")
    if not 0.0 <= cfg.pretrain.warmup_fraction <= 1.0:
        errors.append("pretrain.warmup_fraction: must lie in [0, 1]")
    if cfg.pretrain.grad_clip_norm <= 0:
        errors.append("pretrain.grad_clip_norm: must be positive")
    if cfg.evaluation.bootstrap < 1 or cfg.evaluation.permutations < 1:
        errors.append("evaluation: bootstrap and permutations must be at least 1")
    if not 0.0 < cfg.evaluation.level < 1.0:
        errors.append("evaluation.level: must lie strictly between 0 and 1")
    for m in cfg.evaluation.metrics:
        if m not in METRICS:
            errors.append(f"evaluation.metrics: unknown metric {m!r}")
    return errors
