"""Experiment configuration: a JSON document parsed strictly into dataclasses.

Unknown keys anywhere are an error, so a misspelled hyperparameter cannot be
silently ignored.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .trainer import TrainConfig

PARADIGMS = ("supervised", "transfer", "semi")
METHODS = ("random", "mutual")


@dataclass(frozen=True)
class BlobConfig:
    n_classes: int = 4
    n_per_class: int = 500
    dim: int = 2
    separation: float = 5.0
    spread: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class DataConfig:
    path: str | None = None
    has_label_column: bool = True
    blobs: BlobConfig | None = None
    test_fraction: float = 0.2
    labeled_fraction: float | None = None
    split_seed: int = 0

    def __post_init__(self):
        if self.path is None and self.blobs is None:
            object.__setattr__(self, "blobs", BlobConfig())
        if self.path is not None and self.blobs is not None:
            raise ConfigError("data: give either 'path' or 'blobs', not both")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("data.test_fraction must be in [0, 1)")


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple[int, ...] = (16, 16)
    n_outputs: int | None = None  # default: number of classes
    activation: str = "relu"
    seed: int = 0


@dataclass(frozen=True)
class SimilarityConfig:
    similar_recall: float = 1.0
    dissimilar_recall: float = 1.0
    similar_precision: float | None = None
    dissimilar_precision: float | None = None
    seed: int = 0
    augmentation_scale: float | None = None


@dataclass(frozen=True)
class OutputConfig:
    dataset: str = "data.csv"
    checkpoint: str = "model.ckpt"
    metrics: str = "metrics.csv"
    eval_data: str | None = "eval_data.csv"
    surface: str = "surface.csv"


@dataclass(frozen=True)
class EvalConfig:
    k: int | None = None
    report_ndc: bool = True


@dataclass(frozen=True)
class LandscapeConfig:
    method: str = "random"
    checkpoints: tuple[str, ...] = ()
    loss: str = "MCL"
    alpha_range: tuple[float, float] = (-1.0, 1.0)
    beta_range: tuple[float, float] = (-1.0, 1.0)
    resolution: int = 91
    seed: int = 0
    sigma: float = 2.0
    log_scale: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"landscape.method must be one of {METHODS}")
        object.__setattr__(self, "loss", self.loss.upper())


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paradigm: str = "supervised"
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    landscape: LandscapeConfig = field(default_factory=LandscapeConfig)

    def __post_init__(self):
        if self.paradigm not in PARADIGMS:
            raise ConfigError(f"paradigm must be one of {PARADIGMS}, got {self.paradigm!r}")

    def with_seed(self, seed: int) -> ExperimentConfig:
        """Every seed in the document replaced by ``seed``."""
        r = dataclasses.replace
        blobs = r(self.data.blobs, seed=seed) if self.data.blobs else None
        return r(
            self,
            data=r(self.data, blobs=blobs, split_seed=seed),
            model=r(self.model, seed=seed),
            train=r(self.train, seed=seed),
            similarity=r(self.similarity, seed=seed),
            landscape=r(self.landscape, seed=seed),
        )


def _convert(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or type(tp).__name__ == "UnionType":
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, where)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, where)
    if origin is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        elem = args[0]
        return tuple(_convert(elem, v, where) for v in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp}")


def from_dict(cls, data, where: str = "config"):
    """Build dataclass ``cls`` from a JSON object, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {k: _convert(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(ExperimentConfig, raw)
