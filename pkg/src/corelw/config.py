"""Flat run configuration shared by every command."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .corpus import PreprocessConfig, default_stopwords, load_stopwords
from .encoders import EncoderConfig
from .errors import ConfigError, CorelError
from .evaluation import SplitPlan
from .ot import SinkhornConfig
from .training import TrainConfig

CONFIG_ENV = "CORELW_CONFIG"

METHODS = {
    "corel-cnn": "cnn",
    "corel-lstm": "lstm",
    "corel-bilstm": "bilstm",
    "baseline-lstm": "lstm",
    "baseline-bilstm": "bilstm",
}


@dataclass(frozen=True)
class RunConfig:
    # preprocessing
    lowercase: bool = True
    strip_punctuation: bool = True
    remove_stopwords: bool = True
    stem: bool = True
    stopword_path: str | None = None
    max_tokens: int | None = None
    # embeddings
    embedding_path: str | None = None
    embedding_dim: int = 300
    sif_a: float = 1e-3
    oov_seed: int = 0
    # encoder
    method: str = "corel-cnn"
    hidden_dim: int = 300
    conv_dim: int = 300
    half_window: int = 1
    batch_norm: bool = True
    paper_exact_cell: bool = False
    # optimal transport
    sinkhorn_epsilon: float | None = None
    sinkhorn_epsilon_scale: float = 0.1
    sinkhorn_max_iters: int = 500
    sinkhorn_tolerance: float = 1e-6
    # training
    margin: float = 1.0
    learning_rate: float = 0.01
    batch_size: int = 408
    epochs: int = 5
    triplets_per_anchor: int = 8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    resample_each_epoch: bool = False
    clip_norm: float | None = None
    seed: int = 0
    # scoring
    k: int = 7
    baseline_head: str = "ols"
    num_levels: int | None = None
    # protocol
    repeats: int = 10
    train_fraction: float = 0.7
    stratified: bool = True
    min_occurrences: int = 2
    output_dir: str = "runs"
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {sorted(METHODS)}, got {self.method!r}")
        if self.baseline_head not in ("ols", "adam"):
            raise ConfigError("baseline_head must be 'ols' or 'adam'")
        if self.k < 1 or self.min_occurrences < 1 or self.threads < 1:
            raise ConfigError("k, min_occurrences and threads must be positive")
        # surface component invariants before any computation starts
        try:
            self.preprocess()
            self.encoder()
            self.sinkhorn()
            self.train()
            self.plan()
        except ConfigError:
            raise
        except CorelError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def encoder_kind(self) -> str:
        return METHODS[self.method]

    @property
    def is_baseline(self) -> bool:
        return self.method.startswith("baseline-")

    def preprocess(self) -> PreprocessConfig:
        stop = load_stopwords(self.stopword_path) if self.stopword_path else default_stopwords()
        return PreprocessConfig(self.lowercase, self.strip_punctuation, self.remove_stopwords,
                                self.stem, stop, self.max_tokens)

    def encoder(self, seed: int | None = None) -> EncoderConfig:
        return EncoderConfig(
            kind=self.encoder_kind, d_w=self.embedding_dim, d_h=self.hidden_dim,
            d_c=self.conv_dim, half_window=self.half_window, batch_norm=self.batch_norm,
            paper_exact_cell=self.paper_exact_cell, seed=self.seed if seed is None else seed,
        )

    def sinkhorn(self) -> SinkhornConfig:
        return SinkhornConfig(self.sinkhorn_epsilon, self.sinkhorn_epsilon_scale,
                              self.sinkhorn_max_iters, self.sinkhorn_tolerance)

    def train(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            margin=self.margin, learning_rate=self.learning_rate, batch_size=self.batch_size,
            epochs=self.epochs, triplets_per_anchor=self.triplets_per_anchor,
            seed=self.seed if seed is None else seed, adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2, adam_eps=self.adam_eps,
            resample_each_epoch=self.resample_each_epoch, clip_norm=self.clip_norm,
        )

    def plan(self) -> SplitPlan:
        return SplitPlan(self.repeats, self.train_fraction, self.stratified, self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **overrides) -> "RunConfig":
        return build_config({**self.to_dict(), **overrides})


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, value):
    ftype = str(_FIELDS[name].type)
    if value is None or (isinstance(value, str) and value.lower() in ("none", "null", "")):
        if "None" in ftype:
            return None
        raise ConfigError(f"{name} may not be empty")
    try:
        if ftype.startswith("bool"):
            if isinstance(value, bool):
                return value
            s = str(value).lower()
            if s in ("true", "1", "yes", "on"):
                return True
            if s in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        if ftype.startswith("int"):
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError(value)
            return int(float(value))
        if ftype.startswith("float"):
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def build_config(values: dict) -> RunConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return RunConfig(**{k: _coerce(k, v) for k, v in values.items()})


def read_config_file(path: str | Path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid key: value text: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a flat key: value mapping")
    base = Path(path).resolve().parent
    for k, v in data.items():
        if isinstance(v, (dict, list)):
            raise ConfigError(f"config key {k!r} must be a scalar (flat format)")
        # relative file paths are taken relative to the config file itself
        if k.endswith("_path") and isinstance(v, str) and v and not Path(v).is_absolute():
            data[k] = str(base / v)
    return data


def load_config(path: str | Path | None = None, overrides: dict | None = None,
                base: dict | None = None) -> RunConfig:
    """defaults < base < config file (path or $CORELW_CONFIG) < overrides."""
    values = dict(base or {})
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        values.update(read_config_file(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


def config_text(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(config_text(cfg), encoding="utf-8")
