"""Flat key=value experiment configuration.

One line per field, ``key = value``, '#' comments. The schema below is the
single source of truth: every key, its type, default, and meaning. A config
file plus overrides resolves to an ExperimentConfig from which all component
configs (dataset, model, training, objective, augmentation) are derived.

Schema (type, default):
    seed                int    0      master seed; batch/augment/init streams derive from it
    data_seed           int    -1     dataset generation seed; -1 means follow `seed`
    num_classes         int    8      total classes in the synthetic dataset
    labeled_fraction    float  0.5    leading fraction of classes that is labeled
    samples_per_class   int    500    training samples per class
    test_samples_per_class int 125    held-out samples per class
    input_dim           int    32     dimensionality of the synthetic vectors
    separation          float  5.0    radius of the sphere the class means sit on
    encoder_hidden      ints   64     comma-separated encoder hidden widths
    feature_dim         int    16     encoder output width (unit-normalized)
    num_heads           int    4      clustering heads (= overclustering heads)
    overcluster_factor  int    3      overclustering width multiplier
    projection_hidden   int    64     head MLP hidden width
    projection_out      int    32     head MLP output width
    temperature         float  0.1    softmax temperature everywhere
    pretrain_epochs     int    50
    discovery_epochs    int    100
    batch_size          int    128
    base_lr             float  0.1
    min_lr              float  0.001
    weight_decay        float  1e-4
    momentum            float  0.9    optimizer momentum (conventional default)
    warmup_epochs       int    10     linear warmup length, in epochs
    epsilon             float  0.05   pseudo-label entropy weight
    sinkhorn_iters      int    3
    pseudo_soft         bool   true   soft vs argmax-discretized pseudo-labels
    pseudo_mode         str    sinkhorn   'greedy' disables balancing (control runs)
    aggregation         str    swap   swap | avg_pseudo | avg_logits
    concat_logits       bool   true   off = split-objective ablation
    use_overclustering  bool   true
    augment             str    strong none | weak | strong
    noise_sigma         float  0.1
    mask_fraction       float  0.25
    scale_jitter        float  0.25
    checkpoint_every    int    0      epochs between checkpoints; 0 = final only
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from .data import AugmentPolicy, Dataset, make_gaussian_ncd
from .model import ModelConfig
from .objective import ObjectiveConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Raised for unknown keys or unparsable values; names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    data_seed: int = -1
    num_classes: int = 8
    labeled_fraction: float = 0.5
    samples_per_class: int = 500
    test_samples_per_class: int = 125
    input_dim: int = 32
    separation: float = 5.0
    encoder_hidden: tuple[int, ...] = (64,)
    feature_dim: int = 16
    num_heads: int = 4
    overcluster_factor: int = 3
    projection_hidden: int = 64
    projection_out: int = 32
    temperature: float = 0.1
    pretrain_epochs: int = 50
    discovery_epochs: int = 100
    batch_size: int = 128
    base_lr: float = 0.1
    min_lr: float = 0.001
    weight_decay: float = 1e-4
    momentum: float = 0.9
    warmup_epochs: int = 10
    epsilon: float = 0.05
    sinkhorn_iters: int = 3
    pseudo_soft: bool = True
    pseudo_mode: str = "sinkhorn"
    aggregation: str = "swap"
    concat_logits: bool = True
    use_overclustering: bool = True
    augment: str = "strong"
    noise_sigma: float = 0.1
    mask_fraction: float = 0.25
    scale_jitter: float = 0.25
    checkpoint_every: int = 0

    # -- derived component configs ------------------------------------------

    @property
    def num_labeled(self) -> int:
        import math

        return math.ceil(self.labeled_fraction * self.num_classes)

    @property
    def num_unlabeled(self) -> int:
        return self.num_classes - self.num_labeled

    def resolved_data_seed(self) -> int:
        return self.seed if self.data_seed < 0 else self.data_seed

    def make_dataset(self) -> Dataset:
        return make_gaussian_ncd(
            num_classes=self.num_classes,
            labeled_fraction_of_classes=self.labeled_fraction,
            samples_per_class=self.samples_per_class,
            input_dim=self.input_dim,
            separation=self.separation,
            seed=self.resolved_data_seed(),
            test_samples_per_class=self.test_samples_per_class,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            input_dim=self.input_dim,
            encoder_hidden=self.encoder_hidden,
            feature_dim=self.feature_dim,
            num_labeled=self.num_labeled,
            num_unlabeled=self.num_unlabeled,
            overcluster_factor=self.overcluster_factor,
            num_heads=self.num_heads,
            projection_hidden=self.projection_hidden,
            projection_out=self.projection_out,
            temperature=self.temperature,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            pretrain_epochs=self.pretrain_epochs,
            discovery_epochs=self.discovery_epochs,
            batch_size=self.batch_size,
            base_lr=self.base_lr,
            min_lr=self.min_lr,
            weight_decay=self.weight_decay,
            momentum=self.momentum,
            warmup_epochs=self.warmup_epochs,
            seed=self.seed,
        )

    def objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(
            epsilon=self.epsilon,
            sinkhorn_iters=self.sinkhorn_iters,
            pseudo_soft=self.pseudo_soft,
            aggregation=self.aggregation,
            concat_logits=self.concat_logits,
            use_overclustering=self.use_overclustering,
            pseudo_mode=self.pseudo_mode,
        )

    def augment_policy(self) -> AugmentPolicy:
        return AugmentPolicy(
            strength=self.augment,
            noise_sigma=self.noise_sigma,
            mask_fraction=self.mask_fraction,
            scale_jitter=self.scale_jitter,
        )

    # -- text round-trip ------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            lines.append(f"{f.name} = {_format_value(val)}")
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:8]

    def with_overrides(self, pairs: dict[str, str]) -> "ExperimentConfig":
        updates = {}
        for key, raw in pairs.items():
            field = _FIELDS.get(key)
            if field is None:
                raise ConfigError(f"unknown config field {key!r}")
            updates[key] = _parse_value(key, field.type, raw)
        return dataclasses.replace(self, **updates)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _format_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ",".join(str(v) for v in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _parse_value(key: str, type_name: str, raw: str):
    raw = raw.strip()
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        if type_name == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if type_name == "tuple[int, ...]":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for config field {key!r}: {raw!r}") from exc


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        pairs[key] = raw
    return (base or ExperimentConfig()).with_overrides(pairs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def apply_set_flags(cfg: ExperimentConfig, flags: list[str]) -> ExperimentConfig:
    pairs = {}
    for flag in flags:
        if "=" not in flag:
            raise ConfigError(f"--set expects key=value, got {flag!r}")
        key, raw = flag.split("=", 1)
        pairs[key.strip()] = raw
    return cfg.with_overrides(pairs)


# The reference-scale settings (kept runnable, hours not minutes at this size).
PRESETS: dict[str, dict[str, str]] = {
    "desk": {},
    "full": {
        "pretrain_epochs": "200",
        "discovery_epochs": "200",
        "batch_size": "512",
    },
}
