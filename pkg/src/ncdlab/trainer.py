"""Two-phase training: supervised pretraining on the labeled set, then joint
discovery over labeled + unlabeled data with the unified objective.

Each phase owns a fresh optimizer (warmup + cosine over its own step count);
model parameters carry over between phases, so the labeled head enters
discovery warm-started. Per-epoch records (per-head loss, learning rate,
pseudo-label usage entropy) stream to a JSONL log when a path is given.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numgrad as ng
from . import objective as obj
from .data import AugmentPolicy, TrainData, augment, two_views
from .model import DiscoveryNet


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 50
    discovery_epochs: int = 100
    batch_size: int = 128
    base_lr: float = 0.1
    min_lr: float = 0.001
    weight_decay: float = 1e-4
    momentum: float = 0.9          # conventional default, recorded not quoted
    warmup_epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("pretrain_epochs", "discovery_epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class PhaseResult:
    records: list[dict] = field(default_factory=list)

    @property
    def loss_curve(self) -> list[float]:
        return [r["loss"] for r in self.records]

    @property
    def final_head_losses(self) -> np.ndarray:
        """Final-epoch mean loss per clustering head (discovery phase only)."""
        last = self.records[-1]
        keys = sorted(k for k in last if k.startswith("loss_clustering"))
        return np.array([last[k] for k in keys])

    @property
    def best_head(self) -> int:
        return int(np.argmin(self.final_head_losses))


def _streams(seed: int, *names: str) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _write_record(log_file, record: dict) -> None:
    if log_file is not None:
        log_file.write(json.dumps(record, sort_keys=True) + "\n")


def usage_entropy(counts: np.ndarray) -> float:
    """Entropy (nats) of a pseudo-label usage histogram."""
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def pretrain(model: DiscoveryNet, train: TrainData, cfg: TrainConfig,
             policy: AugmentPolicy, log_path=None) -> PhaseResult:
    """Cross-entropy on the labeled head only; every other head is untouched."""
    rngs = _streams(cfg.seed, "pretrain_batches", "pretrain_augment")
    steps_per_epoch = max(1, -(-len(train.labeled_x) // cfg.batch_size))
    opt = ng.SGDMomentum(
        params=model.parameters("pretrain"),
        base_lr=cfg.base_lr, min_lr=cfg.min_lr,
        weight_decay=cfg.weight_decay, momentum=cfg.momentum,
        warmup_steps=cfg.warmup_epochs * steps_per_epoch,
        total_steps=cfg.pretrain_epochs * steps_per_epoch,
    )
    result = PhaseResult()
    log_file = open(log_path, "w") if log_path else None
    try:
        step = 0
        for epoch in range(cfg.pretrain_epochs):
            epoch_loss = 0.0
            n_batches = 0
            lr = 0.0
            for idx in _batches(len(train.labeled_x), cfg.batch_size,
                                rngs["pretrain_batches"]):
                x = augment(train.labeled_x[idx], policy, rngs["pretrain_augment"])
                targets = obj._one_hot(train.labeled_y[idx], model.config.num_labeled)
                logits = model.forward(x).labeled
                loss = ng.softmax_ce(logits, targets, model.config.temperature)
                opt.zero_grad()
                ng.backward(loss)
                step += 1
                lr = opt.step(step)
                epoch_loss += float(loss.value)
                n_batches += 1
            record = {"phase": "pretrain", "epoch": epoch,
                      "loss": epoch_loss / n_batches, "lr": lr}
            result.records.append(record)
            _write_record(log_file, record)
    finally:
        if log_file is not None:
            log_file.close()
    return result


def discover(model: DiscoveryNet, train: TrainData, cfg: TrainConfig,
             policy: AugmentPolicy, objective_cfg: obj.ObjectiveConfig,
             log_path=None, checkpoint_every: int = 0,
             checkpoint_dir=None) -> PhaseResult:
    """Joint training over labeled + unlabeled with the unified objective.

    One epoch is a shuffled pass over the combined sets, so batches mix the
    two in proportion to their sizes. With ``checkpoint_every`` > 0 and a
    directory, an intermediate checkpoint lands every that many epochs.
    """
    rngs = _streams(cfg.seed, "discover_batches", "discover_augment")
    all_x = np.concatenate([train.labeled_x, train.unlabeled_x])
    n_labeled = len(train.labeled_x)
    labels = np.full(len(all_x), -1, dtype=np.int64)
    labels[:n_labeled] = train.labeled_y
    labeled_mask = np.arange(len(all_x)) < n_labeled

    steps_per_epoch = max(1, -(-len(all_x) // cfg.batch_size))
    opt = ng.SGDMomentum(
        params=model.parameters("all"),
        base_lr=cfg.base_lr, min_lr=cfg.min_lr,
        weight_decay=cfg.weight_decay, momentum=cfg.momentum,
        warmup_steps=cfg.warmup_epochs * steps_per_epoch,
        total_steps=cfg.discovery_epochs * steps_per_epoch,
    )
    result = PhaseResult()
    log_file = open(log_path, "w") if log_path else None
    try:
        step = 0
        for epoch in range(cfg.discovery_epochs):
            epoch_loss = 0.0
            head_sums: dict[str, float] = {}
            usage = np.zeros((model.config.num_heads, model.config.num_unlabeled),
                             dtype=np.int64)
            n_batches = 0
            lr = 0.0
            for idx in _batches(len(all_x), cfg.batch_size, rngs["discover_batches"]):
                pair = two_views(all_x[idx], policy, rngs["discover_augment"],
                                 labeled_mask=labeled_mask[idx],
                                 ground_truth=labels[idx])
                total = obj.total_loss(model, pair, objective_cfg)
                opt.zero_grad()
                ng.backward(total.node)
                step += 1
                lr = opt.step(step)
                epoch_loss += total.value
                for name, val in total.head_losses.items():
                    head_sums[name] = head_sums.get(name, 0.0) + val
                usage += total.pseudo_counts
                n_batches += 1
            record = {"phase": "discover", "epoch": epoch,
                      "loss": epoch_loss / n_batches, "lr": lr}
            for name, val in sorted(head_sums.items()):
                record[f"loss_{name}"] = val / n_batches
            for h in range(model.config.num_heads):
                record[f"usage_entropy_{h}"] = usage_entropy(usage[h])
            result.records.append(record)
            _write_record(log_file, record)
            if (checkpoint_every > 0 and checkpoint_dir is not None
                    and (epoch + 1) % checkpoint_every == 0
                    and epoch + 1 < cfg.discovery_epochs):
                model.save(f"{checkpoint_dir}/checkpoint_epoch{epoch + 1}.npz",
                           extras={"phase": "discover", "epoch": epoch + 1})
    finally:
        if log_file is not None:
            log_file.close()
    return result
