"""Synthetic discovery datasets and vector-space view augmentation.

A dataset is a labeled split (classes 0..Cl-1), an unlabeled split whose
ground-truth classes (Cl..Cl+Cu-1) are hidden from training, and a held-out
test split drawn from the same class means. Hidden unlabeled classes are only
reachable through the metrics-facing accessors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EXPORT_HEADER = "ncdlab-dataset v1"


@dataclass(frozen=True)
class TrainData:
    """What the trainer is allowed to see: no hidden unlabeled classes."""

    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray


@dataclass(frozen=True)
class EvalSplit:
    """Metrics-facing view: inputs with full ground truth over all classes."""

    x: np.ndarray
    y: np.ndarray
    num_labeled_classes: int
    num_unlabeled_classes: int

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.y < self.num_labeled_classes


@dataclass(frozen=True)
class Dataset:
    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    hidden_unlabeled_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    input_dim: int
    num_labeled_classes: int
    num_unlabeled_classes: int
    seed: int
    separation: float

    def train_data(self) -> TrainData:
        return TrainData(self.labeled_x, self.labeled_y, self.unlabeled_x)

    def eval_split(self, split: str = "test") -> EvalSplit:
        if split == "test":
            x, y = self.test_x, self.test_y
        elif split == "train":
            x = np.concatenate([self.labeled_x, self.unlabeled_x])
            y = np.concatenate([self.labeled_y, self.hidden_unlabeled_y])
        else:
            raise ValueError(f"unknown split {split!r}")
        return EvalSplit(x, y, self.num_labeled_classes, self.num_unlabeled_classes)


def make_gaussian_ncd(
    num_classes: int,
    labeled_fraction_of_classes: float,
    samples_per_class: int,
    input_dim: int,
    separation: float,
    seed: int,
    test_samples_per_class: int | None = None,
) -> Dataset:
    """Unit-variance isotropic clusters with means on a radius-`separation` sphere.

    The first ceil(fraction * num_classes) classes are labeled, the rest are
    the hidden unlabeled classes. Deterministic given the seed.
    """
    num_labeled = math.ceil(labeled_fraction_of_classes * num_classes)
    if num_labeled < 1 or num_labeled >= num_classes:
        raise ValueError(
            f"labeled fraction {labeled_fraction_of_classes} leaves "
            f"{num_labeled} labeled of {num_classes} classes; need >= 1 of each"
        )
    if samples_per_class < 1 or input_dim < 1:
        raise ValueError("samples_per_class and input_dim must be positive")
    if test_samples_per_class is None:
        test_samples_per_class = max(samples_per_class // 4, 1)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    directions = rng.normal(size=(num_classes, input_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = directions * separation

    def draw(per_class: int):
        xs, ys = [], []
        for c in range(num_classes):
            xs.append(means[c] + rng.normal(size=(per_class, input_dim)))
            ys.append(np.full(per_class, c, dtype=np.int64))
        return np.concatenate(xs), np.concatenate(ys)

    train_x, train_y = draw(samples_per_class)
    test_x, test_y = draw(test_samples_per_class)

    labeled = train_y < num_labeled
    return Dataset(
        labeled_x=train_x[labeled],
        labeled_y=train_y[labeled],
        unlabeled_x=train_x[~labeled],
        hidden_unlabeled_y=train_y[~labeled],
        test_x=test_x,
        test_y=test_y,
        input_dim=input_dim,
        num_labeled_classes=num_labeled,
        num_unlabeled_classes=num_classes - num_labeled,
        seed=seed,
        separation=separation,
    )


# ---------------------------------------------------------------------------
# View augmentation


@dataclass(frozen=True)
class AugmentPolicy:
    """Vector-space analogue of image view augmentation.

    none: views equal the input. weak: additive Gaussian noise. strong:
    noise, then Bernoulli coordinate masking (crop analogue), then a
    per-sample scale jitter (color-jitter analogue).
    """

    strength: str = "strong"
    noise_sigma: float = 0.1
    mask_fraction: float = 0.25
    scale_jitter: float = 0.25

    def __post_init__(self):
        if self.strength not in ("none", "weak", "strong"):
            raise ValueError(f"unknown augmentation strength {self.strength!r}")
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ViewPair:
    """Two augmentations of the same batch, in identical sample order.

    ``ground_truth`` holds the labeled class for labeled rows and -1 for
    unlabeled rows.
    """

    v1: np.ndarray
    v2: np.ndarray
    labeled_mask: np.ndarray
    ground_truth: np.ndarray

    def __post_init__(self):
        if not (len(self.v1) == len(self.v2) == len(self.labeled_mask) == len(self.ground_truth)):
            raise ValueError("view pair fields must share the sample dimension")


def augment(x: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    if policy.strength == "none":
        return x.copy()
    v = x + rng.normal(scale=policy.noise_sigma, size=x.shape)
    if policy.strength == "strong":
        keep = rng.random(size=x.shape) >= policy.mask_fraction
        v = v * keep
        scales = rng.uniform(
            1.0 - policy.scale_jitter, 1.0 + policy.scale_jitter, size=(len(x), 1)
        )
        v = v * scales
    return v


def two_views(
    x: np.ndarray,
    policy: AugmentPolicy,
    rng: np.random.Generator,
    labeled_mask: np.ndarray | None = None,
    ground_truth: np.ndarray | None = None,
) -> ViewPair:
    """Two independent random augmentations of each sample."""
    if labeled_mask is None:
        labeled_mask = np.zeros(len(x), dtype=bool)
    if ground_truth is None:
        ground_truth = np.full(len(x), -1, dtype=np.int64)
    return ViewPair(
        v1=augment(x, policy, rng),
        v2=augment(x, policy, rng),
        labeled_mask=np.asarray(labeled_mask, dtype=bool),
        ground_truth=np.asarray(ground_truth, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Export / import (delimited text, exact float round-trip)


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {_EXPORT_HEADER}\n")
        fh.write(
            "input_dim=%d num_labeled_classes=%d num_unlabeled_classes=%d "
            "seed=%d separation=%.17g\n"
            % (
                dataset.input_dim,
                dataset.num_labeled_classes,
                dataset.num_unlabeled_classes,
                dataset.seed,
                dataset.separation,
            )
        )
        for name, x, y in (
            ("labeled", dataset.labeled_x, dataset.labeled_y),
            ("unlabeled", dataset.unlabeled_x, dataset.hidden_unlabeled_y),
            ("test", dataset.test_x, dataset.test_y),
        ):
            fh.write(f"{name} {len(x)}\n")
            for cls, row in zip(y, x):
                fh.write("%d %s\n" % (cls, " ".join("%.17g" % v for v in row)))


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != f"# {_EXPORT_HEADER}":
            raise ValueError(f"not a dataset file (header {header!r})")
        meta = dict(kv.split("=") for kv in fh.readline().split())
        input_dim = int(meta["input_dim"])

        def read_block(expected_name):
            name, count = fh.readline().split()
            if name != expected_name:
                raise ValueError(f"expected block {expected_name!r}, got {name!r}")
            n = int(count)
            x = np.empty((n, input_dim))
            y = np.empty(n, dtype=np.int64)
            for i in range(n):
                parts = fh.readline().split()
                y[i] = int(parts[0])
                x[i] = [float(v) for v in parts[1:]]
            return x, y

        labeled_x, labeled_y = read_block("labeled")
        unlabeled_x, hidden_y = read_block("unlabeled")
        test_x, test_y = read_block("test")

    return Dataset(
        labeled_x=labeled_x,
        labeled_y=labeled_y,
        unlabeled_x=unlabeled_x,
        hidden_unlabeled_y=hidden_y,
        test_x=test_x,
        test_y=test_y,
        input_dim=input_dim,
        num_labeled_classes=int(meta["num_labeled_classes"]),
        num_unlabeled_classes=int(meta["num_unlabeled_classes"]),
        seed=int(meta["seed"]),
        separation=float(meta["separation"]),
    )
