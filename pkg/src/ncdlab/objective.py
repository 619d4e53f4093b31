"""Unified cross-entropy over the concatenated class/cluster space.

Targets are zero-padded into the joint width: ground-truth one-hots occupy
the labeled block, pseudo-labels the unlabeled block, so the two kinds have
disjoint support and one softmax cross-entropy handles both. Pseudo-labels
enter as plain arrays (stop-gradient) produced per view by Sinkhorn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numgrad as ng
from . import sinkhorn
from .data import ViewPair
from .model import DiscoveryNet, LogitsBundle

AGGREGATIONS = ("swap", "avg_pseudo", "avg_logits")


@dataclass(frozen=True)
class ObjectiveConfig:
    epsilon: float = 0.05
    sinkhorn_iters: int = 3
    pseudo_soft: bool = True
    aggregation: str = "swap"
    concat_logits: bool = True          # off = split-objective ablation
    use_overclustering: bool = True
    pseudo_mode: str = "sinkhorn"       # "greedy" = argmax labels, no balancing

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation mode {self.aggregation!r}")
        if self.pseudo_mode not in ("sinkhorn", "greedy"):
            raise ValueError(f"unknown pseudo_mode {self.pseudo_mode!r}")


@dataclass
class TotalLoss:
    node: ng.Node
    head_losses: dict[str, float] = field(default_factory=dict)
    # hard-argmax pseudo-label counts per clustering head, for usage entropy
    pseudo_counts: np.ndarray | None = None

    @property
    def value(self) -> float:
        return float(self.node.value)


def pad_label(y_l: np.ndarray, unlabeled_width: int) -> np.ndarray:
    """[one-hot, zeros]: a ground-truth target in the joint width."""
    y_l = np.asarray(y_l, dtype=np.float64)
    if y_l.ndim != 1:
        raise ValueError("pad_label expects a single label vector")
    if not (np.all((y_l == 0.0) | (y_l == 1.0)) and y_l.sum() == 1.0):
        raise ValueError("pad_label expects a valid one-hot vector")
    return np.concatenate([y_l, np.zeros(unlabeled_width)])


def pad_pseudo(y_hat: np.ndarray, labeled_width: int) -> np.ndarray:
    """[zeros, pseudo-label]: a cluster target in the joint width."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y_hat.ndim != 1:
        raise ValueError("pad_pseudo expects a single pseudo-label vector")
    if abs(y_hat.sum() - 1.0) > 1e-6:
        raise ValueError("pseudo-label must sum to 1")
    return np.concatenate([np.zeros(labeled_width), y_hat])


def _one_hot(labels: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((len(labels), width))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def pseudo_labels(logits_rows: np.ndarray, cfg: ObjectiveConfig) -> np.ndarray:
    """One pseudo-label row per sample from (batch, clusters) head logits."""
    if cfg.pseudo_mode == "greedy":
        return _one_hot(np.argmax(logits_rows, axis=1), logits_rows.shape[1])
    problem = sinkhorn.SinkhornProblem(
        logits_rows.T, epsilon=cfg.epsilon, n_iter=cfg.sinkhorn_iters
    )
    return sinkhorn.solve(problem, mode="soft" if cfg.pseudo_soft else "hard").per_sample()


def _labeled_targets(pair: ViewPair, width: int) -> np.ndarray:
    return _one_hot(pair.ground_truth[pair.labeled_mask], width)


def _head_pseudo_pair(
    pair: ViewPair, head1: ng.Node, head2: ng.Node, cfg: ObjectiveConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-label targets (per unlabeled row) supervising view 1 and view 2."""
    unl = ~pair.labeled_mask
    l1 = head1.value[unl]
    l2 = head2.value[unl]
    if cfg.aggregation == "swap":
        # each view's assignment supervises the other view
        return pseudo_labels(l2, cfg), pseudo_labels(l1, cfg)
    if cfg.aggregation == "avg_pseudo":
        avg = 0.5 * (pseudo_labels(l1, cfg) + pseudo_labels(l2, cfg))
        return avg, avg
    shared = pseudo_labels(0.5 * (l1 + l2), cfg)
    return shared, shared


def _joint_targets(pair: ViewPair, pseudo: np.ndarray, labeled_width: int,
                   cluster_width: int) -> np.ndarray:
    t = np.zeros((len(pair.v1), labeled_width + cluster_width))
    lab = pair.labeled_mask
    t[lab, :labeled_width] = _labeled_targets(pair, labeled_width)
    t[~lab, labeled_width:] = pseudo
    return t


def _view_loss_concat(bundle: LogitsBundle, head: ng.Node, targets: np.ndarray,
                      temperature: float) -> ng.Node:
    return ng.softmax_ce(ng.concat_cols(bundle.labeled, head), targets, temperature)


def _view_loss_split(bundle: LogitsBundle, head: ng.Node, pair: ViewPair,
                     pseudo: np.ndarray, temperature: float) -> ng.Node:
    """Split-objective ablation: separate softmaxes for the two sample kinds."""
    lab_idx = np.nonzero(pair.labeled_mask)[0]
    unl_idx = np.nonzero(~pair.labeled_mask)[0]
    terms = []
    if len(lab_idx):
        terms.append(ng.softmax_ce(
            ng.gather_rows(bundle.labeled, lab_idx),
            _labeled_targets(pair, bundle.labeled.shape[1]),
            temperature,
        ))
    if len(unl_idx):
        terms.append(ng.softmax_ce(ng.gather_rows(head, unl_idx), pseudo, temperature))
    if not terms:
        raise ValueError("empty batch")
    loss = terms[0]
    for extra in terms[1:]:
        loss = ng.add(loss, extra)
    return loss


def head_pair_loss(
    bundle1: LogitsBundle,
    bundle2: LogitsBundle,
    pair: ViewPair,
    kind: str,
    index: int,
    cfg: ObjectiveConfig,
    temperature: float,
) -> tuple[ng.Node, np.ndarray | None]:
    """Cross-view loss for one head: ce(view1, targets2) + ce(view2, targets1).

    Returns the loss node and, when any unlabeled rows exist, the hard-argmax
    counts of the pseudo-labels that were consumed.
    """
    head1 = bundle1.head(kind, index)
    head2 = bundle2.head(kind, index)
    width = head1.shape[1]
    n_unlabeled = int((~pair.labeled_mask).sum())

    counts = None
    if n_unlabeled:
        pseudo_for_v1, pseudo_for_v2 = _head_pseudo_pair(pair, head1, head2, cfg)
        stacked = np.concatenate([pseudo_for_v1, pseudo_for_v2])
        counts = np.bincount(np.argmax(stacked, axis=1), minlength=width)
    else:
        pseudo_for_v1 = pseudo_for_v2 = np.zeros((0, width))

    if cfg.concat_logits:
        labeled_width = bundle1.labeled.shape[1]
        t1 = _joint_targets(pair, pseudo_for_v1, labeled_width, width)
        t2 = _joint_targets(pair, pseudo_for_v2, labeled_width, width)
        loss = ng.add(
            _view_loss_concat(bundle1, head1, t1, temperature),
            _view_loss_concat(bundle2, head2, t2, temperature),
        )
    else:
        loss = ng.add(
            _view_loss_split(bundle1, head1, pair, pseudo_for_v1, temperature),
            _view_loss_split(bundle2, head2, pair, pseudo_for_v2, temperature),
        )
    return loss, counts


def swapped_loss(
    model: DiscoveryNet,
    pair: ViewPair,
    kind: str,
    index: int,
    cfg: ObjectiveConfig,
) -> ng.Node:
    """Standalone cross-view loss for a single head (fresh forward passes)."""
    bundle1 = model.forward(pair.v1)
    bundle2 = model.forward(pair.v2)
    loss, _ = head_pair_loss(bundle1, bundle2, pair, kind, index, cfg,
                             model.config.temperature)
    return loss


def total_loss(model: DiscoveryNet, pair: ViewPair, cfg: ObjectiveConfig) -> TotalLoss:
    """Mean of the cross-view losses over all clustering (and, unless ablated,
    overclustering) heads; both views share one forward pass per view."""
    bundle1 = model.forward(pair.v1)
    bundle2 = model.forward(pair.v2)
    temperature = model.config.temperature

    kinds = ["clustering"] + (["overclustering"] if cfg.use_overclustering else [])
    losses: list[ng.Node] = []
    head_losses: dict[str, float] = {}
    pseudo_counts = np.zeros((model.config.num_heads, model.config.num_unlabeled),
                             dtype=np.int64)
    for kind in kinds:
        for index in range(model.config.num_heads):
            loss, counts = head_pair_loss(bundle1, bundle2, pair, kind, index,
                                          cfg, temperature)
            losses.append(loss)
            head_losses[f"{kind}{index}"] = float(loss.value)
            if kind == "clustering" and counts is not None:
                pseudo_counts[index] += counts

    node = losses[0]
    for extra in losses[1:]:
        node = ng.add(node, extra)
    node = ng.scale(node, 1.0 / len(losses))
    return TotalLoss(node=node, head_losses=head_losses, pseudo_counts=pseudo_counts)
