"""Clustering accuracy under optimal cluster-class matching, and the
task-aware / task-agnostic evaluation protocols.

Task-aware scoring restricts each sample's argmax to its own block (labeled
classifier for labeled samples, the clustering head for unlabeled ones).
Task-agnostic scoring takes the argmax over the concatenated logits; a
prediction that lands in the wrong block is an error, and only within-block
cluster predictions enter the Hungarian match.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import EvalSplit
from .model import DiscoveryNet


def assignment_profit(profit: np.ndarray, perm: np.ndarray) -> float:
    return float(profit[np.arange(len(perm)), perm].sum())


def _optimal_profit(profit: np.ndarray) -> float:
    perm = kernels.assignment_min_cost(profit.max() - profit if profit.size else profit)
    return assignment_profit(profit, perm)


def hungarian(profit: np.ndarray) -> np.ndarray:
    """Row-to-column permutation of maximal total profit.

    Among equally profitable permutations the lexicographically smallest one
    is returned, found by fixing columns row by row and checking that an
    optimal completion of the remaining subproblem still exists.
    """
    profit = np.asarray(profit, dtype=np.float64)
    if profit.ndim != 2 or profit.shape[0] != profit.shape[1]:
        raise ValueError(f"profit matrix must be square, got {profit.shape}")
    if not np.all(np.isfinite(profit)):
        raise ValueError("profit matrix must be finite")
    n = profit.shape[0]
    if n == 0:
        return np.empty(0, np.int64)

    best_total = _optimal_profit(profit)
    tol = 1e-9 * max(1.0, abs(best_total))
    free_cols = list(range(n))
    perm = np.empty(n, np.int64)
    prefix = 0.0
    for row in range(n):
        for pos, col in enumerate(free_cols):
            rest_cols = free_cols[:pos] + free_cols[pos + 1:]
            rest = _optimal_profit(profit[np.ix_(range(row + 1, n), rest_cols)])
            if prefix + profit[row, col] + rest >= best_total - tol:
                perm[row] = col
                prefix += profit[row, col]
                free_cols = rest_cols
                break
        else:  # pragma: no cover - optimal completion always exists
            raise RuntimeError("assignment canonicalization failed")
    return perm


def contingency(pred: np.ndarray, truth: np.ndarray, num_pred: int,
                num_truth: int) -> np.ndarray:
    """Count matrix pred x truth, zero-padded to square."""
    side = max(num_pred, num_truth)
    counts = np.zeros((side, side), dtype=np.int64)
    np.add.at(counts, (pred, truth), 1)
    return counts


def cluster_accuracy(pred, truth) -> float:
    return cluster_accuracy_with_perm(pred, truth)[0]


def cluster_accuracy_with_perm(pred, truth) -> tuple[float, np.ndarray]:
    """Matched fraction under the best cluster-to-class permutation.

    Truth ids are remapped onto 0..n-1 by sorted value; a non-square count
    matrix is zero-padded, so extra clusters (or classes) simply match
    nothing.
    """
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("pred and truth must be equal-length 1-D arrays")
    if len(pred) == 0:
        raise ValueError("cluster_accuracy needs at least one sample")
    classes, truth_ids = np.unique(truth, return_inverse=True)
    counts = contingency(pred, truth_ids, int(pred.max()) + 1, len(classes))
    perm = hungarian(counts.astype(np.float64))
    matched = assignment_profit(counts.astype(np.float64), perm)
    return matched / len(pred), perm


# ---------------------------------------------------------------------------
# Protocol evaluation


@dataclass(frozen=True)
class SubsetAccuracy:
    labeled: float
    unlabeled: float
    overall: float


@dataclass(frozen=True)
class HeadReport:
    task_aware: SubsetAccuracy
    task_agnostic: SubsetAccuracy
    perm_task_aware: tuple[int, ...]
    perm_task_agnostic: tuple[int, ...]


@dataclass(frozen=True)
class MetricsReport:
    heads: tuple[HeadReport, ...]
    average: HeadReport
    best_index: int

    @property
    def best(self) -> HeadReport:
        return self.heads[self.best_index]

    def to_records(self) -> str:
        """Machine-readable: one tab-separated record per head plus aggregates."""
        lines = ["head\tprotocol\tlabeled\tunlabeled\tall\tperm"]
        rows = [(str(i), h) for i, h in enumerate(self.heads)]
        rows += [("avg", self.average), ("best", self.best)]
        for name, h in rows:
            for proto, acc, perm in (
                ("task_aware", h.task_aware, h.perm_task_aware),
                ("task_agnostic", h.task_agnostic, h.perm_task_agnostic),
            ):
                perm_txt = ",".join(map(str, perm)) if perm else "-"
                lines.append(
                    f"{name}\t{proto}\t{acc.labeled:.6f}\t{acc.unlabeled:.6f}"
                    f"\t{acc.overall:.6f}\t{perm_txt}"
                )
        lines.append(f"best_index\t{self.best_index}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        """Human-readable table: heads x (task-aware | task-agnostic) accuracies."""
        header = (
            f"{'head':>5} | {'aware Lab':>9} {'aware Unlab':>11} {'aware All':>9}"
            f" | {'agn Lab':>9} {'agn Unlab':>11} {'agn All':>9}"
        )
        lines = [header, "-" * len(header)]
        rows = [(str(i), h) for i, h in enumerate(self.heads)]
        rows += [("avg", self.average), ("best", self.best)]
        for name, h in rows:
            a, g = h.task_aware, h.task_agnostic
            lines.append(
                f"{name:>5} | {a.labeled:9.4f} {a.unlabeled:11.4f} {a.overall:9.4f}"
                f" | {g.labeled:9.4f} {g.unlabeled:11.4f} {g.overall:9.4f}"
            )
        lines.append(f"best head: {self.best_index}")
        return "\n".join(lines) + "\n"


def _weighted_overall(lab_acc: float, n_lab: int, unl_acc: float, n_unl: int) -> float:
    return (lab_acc * n_lab + unl_acc * n_unl) / (n_lab + n_unl)


def _mean_subset(accs: list[SubsetAccuracy]) -> SubsetAccuracy:
    return SubsetAccuracy(
        labeled=float(np.mean([a.labeled for a in accs])),
        unlabeled=float(np.mean([a.unlabeled for a in accs])),
        overall=float(np.mean([a.overall for a in accs])),
    )


def evaluate(model: DiscoveryNet, split: EvalSplit,
             head_losses: np.ndarray | None = None) -> MetricsReport:
    """Score every clustering head under both protocols.

    ``head_losses`` are the final-epoch training losses of the clustering
    heads; the best head is their argmin (head 0 when not provided).
    Overclustering heads are never evaluated.
    """
    cl = split.num_labeled_classes
    lab = split.labeled_mask
    n_lab = int(lab.sum())
    n_unl = int((~lab).sum())
    if n_lab == 0 or n_unl == 0:
        raise ValueError("evaluation split needs both labeled and unlabeled samples")

    bundle = model.forward(split.x)
    labeled_logits = bundle.labeled.value
    lab_true = split.y[lab]
    unl_true = split.y[~lab] - cl

    aware_lab = float(np.mean(np.argmax(labeled_logits[lab], axis=1) == lab_true))

    reports = []
    for head in bundle.clustering:
        # task-aware: argmax within each sample's own block
        unl_pred = np.argmax(head.value[~lab], axis=1)
        aware_unl, perm_aware = cluster_accuracy_with_perm(unl_pred, unl_true)
        aware = SubsetAccuracy(
            labeled=aware_lab,
            unlabeled=aware_unl,
            overall=_weighted_overall(aware_lab, n_lab, aware_unl, n_unl),
        )

        # task-agnostic: argmax over the concatenation, cross-block = error
        joint = np.concatenate([labeled_logits, head.value], axis=1)
        pred = np.argmax(joint, axis=1)
        agn_lab = float(np.mean(pred[lab] == lab_true))
        unl_pred_joint = pred[~lab]
        in_block = unl_pred_joint >= cl
        if in_block.any():
            counts = contingency(unl_pred_joint[in_block] - cl, unl_true[in_block],
                                 split.num_unlabeled_classes,
                                 split.num_unlabeled_classes).astype(np.float64)
            perm_agn = hungarian(counts)
            agn_unl = assignment_profit(counts, perm_agn) / n_unl
        else:
            perm_agn = np.arange(split.num_unlabeled_classes)
            agn_unl = 0.0
        agnostic = SubsetAccuracy(
            labeled=agn_lab,
            unlabeled=agn_unl,
            overall=_weighted_overall(agn_lab, n_lab, agn_unl, n_unl),
        )

        reports.append(HeadReport(
            task_aware=aware,
            task_agnostic=agnostic,
            perm_task_aware=tuple(int(v) for v in perm_aware),
            perm_task_agnostic=tuple(int(v) for v in perm_agn),
        ))

    if head_losses is not None:
        if len(head_losses) != len(reports):
            raise ValueError("need one final-epoch loss per clustering head")
        best = int(np.argmin(head_losses))
    else:
        best = 0
    average = HeadReport(
        task_aware=_mean_subset([r.task_aware for r in reports]),
        task_agnostic=_mean_subset([r.task_agnostic for r in reports]),
        perm_task_aware=(),
        perm_task_agnostic=(),
    )
    return MetricsReport(heads=tuple(reports), average=average, best_index=best)
