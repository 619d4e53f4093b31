"""Optimal-transport pseudo-labeling via Sinkhorn-Knopp iterations.

Given per-sample cluster logits (columns of L), find the soft assignment
matrix on the transportation polytope (row sums 1/C, column sums 1/B) that
maximizes transported logit mass plus an entropy term weighted by epsilon.
Larger epsilon scatters the assignments; small epsilon approaches hard ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass(frozen=True)
class SinkhornProblem:
    """Column-per-sample logits plus the entropy weight and iteration count."""

    logits: np.ndarray  # (num_clusters, batch)
    epsilon: float = 0.05
    n_iter: int = 3

    def __post_init__(self):
        logits = np.ascontiguousarray(self.logits, dtype=np.float64)
        if logits.ndim != 2:
            raise ValueError(f"logits must be 2-D, got shape {logits.shape}")
        if logits.shape[1] < 1:
            raise ValueError("need at least one sample column")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.n_iter < 0:
            raise ValueError("n_iter must be non-negative")
        object.__setattr__(self, "logits", logits)


@dataclass(frozen=True)
class PseudoLabelMatrix:
    """Solution of a Sinkhorn problem.

    ``assignments`` lives on the transportation polytope (row sums ~1/C,
    column sums ~1/B); :meth:`per_sample` rescales columns into targets and
    transposes to one pseudo-label row per sample.
    """

    assignments: np.ndarray  # (num_clusters, batch)
    mode: str = "soft"

    def per_sample(self) -> np.ndarray:
        if self.mode == "hard":
            out = np.zeros_like(self.assignments)
            out[np.argmax(self.assignments, axis=0), np.arange(self.assignments.shape[1])] = 1.0
            return np.ascontiguousarray(out.T)
        return np.ascontiguousarray(
            (self.assignments / self.assignments.sum(axis=0, keepdims=True)).T
        )


def solve(problem: SinkhornProblem, mode: str = "soft") -> PseudoLabelMatrix:
    """Scale exp(L/epsilon) onto the transportation polytope.

    The exponent is max-shifted before exponentiation; the shift cancels in
    the normalizations, so the result is invariant to adding a constant to
    every logit.
    """
    if mode not in ("soft", "hard"):
        raise ValueError(f"unknown mode {mode!r}")
    l = problem.logits
    q = np.exp((l - l.max()) / problem.epsilon)
    assert np.all(np.isfinite(q)), "exp overflow despite max-shift"
    q = kernels.sinkhorn_iterations(q, problem.n_iter)
    return PseudoLabelMatrix(assignments=q, mode=mode)


def entropy(y: np.ndarray) -> float:
    """-sum(y * log y) with the 0*log(0) = 0 convention."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0.0):
        raise ValueError("entropy requires non-negative entries")
    pos = y[y > 0.0]
    return float(-(pos * np.log(pos)).sum())
