"""Minimal reverse-mode autodiff over float64 numpy matrices.

Just enough machinery to train the discovery network: matrix product, bias
add, ReLU, row-wise l2 normalization, temperature softmax cross-entropy
against fixed soft targets, plus an SGD-with-momentum optimizer driven by a
linear-warmup / cosine-annealing schedule.

Every value is a 2-D C-order float64 array except losses, which are 0-d.
Targets passed to :func:`softmax_ce` are plain arrays, never nodes, so the
target side of the loss can not receive gradient by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class Node:
    """A value in the computation graph and its accumulated gradient.

    ``grad`` always matches ``value`` in shape and accumulates additively
    across fan-out. Leaf nodes (parameters, inputs) have no parents.
    """

    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value: np.ndarray, parents: tuple = ()):
        self.value = value
        self.grad = np.zeros_like(value)
        self.parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(shape={self.value.shape})"


def as_matrix(values) -> np.ndarray:
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def parameter(values) -> Node:
    return Node(as_matrix(values).copy())


def constant(values) -> Node:
    return Node(as_matrix(values))


def matmul(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {a.value.shape} x {b.value.shape}"
        )
    out = Node(a.value @ b.value, (a, b))

    def backward(g):
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g

    out._backward = backward
    return out


def transpose(x: Node) -> Node:
    out = Node(np.ascontiguousarray(x.value.T), (x,))

    def backward(g):
        x.grad += g.T

    out._backward = backward
    return out


def add_bias(x: Node, b: Node) -> Node:
    """Add a (1, cols) bias row to every row of x."""
    if b.value.shape != (1, x.value.shape[1]):
        raise ValueError(f"bias shape {b.value.shape} does not fit {x.value.shape}")
    out = Node(x.value + b.value, (x, b))

    def backward(g):
        x.grad += g
        b.grad += g.sum(axis=0, keepdims=True)

    out._backward = backward
    return out


def relu(x: Node) -> Node:
    mask = x.value > 0.0
    out = Node(np.where(mask, x.value, 0.0), (x,))

    def backward(g):
        x.grad += g * mask

    out._backward = backward
    return out


def add(a: Node, b: Node) -> Node:
    if a.value.shape != b.value.shape:
        raise ValueError(f"add shape mismatch: {a.value.shape} vs {b.value.shape}")
    out = Node(a.value + b.value, (a, b))

    def backward(g):
        a.grad += g
        b.grad += g

    out._backward = backward
    return out


def scale(x: Node, factor: float) -> Node:
    out = Node(x.value * factor, (x,))

    def backward(g):
        x.grad += g * factor

    out._backward = backward
    return out


def concat_cols(a: Node, b: Node) -> Node:
    if a.value.shape[0] != b.value.shape[0]:
        raise ValueError("concat_cols needs equal row counts")
    ca = a.value.shape[1]
    out = Node(np.concatenate([a.value, b.value], axis=1), (a, b))

    def backward(g):
        a.grad += g[:, :ca]
        b.grad += g[:, ca:]

    out._backward = backward
    return out


def gather_rows(x: Node, index: np.ndarray) -> Node:
    index = np.asarray(index, dtype=np.intp)
    out = Node(x.value[index], (x,))

    def backward(g):
        np.add.at(x.grad, index, g)

    out._backward = backward
    return out


def l2_normalize_rows(x: Node, epsilon: float = 1e-12) -> Node:
    """Scale each row to unit Euclidean norm.

    The epsilon guard under the square root keeps gradients finite near
    zero rows; with epsilon=0 a zero row is rejected instead.
    """
    sq = (x.value * x.value).sum(axis=1, keepdims=True)
    if epsilon == 0.0 and np.any(sq == 0.0):
        raise ValueError("cannot l2-normalize a zero row without an epsilon guard")
    r = np.sqrt(sq + epsilon)
    y = x.value / r
    out = Node(y, (x,))

    def backward(g):
        dot = (g * x.value).sum(axis=1, keepdims=True)
        x.grad += g / r - x.value * (dot / (r * r * r))

    out._backward = backward
    return out


def log_softmax(values: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = values / temperature
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(values: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    return np.exp(log_softmax(values, temperature))


def softmax_ce(logits: Node, targets: np.ndarray, temperature: float) -> Node:
    """Mean cross-entropy of a temperature softmax against fixed soft targets.

    Gradient w.r.t. the logits is (softmax(logits/t) - target) / (t * rows);
    targets are plain arrays and receive none (stop-gradient contract).
    """
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.value.shape:
        raise ValueError(f"target shape {t.shape} != logits shape {logits.value.shape}")
    n = t.shape[0]
    if n == 0:
        raise ValueError("softmax_ce needs at least one row")
    row_sums = t.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > 1e-6:
        raise ValueError("each target row must sum to 1")
    logp = log_softmax(logits.value, temperature)
    loss = -(t * logp).sum() / n
    p = np.exp(logp)
    out = Node(np.asarray(loss, dtype=np.float64), (logits,))

    def backward(g):
        logits.grad += (float(g) / (temperature * n)) * (p - t)

    out._backward = backward
    return out


def _toposort(root: Node) -> list[Node]:
    order: list[Node] = []
    seen = {id(root)}
    stack: list[tuple[Node, iter]] = [(root, iter(root.parents))]
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p.parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def backward(root: Node) -> None:
    """Accumulate gradients of ``root`` into every node of its graph."""
    order = _toposort(root)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# Optimizer


def scheduled_lr(
    step: int, base_lr: float, min_lr: float, warmup_steps: int, total_steps: int
) -> float:
    """Linear warmup 0 -> base_lr over warmup_steps, then cosine to min_lr.

    At step == warmup_steps the rate is exactly base_lr; past total_steps it
    clamps at min_lr.
    """
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    if step >= total_steps:
        return min_lr
    span = max(total_steps - warmup_steps, 1)
    progress = (step - warmup_steps) / span
    return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class SGDMomentum:
    """SGD with momentum, weight decay and a warmup+cosine learning rate.

    One momentum buffer per parameter. The momentum coefficient default of
    0.9 is a conventional choice recorded here, not a quoted setting.
    """

    params: list[Node]
    base_lr: float = 0.1
    min_lr: float = 0.001
    weight_decay: float = 1e-4
    momentum: float = 0.9
    warmup_steps: int = 0
    total_steps: int = 1
    buffers: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.buffers:
            self.buffers = [np.zeros_like(p.value) for p in self.params]
        if len(self.buffers) != len(self.params):
            raise ValueError("need exactly one momentum buffer per parameter")
        for p, b in zip(self.params, self.buffers):
            if p.value.shape != b.shape:
                raise ValueError("momentum buffer shape mismatch")

    def lr_at(self, step: int) -> float:
        return scheduled_lr(
            step, self.base_lr, self.min_lr, self.warmup_steps, self.total_steps
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    def step(self, step_index: int) -> float:
        """Apply one update using the schedule's rate at ``step_index``."""
        lr = self.lr_at(step_index)
        for p, buf in zip(self.params, self.buffers):
            d = p.grad + self.weight_decay * p.value
            buf *= self.momentum
            buf += d
            p.value -= lr * buf
        return lr
