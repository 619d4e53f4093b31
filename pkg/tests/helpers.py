"""Shared test utilities: finite-difference oracles and a frozen-target copy
of the unified loss (the stop-gradient contract makes pseudo-labels constants
of the differentiated function)."""

import numpy as np

from ncdlab import numgrad as ng
from ncdlab import objective as obj

FD_EPS = 1e-5
FD_TOL = 1e-4


def freeze_targets(model, pair, cfg):
    """Precompute the padded target matrices per head for the current params."""
    bundle1 = model.forward(pair.v1)
    bundle2 = model.forward(pair.v2)
    unl = ~pair.labeled_mask
    targets = {}
    kinds = ["clustering"] + (["overclustering"] if cfg.use_overclustering else [])
    for kind in kinds:
        for i in range(model.config.num_heads):
            h1 = bundle1.head(kind, i).value[unl]
            h2 = bundle2.head(kind, i).value[unl]
            if cfg.aggregation == "swap":
                p1, p2 = obj.pseudo_labels(h2, cfg), obj.pseudo_labels(h1, cfg)
            elif cfg.aggregation == "avg_pseudo":
                p1 = p2 = 0.5 * (obj.pseudo_labels(h1, cfg) + obj.pseudo_labels(h2, cfg))
            else:
                p1 = p2 = obj.pseudo_labels(0.5 * (h1 + h2), cfg)
            width = h1.shape[1]
            labeled_width = model.config.num_labeled
            targets[(kind, i)] = (
                obj._joint_targets(pair, p1, labeled_width, width),
                obj._joint_targets(pair, p2, labeled_width, width),
            )
    return targets


def frozen_total_loss(model, pair, targets):
    """The unified loss with every target held constant."""
    bundle1 = model.forward(pair.v1)
    bundle2 = model.forward(pair.v2)
    tau = model.config.temperature
    losses = []
    for (kind, i), (t1, t2) in targets.items():
        h1, h2 = bundle1.head(kind, i), bundle2.head(kind, i)
        losses.append(ng.add(
            ng.softmax_ce(ng.concat_cols(bundle1.labeled, h1), t1, tau),
            ng.softmax_ce(ng.concat_cols(bundle2.labeled, h2), t2, tau),
        ))
    node = losses[0]
    for extra in losses[1:]:
        node = ng.add(node, extra)
    return ng.scale(node, 1.0 / len(losses))


def fd_gradient_against(value_fn, node):
    """Central finite differences of scalar ``value_fn()`` w.r.t. node.value."""
    flat = node.value.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + FD_EPS
        hi = value_fn()
        flat[i] = orig - FD_EPS
        lo = value_fn()
        flat[i] = orig
        numeric[i] = (hi - lo) / (2 * FD_EPS)
    return numeric.reshape(node.value.shape)


def max_rel_error(analytic, numeric):
    scale = np.maximum(np.abs(numeric), 1.0)
    return float((np.abs(analytic - numeric) / scale).max())
