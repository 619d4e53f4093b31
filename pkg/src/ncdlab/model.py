"""The discovery network: shared encoder, one labeled head, n clustering and
n overclustering heads, all emitting cosine logits from l2-normalized
features and prototypes.

Logits are concatenated [labeled, unlabeled] so class index c < Cl is
labeled class c and index >= Cl is latent cluster c - Cl. Overclustering
heads exist only for training; evaluation ignores them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from . import numgrad as ng

CHECKPOINT_FORMAT = 1


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    encoder_hidden: tuple[int, ...] = (64,)
    feature_dim: int = 16
    num_labeled: int = 4
    num_unlabeled: int = 4
    overcluster_factor: int = 3
    num_heads: int = 4
    projection_hidden: int = 64
    projection_out: int = 32
    temperature: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "encoder_hidden", tuple(self.encoder_hidden))
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.num_heads < 1 or self.overcluster_factor < 1:
            raise ValueError("need num_heads >= 1 and overcluster_factor >= 1")
        for name in ("input_dim", "feature_dim", "num_labeled", "num_unlabeled",
                     "projection_hidden", "projection_out"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def num_overcluster(self) -> int:
        return self.num_unlabeled * self.overcluster_factor

    @property
    def num_classes(self) -> int:
        return self.num_labeled + self.num_unlabeled


@dataclass
class LogitsBundle:
    """Per-view logits of every head, sharing one batch dimension."""

    labeled: ng.Node                 # (batch, Cl)
    clustering: list[ng.Node]        # each (batch, Cu)
    overclustering: list[ng.Node]    # each (batch, K)

    def head(self, kind: str, index: int) -> ng.Node:
        heads = {"clustering": self.clustering, "overclustering": self.overclustering}
        if kind not in heads:
            raise ValueError(f"unknown head kind {kind!r}")
        if not 0 <= index < len(heads[kind]):
            raise IndexError(f"{kind} head index {index} out of range")
        return heads[kind][index]


def _uniform_init(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(rows)
    return rng.uniform(-bound, bound, size=(rows, cols))


class DiscoveryNet:
    """Holds the parameter nodes; forward passes for any number of views share
    these same node objects, so gradients from all views accumulate in place."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        self.config = config
        self._params: dict[str, ng.Node] = {}
        if rng is None:
            rng = np.random.default_rng(0)

        dims = [config.input_dim, *config.encoder_hidden, config.feature_dim]
        for i in range(len(dims) - 1):
            self._add(f"encoder.w{i}", _uniform_init(rng, dims[i], dims[i + 1]))
            self._add(f"encoder.b{i}", np.zeros((1, dims[i + 1])))

        self._add("labeled.prototypes",
                  _uniform_init(rng, config.num_labeled, config.feature_dim))

        for kind, width in (("clustering", config.num_unlabeled),
                            ("overclustering", config.num_overcluster)):
            for h in range(config.num_heads):
                p = f"{kind}{h}"
                self._add(f"{p}.w1", _uniform_init(rng, config.feature_dim,
                                                   config.projection_hidden))
                self._add(f"{p}.b1", np.zeros((1, config.projection_hidden)))
                self._add(f"{p}.w2", _uniform_init(rng, config.projection_hidden,
                                                   config.projection_out))
                self._add(f"{p}.b2", np.zeros((1, config.projection_out)))
                self._add(f"{p}.prototypes",
                          _uniform_init(rng, width, config.projection_out))

    def _add(self, name: str, values: np.ndarray) -> None:
        self._params[name] = ng.parameter(values)

    # -- parameter access ---------------------------------------------------

    def parameters(self, scope: str = "all") -> list[ng.Node]:
        """scope: 'all', 'pretrain' (encoder + labeled head), or a head prefix."""
        if scope == "all":
            return list(self._params.values())
        if scope == "pretrain":
            return [n for k, n in self._params.items()
                    if k.startswith(("encoder.", "labeled."))]
        return [n for k, n in self._params.items() if k.startswith(scope)]

    def named_parameters(self) -> dict[str, ng.Node]:
        return dict(self._params)

    def param(self, name: str) -> ng.Node:
        return self._params[name]

    def copy(self) -> "DiscoveryNet":
        dup = DiscoveryNet.__new__(DiscoveryNet)
        dup.config = self.config
        dup._params = {k: ng.parameter(v.value) for k, v in self._params.items()}
        return dup

    # -- forward ------------------------------------------------------------

    def encode(self, x: np.ndarray) -> ng.Node:
        """Map a (batch, input_dim) batch to unit-norm feature rows."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(
                f"expected batch of width {self.config.input_dim}, got {x.shape}"
            )
        h = ng.constant(x)
        n_layers = len(self.config.encoder_hidden) + 1
        for i in range(n_layers):
            h = ng.add_bias(ng.matmul(h, self._params[f"encoder.w{i}"]),
                            self._params[f"encoder.b{i}"])
            if i < n_layers - 1:
                h = ng.relu(h)
        return ng.l2_normalize_rows(h)

    def _cosine_logits(self, feats: ng.Node, prototypes: ng.Node) -> ng.Node:
        return ng.matmul(feats, ng.transpose(ng.l2_normalize_rows(prototypes)))

    def _head_logits(self, z: ng.Node, prefix: str) -> ng.Node:
        t = ng.relu(ng.add_bias(ng.matmul(z, self._params[f"{prefix}.w1"]),
                                self._params[f"{prefix}.b1"]))
        zp = ng.add_bias(ng.matmul(t, self._params[f"{prefix}.w2"]),
                         self._params[f"{prefix}.b2"])
        return self._cosine_logits(ng.l2_normalize_rows(zp),
                                   self._params[f"{prefix}.prototypes"])

    def forward(self, x: np.ndarray) -> LogitsBundle:
        z = self.encode(x)
        cfg = self.config
        return LogitsBundle(
            labeled=self._cosine_logits(z, self._params["labeled.prototypes"]),
            clustering=[self._head_logits(z, f"clustering{h}")
                        for h in range(cfg.num_heads)],
            overclustering=[self._head_logits(z, f"overclustering{h}")
                            for h in range(cfg.num_heads)],
        )

    def unified_posterior(self, bundle: LogitsBundle, head_index: int,
                          head_kind: str = "clustering") -> np.ndarray:
        """Row softmax over [labeled | selected head] logits at the model temperature."""
        head = bundle.head(head_kind, head_index)
        joint = np.concatenate([bundle.labeled.value, head.value], axis=1)
        return ng.softmax(joint, self.config.temperature)

    # -- checkpointing ------------------------------------------------------

    def save(self, path, extras: dict | None = None) -> None:
        """Bit-exact, versioned serialization of config + named parameters."""
        payload = {
            "format_version": np.int64(CHECKPOINT_FORMAT),
            "config_json": np.array(json.dumps(asdict(self.config))),
        }
        for name, node in self._params.items():
            payload[f"param::{name}"] = node.value
        for key, val in (extras or {}).items():
            payload[f"extra::{key}"] = np.asarray(val)
        np.savez(path, **payload)

    @classmethod
    def load(cls, path) -> tuple["DiscoveryNet", dict]:
        with np.load(path, allow_pickle=False) as archive:
            version = int(archive["format_version"])
            if version != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {version}")
            raw = json.loads(str(archive["config_json"]))
            raw["encoder_hidden"] = tuple(raw["encoder_hidden"])
            config = ModelConfig(**raw)
            net = cls(config)
            extras = {}
            seen = set()
            for key in archive.files:
                if key.startswith("param::"):
                    name = key[len("param::"):]
                    if name not in net._params:
                        raise ValueError(f"unknown parameter {name!r} in checkpoint")
                    if archive[key].shape != net._params[name].value.shape:
                        raise ValueError(f"shape mismatch for parameter {name!r}")
                    net._params[name] = ng.parameter(archive[key])
                    seen.add(name)
                elif key.startswith("extra::"):
                    extras[key[len("extra::"):]] = archive[key]
            missing = set(net._params) - seen
            if missing:
                raise ValueError(f"checkpoint missing parameters: {sorted(missing)}")
        return net, extras
