"""ncdlab: a desk-scale laboratory for novel class discovery.

One cross-entropy over the concatenated known-class / latent-cluster output
space, balanced optimal-transport pseudo-labels from two augmented views,
multi-head clustering and overclustering, and Hungarian-matched evaluation
under task-aware and task-agnostic protocols.
"""

from .config import ExperimentConfig
from .data import AugmentPolicy, Dataset, make_gaussian_ncd, two_views
from .model import DiscoveryNet, ModelConfig
from .objective import ObjectiveConfig, total_loss
from .trainer import TrainConfig, discover, pretrain

__version__ = "0.1.0"

__all__ = [
    "AugmentPolicy",
    "Dataset",
    "DiscoveryNet",
    "ExperimentConfig",
    "ModelConfig",
    "ObjectiveConfig",
    "TrainConfig",
    "discover",
    "make_gaussian_ncd",
    "pretrain",
    "total_loss",
    "two_views",
    "__version__",
]
