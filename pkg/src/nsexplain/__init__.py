"""Graph neural network explanation by necessity/sufficiency mask optimization.

Trains small graph convolutional networks and explains individual predictions
by optimizing a lower bound on the probability that an edge/feature subset is
both necessary and sufficient for the predicted class.
"""

from .backend import backend_name
from .graphs import Instance, SparseGraph, build_instance, khop_subgraph
from .masks import MaskPair, apply_masks
from .model import GcnParams, forward, init_params, load_params, save_params

__version__ = "0.1.0"

__all__ = [
    "Instance",
    "SparseGraph",
    "build_instance",
    "khop_subgraph",
    "MaskPair",
    "apply_masks",
    "GcnParams",
    "forward",
    "init_params",
    "load_params",
    "save_params",
    "backend_name",
    "__version__",
]
