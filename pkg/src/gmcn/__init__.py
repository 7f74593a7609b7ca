"""Graph mask convolutional networks with numpy/scipy and hand-written gradients."""
from .errors import ConfigError, GmcnError, NumericError, ParseError, ValidationError
from .graph import SparseAdjacency, compute_degrees, normalize_adjacency, perturb_graph
from .mask import MaskSolverConfig, solve_mask
from .propagation import PropagationConfig, gcn_forward, gmc_backward, gmc_forward
from .training import GraphDataset, ModelSpec, SplitSpec, make_splits, repeat_runs, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "GmcnError",
    "GraphDataset",
    "MaskSolverConfig",
    "ModelSpec",
    "NumericError",
    "ParseError",
    "PropagationConfig",
    "SparseAdjacency",
    "SplitSpec",
    "ValidationError",
    "compute_degrees",
    "gcn_forward",
    "gmc_backward",
    "gmc_forward",
    "make_splits",
    "normalize_adjacency",
    "perturb_graph",
    "repeat_runs",
    "solve_mask",
    "train",
]
