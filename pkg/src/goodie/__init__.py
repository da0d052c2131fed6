"""Label propagation + feature propagation hybrid for graphs with missing
node features, with the baselines and protocols used to evaluate it."""

from .data import Dataset, SyntheticSpec, generate_synthetic, load_dataset
from .graph import Graph, NormalizedAdjacency, build_graph, normalize_sym, spmm
from .masking import LabelTable, MaskedFeatures, make_splits, mask_features, mask_structural, mask_uniform
from .model import GoodieConfig, GoodieModel
from .propagation import FPResult, LPResult, feature_propagate, label_propagate
from .training import train_loop

__all__ = [
    "Dataset", "FPResult", "Graph", "GoodieConfig", "GoodieModel", "LPResult", "LabelTable",
    "MaskedFeatures", "NormalizedAdjacency", "SyntheticSpec", "build_graph", "feature_propagate",
    "generate_synthetic", "label_propagate", "load_dataset", "make_splits", "mask_features",
    "mask_structural", "mask_uniform", "normalize_sym", "spmm", "train_loop",
]
__version__ = "0.1.0"
