"""Comparison methods: plain label propagation and 2-layer GCNs fed with
zero-, neighbour-mean- or FP-imputed features."""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import autodiff as ad
from .graph import Graph, NormalizedAdjacency
from .masking import LabelTable, MaskedFeatures
from .model import Forward
from .propagation import DEFAULT_K_LP, feature_propagate, label_propagate


class BaselineKind(str, Enum):
    LP_ONLY = "lp_only"
    GCN_ZERO = "gcn_zero"
    GCN_NM = "gcn_nm"
    FP_GCN = "fp_gcn"


def lp_only_predict(adj: NormalizedAdjacency, labels: LabelTable, alpha: float = 0.99,
                    k: int = DEFAULT_K_LP) -> np.ndarray:
    # Clamping keeps train rows one-hot, so train nodes predict their own label.
    return label_propagate(adj, labels, alpha, k).pseudo_labels


def neighbor_mean_impute(graph: Graph, feats: MaskedFeatures) -> np.ndarray:
    """Fill each unknown entry with the mean of the neighbours that observe
    that channel (0 when none do). Observed entries are left untouched."""
    obs = feats.observed.astype(np.float64)
    sums = graph.csr @ (feats.values * obs)
    counts = graph.csr @ obs
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return np.where(feats.observed, feats.values, means)


def baseline_features(kind: BaselineKind | str, graph: Graph, adj: NormalizedAdjacency,
                      feats: MaskedFeatures, k_fp: int = 40) -> np.ndarray:
    kind = BaselineKind(kind)
    if kind is BaselineKind.GCN_ZERO:
        return np.array(feats.values)
    if kind is BaselineKind.GCN_NM:
        return neighbor_mean_impute(graph, feats)
    if kind is BaselineKind.FP_GCN:
        return np.array(feature_propagate(adj, feats, k_fp).x_hat)
    raise ValueError(f"{kind.value} is not a feature-based baseline")


class GCN:
    """Two GCN layers, ReLU and dropout in between; no bias terms."""

    def __init__(self, adj: NormalizedAdjacency, features: np.ndarray, labels: LabelTable,
                 hidden: int = 64, dropout: float = 0.5, seed: int = 0, out_dim: int | None = None):
        self.adj = adj
        self.labels = labels
        self.dropout = dropout
        rng = np.random.default_rng(seed)
        self.w1 = ad.glorot_uniform(features.shape[1], hidden, rng, "w1")
        self.w2 = ad.glorot_uniform(hidden, out_dim or labels.n_classes, rng, "w2")
        self._ax = adj.csr @ np.asarray(features, dtype=np.float64)

    @property
    def tensors(self):
        return [self.w1, self.w2]

    def named_tensors(self):
        return {"w1": self.w1, "w2": self.w2}

    def embed(self, training: bool = False, rng=None) -> ad.Tensor:
        h = ad.relu(ad.matmul(ad.constant(self._ax), self.w1))
        h = ad.dropout(h, self.dropout, training, rng)
        return ad.spmm_fixed(self.adj, ad.matmul(h, self.w2))

    def forward(self, training: bool = False, rng=None) -> Forward:
        out = self.embed(training, rng)
        return Forward(out, out, None, None)

    def loss(self, out: Forward, subset=None):
        subset = self.labels.train_idx if subset is None else subset
        ce = ad.masked_cross_entropy(out.logits, self.labels.labels, subset)
        return ce, ce, None

    def training_loss(self, rng) -> ad.Tensor:
        return self.loss(self.forward(True, rng))[0]
