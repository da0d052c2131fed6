"""Synthetic stochastic-block-model graphs and local dataset ingestion."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph, load_edge_list, save_edge_list
from .masking import load_features_csv, load_labels

EDGES_FILE = "edges.tsv"
FEATURES_FILE = "features.csv"
LABELS_FILE = "labels.tsv"


@dataclass(frozen=True)
class SyntheticSpec:
    n_nodes: int = 400
    n_classes: int = 4
    feature_dim: int = 32
    p_intra: float = 0.05
    p_inter: float = 0.005
    signal: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.p_intra <= self.p_inter:
            raise ValueError("p_intra must exceed p_inter for a homophilous graph")
        if self.n_classes < 1 or self.n_nodes < self.n_classes:
            raise ValueError("need at least one node per class")


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    name: str = "synthetic"

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> Dataset:
    """Balanced SBM; features are a per-class Gaussian mean (scaled by
    ``signal``) plus unit Gaussian noise."""
    rng = np.random.default_rng(spec.seed)
    n, c = spec.n_nodes, spec.n_classes
    labels = rng.permutation(np.arange(n) % c)

    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], spec.p_intra, spec.p_inter)
    hit = rng.random(iu.size) < prob
    graph = build_graph(np.stack([iu[hit], ju[hit]], axis=1), n)

    means = rng.normal(size=(c, spec.feature_dim)) * spec.signal
    features = means[labels] + rng.normal(size=(n, spec.feature_dim))
    return Dataset(graph, features, labels, name=f"sbm-{n}x{c}-s{spec.seed}")


def load_dataset(directory) -> Dataset:
    """Read ``edges.tsv``, ``features.csv`` and ``labels.tsv`` from a directory."""
    d = Path(directory)
    features = load_features_csv(d / FEATURES_FILE)
    n = features.shape[0]
    return Dataset(
        graph=load_edge_list(d / EDGES_FILE, n_nodes=n),
        features=features,
        labels=load_labels(d / LABELS_FILE, n_nodes=n),
        name=d.name,
    )


def save_dataset(ds: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_edge_list(ds.graph, d / EDGES_FILE)
    np.savetxt(d / FEATURES_FILE, ds.features, delimiter=",", fmt="%.17g")
    lines = [f"{i}\t{int(c)}" for i, c in enumerate(ds.labels)]
    (d / LABELS_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
