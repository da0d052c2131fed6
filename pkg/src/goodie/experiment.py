"""Experiment cells: one (method, scenario, missing rate, seed) run each."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import GCN, BaselineKind, baseline_features
from .data import Dataset, SyntheticSpec, generate_synthetic, load_dataset
from .graph import normalize_sym
from .linkpred import GCNEncoder, GoodieEncoder, LinkModel, link_split
from .masking import LabelTable, make_splits, mask_features
from .metrics import accuracy
from .model import GoodieConfig, GoodieModel
from .propagation import feature_propagate, label_propagate
from .training import RunResult, node_validator, predict, train_loop

METHODS = ("goodie", "lp", "gcn-zero", "gcn-nm", "fp-gcn")
TASKS = ("node", "link")
DEFAULT_MR_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 0.999, 0.9999, 1.0)
PROTOCOL_N_VAL = 1500

_BASELINE = {
    "lp": BaselineKind.LP_ONLY,
    "gcn-zero": BaselineKind.GCN_ZERO,
    "gcn-nm": BaselineKind.GCN_NM,
    "fp-gcn": BaselineKind.FP_GCN,
}


def canonical_method(name: str) -> str:
    m = name.strip().lower().replace("_", "-")
    m = {"lp-only": "lp", "gcn": "gcn-zero"}.get(m, m)
    if m not in METHODS:
        raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
    return m


@dataclass
class ExperimentConfig:
    dataset: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    task: str = "node"
    scenario: str = "structural"
    mr_grid: tuple[float, ...] = DEFAULT_MR_GRID
    methods: tuple[str, ...] = ("goodie",)
    seeds: tuple[int, ...] = tuple(range(10))
    per_class_train: int = 20
    n_val: int | None = None
    goodie: GoodieConfig = field(default_factory=GoodieConfig)
    out: str | None = None
    format: str = "csv"
    record_time: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        for mr in self.mr_grid:
            if not 0.0 <= mr <= 1.0:
                raise ValueError(f"missing rate {mr} outside [0, 1]")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        self.methods = tuple(canonical_method(m) for m in self.methods)

    def load_data(self) -> Dataset:
        return load_dataset(self.dataset) if self.dataset else generate_synthetic(self.synthetic)


def derive_seeds(seed: int) -> dict[str, int]:
    names = ("mask", "split", "init", "train", "link")
    states = np.random.SeedSequence(seed).generate_state(len(names))
    return {k: int(v) for k, v in zip(names, states)}


def resolve_n_val(n_val: int | None, n_nodes: int, n_train: int) -> int:
    """``None`` means the 1500-node protocol whenever at least 500 test nodes
    remain; smaller graphs split the non-train nodes evenly."""
    if n_val is not None:
        return n_val
    rest = n_nodes - n_train
    if rest >= PROTOCOL_N_VAL + 500:
        return PROTOCOL_N_VAL
    return rest // 2


def make_label_table(data: Dataset, cfg: ExperimentConfig, seed: int) -> LabelTable:
    n_train = cfg.per_class_train * data.n_classes
    n_val = resolve_n_val(cfg.n_val, data.graph.n_nodes, n_train)
    return make_splits(data.labels, cfg.per_class_train, n_val, seed, n_classes=data.n_classes)


def run_cell(data: Dataset, method: str, scenario: str, mr: float, seed: int,
             cfg: ExperimentConfig) -> RunResult:
    method = canonical_method(method)
    start = time.perf_counter()
    if cfg.task == "link":
        result = _run_link(data, method, scenario, mr, seed, cfg)
    else:
        result = _run_node(data, method, scenario, mr, seed, cfg)
    if cfg.record_time:
        result.seconds = time.perf_counter() - start
    return result


def _run_node(data, method, scenario, mr, seed, cfg) -> RunResult:
    s = derive_seeds(seed)
    g = cfg.goodie
    feats = mask_features(data.features, scenario, mr, s["mask"])
    labels = make_label_table(data, cfg, s["split"])
    adj = normalize_sym(data.graph)
    res = RunResult(method=method, scenario=scenario, mr=float(mr), seed=int(seed))

    if method == "lp":
        lp = label_propagate(adj, labels, g.alpha, g.k_lp, g.tau)
        pred = lp.pseudo_labels
        res.val_acc = accuracy(pred, labels.labels, labels.val_idx) if labels.val_idx.size else None
        res.test_acc = accuracy(pred, labels.labels, labels.test_idx)
        return res

    if method == "goodie":
        lp = label_propagate(adj, labels, g.alpha, g.k_lp, g.tau)
        fp = feature_propagate(adj, feats, g.k_fp)
        model = GoodieModel(adj, lp, fp, labels, g, seed=s["init"])
    else:
        x = baseline_features(_BASELINE[method], data.graph, adj, feats, g.k_fp)
        model = GCN(adj, x, labels, hidden=g.hidden, dropout=g.dropout, seed=s["init"])

    outcome = train_loop(model, node_validator(model, labels), lr=g.lr, patience=g.patience,
                         max_epochs=g.max_epochs, seed=s["train"])
    pred = predict(model)
    res.test_acc = accuracy(pred, labels.labels, labels.test_idx)
    res.val_acc = outcome.best_score if labels.val_idx.size else None
    res.epochs = outcome.epochs
    res.best_epoch = outcome.best_epoch
    res.history = outcome.history
    out = model.forward(training=False)
    if out.alpha_lp is not None:
        res.alpha_lp_mean = float(np.mean(out.alpha_lp))
        res.alpha_fp_mean = float(np.mean(out.alpha_fp))
    return res


def _run_link(data, method, scenario, mr, seed, cfg) -> RunResult:
    if method == "lp":
        raise ValueError("label propagation has no link-prediction encoder")
    s = derive_seeds(seed)
    g = cfg.goodie
    # Features are masked once, before the edges are split.
    feats = mask_features(data.features, scenario, mr, s["mask"])
    split = link_split(data.graph, 0.10, 0.05, s["link"])
    adj = normalize_sym(split.train_graph)
    labels = make_label_table(data, cfg, s["split"])

    if method == "goodie":
        lp = label_propagate(adj, labels, g.alpha, g.k_lp, g.tau)
        fp = feature_propagate(adj, feats, g.k_fp)
        encoder = GoodieEncoder(adj, lp, fp, labels, g, seed=s["init"])
        lam = g.lam
    else:
        x = baseline_features(_BASELINE[method], split.train_graph, adj, feats, g.k_fp)
        encoder = GCNEncoder(adj, x, seed=s["init"])
        lam = 0.0
    model = LinkModel(encoder, split, lam=lam)
    outcome = train_loop(model, model.validator(), lr=g.lr, patience=g.patience,
                         max_epochs=g.max_epochs, seed=s["train"])
    auc, ap = model.evaluate(split.test_pos, split.test_neg)
    res = RunResult(method=method, scenario=scenario, mr=float(mr), seed=int(seed),
                    epochs=outcome.epochs, best_epoch=outcome.best_epoch, auc=auc, ap=ap,
                    history=outcome.history)
    model.embeddings()
    if encoder.alpha_lp is not None:
        res.alpha_lp_mean = float(np.mean(encoder.alpha_lp))
        res.alpha_fp_mean = float(np.mean(encoder.alpha_fp))
    return res


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
