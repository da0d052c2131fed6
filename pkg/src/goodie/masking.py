"""Missing-feature scenarios and the semi-supervised split protocol."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCENARIOS = ("uniform", "structural")


class MaskingError(ValueError):
    pass


@dataclass(frozen=True)
class MaskedFeatures:
    values: np.ndarray  # N x F, exactly 0 where unobserved
    observed: np.ndarray  # N x F bool
    scenario: str
    missing_rate: float
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class LabelTable:
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    y0: np.ndarray
    n_classes: int

    @property
    def n_nodes(self) -> int:
        return int(self.labels.shape[0])

    def train_mask(self) -> np.ndarray:
        m = np.zeros(self.n_nodes, dtype=bool)
        m[self.train_idx] = True
        return m

    def splits_dict(self) -> dict[str, list[int]]:
        return {
            "train": [int(i) for i in self.train_idx],
            "val": [int(i) for i in self.val_idx],
            "test": [int(i) for i in self.test_idx],
        }


def _check_rate(mr: float) -> float:
    mr = float(mr)
    if not 0.0 <= mr <= 1.0:
        raise MaskingError(f"missing rate must lie in [0, 1], got {mr}")
    return mr


def _finish(x: np.ndarray, drop: np.ndarray, scenario: str, mr: float, seed: int) -> MaskedFeatures:
    # NaN entries in the input count as pre-masked, on top of the sampled ones.
    observed = ~drop & ~np.isnan(x)
    values = np.where(observed, x, 0.0)
    values.setflags(write=False)
    observed.setflags(write=False)
    return MaskedFeatures(values, observed, scenario, mr, seed)


def mask_uniform(x, mr: float, seed: int) -> MaskedFeatures:
    """Mask exactly ``round(mr * N * F)`` entries sampled without replacement."""
    mr = _check_rate(mr)
    x = np.asarray(x, dtype=np.float64)
    n, f = x.shape
    k = int(round(mr * n * f))
    rng = np.random.default_rng(seed)
    drop = np.zeros(n * f, dtype=bool)
    drop[rng.choice(n * f, size=k, replace=False)] = True
    return _finish(x, drop.reshape(n, f), "uniform", mr, seed)


def mask_structural(x, mr: float, seed: int) -> MaskedFeatures:
    """Mask the whole feature row of exactly ``round(mr * N)`` nodes."""
    mr = _check_rate(mr)
    x = np.asarray(x, dtype=np.float64)
    n, f = x.shape
    k = int(round(mr * n))
    rng = np.random.default_rng(seed)
    drop = np.zeros((n, f), dtype=bool)
    drop[rng.choice(n, size=k, replace=False)] = True
    return _finish(x, drop, "structural", mr, seed)


def mask_features(x, scenario: str, mr: float, seed: int) -> MaskedFeatures:
    if scenario == "uniform":
        return mask_uniform(x, mr, seed)
    if scenario == "structural":
        return mask_structural(x, mr, seed)
    raise MaskingError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


def one_hot_train(labels: np.ndarray, train_idx: np.ndarray, n_classes: int) -> np.ndarray:
    y0 = np.zeros((labels.shape[0], n_classes))
    y0[train_idx, labels[train_idx]] = 1.0
    return y0


def make_splits(labels, per_class_train: int = 20, n_val: int = 1500, seed: int = 0,
                n_classes: int | None = None) -> LabelTable:
    """Sample ``per_class_train`` train nodes per class, then ``n_val`` validation
    nodes from the remainder; everything left over is test."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise MaskingError("labels must be a non-empty 1-D sequence")
    if labels.min() < 0:
        raise MaskingError("class ids must be non-negative")
    n_classes = int(labels.max()) + 1 if n_classes is None else int(n_classes)
    rng = np.random.default_rng(seed)

    train = []
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        if members.size < per_class_train:
            raise MaskingError(
                f"class {c} has {members.size} nodes, needs {per_class_train} for training"
            )
        train.append(rng.choice(members, size=per_class_train, replace=False))
    train_idx = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)

    rest = np.setdiff1d(np.arange(labels.size), train_idx)
    if n_val > rest.size:
        raise MaskingError(f"n_val={n_val} exceeds the {rest.size} non-train nodes")
    val_idx = np.sort(rng.choice(rest, size=n_val, replace=False))
    test_idx = np.setdiff1d(rest, val_idx)

    return LabelTable(
        labels=labels,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
        y0=one_hot_train(labels, train_idx, n_classes),
        n_classes=n_classes,
    )


def save_splits(table: LabelTable, path) -> None:
    Path(path).write_text(json.dumps(table.splits_dict()), encoding="utf-8")


def load_splits(labels, path, n_classes: int | None = None) -> LabelTable:
    labels = np.asarray(labels, dtype=np.int64)
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    idx = {k: np.asarray(d[k], dtype=np.int64) for k in ("train", "val", "test")}
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    return LabelTable(labels, idx["train"], idx["val"], idx["test"],
                      one_hot_train(labels, idx["train"], n_classes), n_classes)


def load_features_csv(path) -> np.ndarray:
    """One row per node; ``nan`` tokens mark entries missing at the source."""
    x = np.genfromtxt(path, delimiter=",", dtype=np.float64, missing_values="nan",
                      filling_values=np.nan)
    return np.atleast_2d(x)


def load_labels(path, n_nodes: int | None = None) -> np.ndarray:
    pairs = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MaskingError(f"{path}:{lineno}: expected 'node_id<TAB>class_id'")
        pairs[int(parts[0])] = int(parts[1])
    n = n_nodes if n_nodes is not None else 1 + max(pairs, default=-1)
    labels = np.full(n, -1, dtype=np.int64)
    for node, c in pairs.items():
        labels[node] = c
    if (labels < 0).any():
        raise MaskingError(f"{path}: {int((labels < 0).sum())} nodes have no label")
    return labels
