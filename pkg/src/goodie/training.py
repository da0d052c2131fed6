"""Full-batch training with Adam and validation-based early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .masking import LabelTable
from .metrics import accuracy

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "method", "scenario", "mr", "seed", "test_acc", "val_acc", "epochs",
    "alpha_lp_mean", "alpha_fp_mean", "auc", "ap", "seconds",
)


class TrainingError(RuntimeError):
    pass


@dataclass
class RunResult:
    method: str
    scenario: str
    mr: float
    seed: int
    test_acc: float | None = None
    val_acc: float | None = None
    epochs: int = 0
    best_epoch: int = 0
    alpha_lp_mean: float | None = None
    alpha_fp_mean: float | None = None
    auc: float | None = None
    ap: float | None = None
    seconds: float | None = None
    history: dict[str, list[float]] = field(default_factory=dict)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


@dataclass
class TrainOutcome:
    epochs: int
    best_epoch: int
    best_score: float
    history: dict[str, list[float]]


def train_loop(model, validate: Callable[[], dict], *, lr: float = 0.005, patience: int = 200,
               max_epochs: int = 10000, seed: int = 0) -> TrainOutcome:
    """Train ``model`` until validation stops improving.

    ``model`` provides ``tensors`` and ``training_loss(rng)``; ``validate``
    returns a dict with ``val_score`` (higher is better) plus anything else to
    log. The parameters of the best-scoring epoch are restored at the end.
    Epochs are 1-based; a run stops once ``patience`` consecutive epochs fail
    to improve strictly on the best score.
    """
    params = model.tensors
    state = ad.AdamState(lr=lr)
    rng = np.random.default_rng(seed)
    history: dict[str, list[float]] = {"loss": []}
    best_score = -math.inf
    best_epoch = 0
    best = [p.data.copy() for p in params]
    stale = 0
    epoch = 0

    for epoch in range(1, max_epochs + 1):
        ad.zero_grads(params)
        with ad.Tape() as tape:
            loss = model.training_loss(rng)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(f"non-finite training loss {value!r} at epoch {epoch}")
        tape.backward(loss)
        ad.adam_step(params, state)

        history["loss"].append(value)
        metrics = validate()
        for k, v in metrics.items():
            history.setdefault(k, []).append(v)

        score = metrics["val_score"]
        if score > best_score:
            best_score, best_epoch, stale = score, epoch, 0
            best = [p.data.copy() for p in params]
        else:
            stale += 1
            if stale > patience:
                break

    for p, b in zip(params, best):
        p.data[...] = b
    log.debug("stopped after %d epochs, best epoch %d (%.4f)", epoch, best_epoch, best_score)
    return TrainOutcome(epoch, best_epoch, best_score, history)


def node_validator(model, labels: LabelTable) -> Callable[[], dict]:
    def validate():
        out = model.forward(training=False)
        pred = np.argmax(out.logits.data, axis=1)
        val_loss = model.loss(out, labels.val_idx)[1].item() if labels.val_idx.size else float("nan")
        val_acc = accuracy(pred, labels.labels, labels.val_idx) if labels.val_idx.size else 0.0
        return {
            "val_score": val_acc,
            "val_acc": val_acc,
            "val_loss": val_loss,
            "train_acc": accuracy(pred, labels.labels, labels.train_idx),
        }
    return validate


def predict(model) -> np.ndarray:
    return np.argmax(model.forward(training=False).logits.data, axis=1)
