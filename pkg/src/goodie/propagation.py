"""Label and feature propagation to a clamped fixed point."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import NormalizedAdjacency, spmm
from .masking import LabelTable, MaskedFeatures

DEFAULT_K_LP = 50
DEFAULT_K_FP = 40


class PropagationError(ValueError):
    pass


@dataclass(frozen=True)
class LPResult:
    y_hat: np.ndarray
    pseudo_labels: np.ndarray
    confidence: np.ndarray
    iterations: int
    alpha: float


@dataclass(frozen=True)
class FPResult:
    x_hat: np.ndarray
    iterations: int


def softmax_rows(x: np.ndarray, tau: float = 1.0) -> np.ndarray:
    s = x / tau
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def confidence_from_logits(y_hat: np.ndarray, tau: float) -> np.ndarray:
    """max softmax(y / tau) per row; an all-zero row gives 1/|C|."""
    return softmax_rows(y_hat, tau).max(axis=1)


def label_propagate(adj: NormalizedAdjacency, labels: LabelTable, alpha: float = 0.99,
                    k: int = DEFAULT_K_LP, tau: float = 0.01) -> LPResult:
    if not 0.0 < alpha <= 1.0:
        raise PropagationError(f"alpha must lie in (0, 1], got {alpha}")
    if k < 1:
        raise PropagationError(f"k must be >= 1, got {k}")
    if tau <= 0.0:
        raise PropagationError(f"tau must be positive, got {tau}")
    if labels.n_nodes != adj.n_nodes:
        raise PropagationError("label table and adjacency disagree on node count")

    y0 = labels.y0
    train = labels.train_idx
    y = y0.copy()
    for _ in range(k):
        y = alpha * spmm(adj, y) + (1.0 - alpha) * y0
        y[train] = y0[train]

    y.setflags(write=False)
    return LPResult(
        y_hat=y,
        pseudo_labels=np.argmax(y, axis=1),
        confidence=confidence_from_logits(y, tau),
        iterations=k,
        alpha=alpha,
    )


def feature_propagate(adj: NormalizedAdjacency, feats: MaskedFeatures,
                      k: int = DEFAULT_K_FP) -> FPResult:
    if k < 1:
        raise PropagationError(f"k must be >= 1, got {k}")
    x0 = feats.values
    if x0.shape[0] != adj.n_nodes:
        raise PropagationError(
            f"features have {x0.shape[0]} rows, adjacency has {adj.n_nodes} nodes"
        )
    known = feats.observed
    x = x0.copy()
    for _ in range(k):
        x = spmm(adj, x)
        x[known] = x0[known]
    x.setflags(write=False)
    return FPResult(x_hat=x, iterations=k)


def residual(adj: NormalizedAdjacency, state: np.ndarray, clamp_set: np.ndarray,
             alpha: float = 1.0, base: np.ndarray | None = None) -> float:
    """Max-norm of one propagation step on the entries that are not clamped.

    The step is ``alpha * A @ state + (1 - alpha) * base``; ``clamp_set`` is a
    boolean mask shaped like ``state`` or a per-node mask broadcast over columns.
    """
    state = np.asarray(state, dtype=np.float64)
    clamp = np.asarray(clamp_set, dtype=bool)
    if clamp.ndim == 1:
        clamp = np.broadcast_to(clamp[:, None], state.shape)
    step = alpha * spmm(adj, state)
    if alpha != 1.0:
        step = step + (1.0 - alpha) * (np.zeros_like(state) if base is None else base)
    free = ~clamp
    if not free.any():
        return 0.0
    return float(np.abs(step - state)[free].max())


def lp_residual(adj: NormalizedAdjacency, labels: LabelTable, lp: LPResult) -> float:
    return residual(adj, lp.y_hat, labels.train_mask(), alpha=lp.alpha, base=labels.y0)


def fp_residual(adj: NormalizedAdjacency, feats: MaskedFeatures, fp: FPResult) -> float:
    return residual(adj, fp.x_hat, feats.observed)
