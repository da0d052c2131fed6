"""Accuracy, ROC-AUC and average precision."""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def accuracy(pred, truth, subset=None) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if subset is not None:
        subset = np.asarray(subset, dtype=np.int64)
        pred, truth = pred[subset], truth[subset]
    if pred.size == 0:
        raise ValueError("accuracy over an empty subset")
    return float(np.mean(pred == truth))


def roc_auc(pos_scores, neg_scores) -> float:
    """Probability a positive outscores a negative, ties counting one half.

    Counted with integers (twice the win count plus ties) so the value is the
    exact rational pairwise statistic, divided once.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.sort(np.asarray(neg_scores, dtype=np.float64).ravel())
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    twice = int(np.sum(2 * below + (upto - below)))
    return twice / (2 * pos.size * neg.size)


def average_precision(pos_scores, neg_scores) -> float:
    """Step-wise AP: sum over distinct thresholds of recall gain x precision.

    Accumulated as an exact rational and rounded once at the end.
    """
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if pos.size == 0:
        raise ValueError("AP needs at least one positive")
    scores = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size, dtype=np.int64), np.zeros(neg.size, dtype=np.int64)])
    order = np.argsort(-scores, kind="mergesort")
    scores, is_pos = scores[order], is_pos[order]
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    tp = np.cumsum(is_pos)[ends]
    seen = ends + 1
    ap = Fraction(0)
    prev_tp = 0
    for t, s in zip(tp.tolist(), seen.tolist()):
        if t > prev_tp:
            ap += Fraction((t - prev_tp) * t, s)
        prev_tp = t
    return float(ap / pos.size)
