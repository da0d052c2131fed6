"""A small reverse-mode differentiation engine over dense 2-D float64 arrays.

Only the operations needed by the models in this package are provided.
Operations are recorded on the innermost active :class:`Tape` of the current
thread; outside a tape they simply compute values.

    with Tape() as tape:
        loss = sum_all(relu(matmul(x, w)))
    tape.backward(loss)
    w.grad  # d loss / d w
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import NormalizedAdjacency

_ids = itertools.count()
_local = threading.local()


class AutodiffError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "name", "_recorded")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise AutodiffError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = np.zeros_like(arr)
        self.requires_grad = requires_grad
        self.node_id = next(_ids)
        self.name = name
        self._recorded = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise AutodiffError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


@dataclass
class _Record:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of executed operations.

    ``backward`` walks the record in exact reverse order; gradients reaching a
    leaf (a tensor not produced on this tape) are added into ``leaf.grad``.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def record(self, out, inputs, backward) -> None:
        out._recorded = True
        self.records.append(_Record(out, tuple(inputs), backward))

    def backward(self, loss: Tensor) -> None:
        if loss.shape != (1, 1):
            raise AutodiffError(f"backward needs a scalar loss, got shape {loss.shape}")
        pending: dict[int, np.ndarray] = {loss.node_id: np.ones((1, 1))}
        for rec in reversed(self.records):
            g = pending.pop(rec.out.node_id, None)
            if g is None:
                continue
            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                if t._recorded:
                    if t.node_id in pending:
                        pending[t.node_id] = pending[t.node_id] + gi
                    else:
                        pending[t.node_id] = gi
                else:
                    t.grad += gi


def _stack() -> list[Tape]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def _emit(data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    stack = _stack()
    needs = bool(stack) and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        stack[-1].record(out, inputs, backward)
    return out


def _shape_check(cond: bool, msg: str) -> None:
    if not cond:
        raise AutodiffError(msg)


# -- linear algebra ---------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _shape_check(a.shape[1] == b.shape[0], f"matmul: {a.shape} @ {b.shape}")
    return _emit(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _emit(a.data.T.copy(), (a,), lambda g: (g.T,))


def spmm_fixed(adj: NormalizedAdjacency, x: Tensor) -> Tensor:
    """Product with a fixed (non-learnable) symmetric sparse matrix."""
    _shape_check(x.shape[0] == adj.n_nodes, f"spmm: {adj.n_nodes} nodes vs {x.shape}")
    # Symmetric operator, so the adjoint is the operator itself.
    return _emit(adj.csr @ x.data, (x,), lambda g: (adj.csr @ g,))


# -- elementwise ------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == (1, 1):
        return g.sum(keepdims=True)
    if shape[1] == 1:
        return g.sum(axis=1, keepdims=True)
    return g.sum(axis=0, keepdims=True)


def _broadcast_ok(a: Tensor, b: Tensor) -> bool:
    if a.shape == b.shape or b.shape == (1, 1) or a.shape == (1, 1):
        return True
    ra, ca = a.shape
    rb, cb = b.shape
    return (ra == rb and 1 in (ca, cb)) or (ca == cb and 1 in (ra, rb))


def add(a: Tensor, b: Tensor) -> Tensor:
    _shape_check(_broadcast_ok(a, b), f"add: {a.shape} + {b.shape}")
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; a column vector broadcasts across columns."""
    _shape_check(_broadcast_ok(a, b), f"mul: {a.shape} * {b.shape}")
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _emit(a.data * s, (a,), lambda g: (g * s,))


def mul_const(a: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    return _emit(a.data * c, (a,), lambda g: (_unbroadcast(g * c, a.shape),))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _emit(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def leaky_relu(x: Tensor, slope: float = 0.3) -> Tensor:
    d = np.where(x.data > 0, 1.0, slope)
    return _emit(x.data * d, (x,), lambda g: (g * d,))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _emit(s, (x,), lambda g: (g * s * (1.0 - s),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | int | None = None) -> Tensor:
    """Inverted dropout; identity outside training or when ``p == 0``."""
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise AutodiffError(f"dropout rate must lie in [0, 1), got {p}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _emit(x.data * keep, (x,), lambda g: (g * keep,))


# -- shape plumbing ---------------------------------------------------------


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    _shape_check(a.shape[0] == b.shape[0], f"concat: {a.shape} | {b.shape}")
    k = a.shape[1]
    return _emit(np.hstack([a.data, b.data]), (a, b), lambda g: (g[:, :k], g[:, k:]))


def column(x: Tensor, j: int) -> Tensor:
    def back(g):
        gx = np.zeros_like(x.data)
        gx[:, j] = g[:, 0]
        return (gx,)
    return _emit(x.data[:, j:j + 1].copy(), (x,), back)


def take_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)
    return _emit(x.data[idx], (x,), back)


# -- reductions -------------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    return _emit(x.data.sum(keepdims=True), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def sum_rows(x: Tensor) -> Tensor:
    """Per-row sum, N x 1."""
    return _emit(x.data.sum(axis=1, keepdims=True), (x,),
                 lambda g: (np.broadcast_to(g, x.shape).copy(),))


def row_l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    norm = np.maximum(np.sqrt((x.data ** 2).sum(axis=1, keepdims=True)), eps)
    y = x.data / norm

    def back(g):
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norm,)
    return _emit(y, (x,), back)


def masked_logsumexp_rows(x: Tensor, mask) -> Tensor:
    """log sum_j exp(x_ij) over entries with ``mask[i, j]``; empty rows give 0."""
    mask = np.asarray(mask, dtype=bool)
    _shape_check(mask.shape == x.shape, f"mask {mask.shape} vs {x.shape}")
    masked = np.where(mask, x.data, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    empty = ~mask.any(axis=1, keepdims=True)
    m = np.where(empty, 0.0, m)
    e = np.where(mask, np.exp(masked - m), 0.0)
    s = e.sum(axis=1, keepdims=True)
    out = np.where(empty, 0.0, m + np.log(np.where(empty, 1.0, s)))
    soft = np.where(empty, 0.0, e / np.where(empty, 1.0, s))
    return _emit(out, (x,), lambda g: (g * soft,))


def log_softmax_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=1, keepdims=True))


def row_softmax(x: Tensor, temperature: float = 1.0) -> Tensor:
    s = np.exp(log_softmax_rows(x.data / temperature))

    def back(g):
        return ((s * (g - (g * s).sum(axis=1, keepdims=True))) / temperature,)
    return _emit(s, (x,), back)


def masked_cross_entropy(logits: Tensor, labels, subset) -> Tensor:
    """Mean negative log-likelihood of ``labels[subset]`` under softmax(logits).

    ``labels`` is a per-node class array or anything with a ``labels`` attribute.
    """
    y = np.asarray(getattr(labels, "labels", labels), dtype=np.int64)
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size == 0:
        raise AutodiffError("cross-entropy over an empty subset")
    lsm = log_softmax_rows(logits.data[subset])
    target = y[subset]
    n = subset.size
    loss = -lsm[np.arange(n), target].sum() / n

    def back(g):
        d = np.exp(lsm)
        d[np.arange(n), target] -= 1.0
        gx = np.zeros_like(logits.data)
        np.add.at(gx, subset, d * (g[0, 0] / n))
        return (gx,)
    return _emit(np.array([[loss]]), (logits,), back)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of an n x 1 logit column against 0/1 targets."""
    t = np.asarray(targets, dtype=np.float64).reshape(logits.shape)
    x = logits.data
    loss = (np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))).mean()
    n = x.size
    return _emit(np.array([[loss]]), (logits,), lambda g: (g[0, 0] * (_sigmoid(x) - t) / n,))


# -- optimisation -----------------------------------------------------------


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, name: str | None = None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)), name=name)


@dataclass
class AdamState:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update using each parameter's ``.grad``."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        key = p.node_id
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad ** 2
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4,
               exclude: Sequence[np.ndarray | None] | None = None) -> float:
    """Largest relative error between tape gradients and central differences.

    ``exclude`` optionally gives one boolean mask per parameter marking
    coordinates to skip (e.g. ones that sit on a ReLU kink).
    """
    zero_grads(params)
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for k, p in enumerate(params):
        skip = None if exclude is None else exclude[k]
        flat = p.data.reshape(-1)
        for idx in range(flat.size):
            if skip is not None and skip.reshape(-1)[idx]:
                continue
            orig = flat[idx]
            flat[idx] = orig + eps
            hi = f().item()
            flat[idx] = orig - eps
            lo = f().item()
            flat[idx] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = analytic[k].reshape(-1)[idx]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst
