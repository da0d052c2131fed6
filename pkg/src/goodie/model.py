"""GOODIE: LP-branch decoder, FP-branch encoder, structure-feature attention,
GCN classifier and the pseudo-label contrastive objectives."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import NormalizedAdjacency
from .masking import LabelTable
from .propagation import FPResult, LPResult

ATTENTION_VARIANTS = ("attention", "random", "sum", "mean", "concat")
LOSS_VARIANTS = ("pseudocon", "supcon_train", "strong", "weak", "manual", "none")
MANUAL_WEIGHTS = (1.0, 0.5, 0.25)  # strong, neutral, weak
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass
class GoodieConfig:
    alpha: float = 0.99
    tau: float = 0.01
    lam: float = 1.0
    k_lp: int = 50
    k_fp: int = 40
    dropout: float = 0.5
    lr: float = 0.005
    hidden: int = 64
    scaled_loss: bool = False
    attention_variant: str = "attention"
    loss_variant: str = "pseudocon"
    patience: int = 200
    max_epochs: int = 10000
    normalize_embeddings: bool = True
    leaky_slope: float = 0.3
    cls_activation: str = "none"

    def __post_init__(self):
        if self.attention_variant not in ATTENTION_VARIANTS:
            raise ModelError(f"attention_variant must be one of {ATTENTION_VARIANTS}")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ModelError(f"loss_variant must be one of {LOSS_VARIANTS}")
        if self.cls_activation not in ("relu", "none"):
            raise ModelError("cls_activation must be 'relu' or 'none'")
        if self.tau <= 0:
            raise ModelError("tau must be positive")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "GoodieConfig":
        """Build from string-or-typed values; ``lambda`` is accepted for ``lam``."""
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, val in mapping.items():
            key = "lam" if key == "lambda" else key
            if key not in kinds:
                continue
            kw[key] = _coerce(val, kinds[key])
        return cls(**kw)


def _coerce(val, kind: str):
    if not isinstance(val, str):
        return val
    if kind == "bool":
        return val.strip().lower() in ("1", "true", "yes", "on")
    if kind == "int":
        return int(val)
    if kind == "float":
        return float(val)
    return val.strip()


@dataclass
class GoodieParams:
    w_lp: Tensor
    w_fp: Tensor
    attn: Tensor
    w_cls: Tensor

    @classmethod
    def init(cls, n_classes: int, n_features: int, hidden: int, rng: np.random.Generator,
             cls_in: int | None = None, cls_out: int | None = None) -> "GoodieParams":
        return cls(
            w_lp=ad.glorot_uniform(n_classes, hidden, rng, "w_lp"),
            w_fp=ad.glorot_uniform(n_features, hidden, rng, "w_fp"),
            attn=ad.glorot_uniform(hidden, 1, rng, "attn"),
            w_cls=ad.glorot_uniform(cls_in or hidden, cls_out or n_classes, rng, "w_cls"),
        )

    def tensors(self) -> list[Tensor]:
        return [self.w_lp, self.w_fp, self.attn, self.w_cls]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.named().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, t in self.named().items():
            t.data[...] = snap[k]

    def named(self) -> dict[str, Tensor]:
        return {"w_lp": self.w_lp, "w_fp": self.w_fp, "attn": self.attn, "w_cls": self.w_cls}


def save_checkpoint(named: dict[str, Tensor], path, extra: dict | None = None) -> None:
    """JSON map name -> {shape, row-major values}."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "params": {
            k: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
            for k, t in named.items()
        },
    }
    if extra:
        doc["meta"] = extra
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path) -> dict[str, np.ndarray]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {doc.get('format_version')!r}")
    return {
        k: np.asarray(v["values"], dtype=np.float64).reshape(v["shape"])
        for k, v in doc["params"].items()
    }


# -- forward pieces ---------------------------------------------------------


def gcn_embed(adj: NormalizedAdjacency, x, w: Tensor, dropout: float = 0.0,
              training: bool = False, rng=None) -> Tensor:
    """ReLU(A x W), with ``x`` either a constant array or a Tensor."""
    if isinstance(x, Tensor):
        h = ad.spmm_fixed(adj, ad.matmul(x, w))
    else:
        # A x is constant here, so it is folded before the learnable product.
        h = ad.matmul(ad.constant(adj.csr @ np.asarray(x, dtype=np.float64)), w)
    return ad.dropout(ad.relu(h), dropout, training, rng)


def lp_branch(adj: NormalizedAdjacency, lp: LPResult, params: GoodieParams,
              dropout: float = 0.0, training: bool = False, rng=None) -> Tensor:
    if lp.y_hat.shape[1] != params.w_lp.shape[0]:
        raise ModelError(f"y_hat has {lp.y_hat.shape[1]} classes, w_lp expects {params.w_lp.shape[0]}")
    return gcn_embed(adj, lp.y_hat, params.w_lp, dropout, training, rng)


def fp_branch(adj: NormalizedAdjacency, fp: FPResult, params: GoodieParams,
              dropout: float = 0.0, training: bool = False, rng=None) -> Tensor:
    if fp.x_hat.shape[1] != params.w_fp.shape[0]:
        raise ModelError(f"x_hat has {fp.x_hat.shape[1]} features, w_fp expects {params.w_fp.shape[0]}")
    return gcn_embed(adj, fp.x_hat, params.w_fp, dropout, training, rng)


def attention_combine(h_lp: Tensor, h_fp: Tensor, attn: Tensor, slope: float = 0.3):
    """Per-node two-way softmax over LeakyReLU(a . h) scores.

    Returns ``(z, alpha_lp, alpha_fp)`` with the coefficients as N x 1 tensors.
    """
    if h_lp.shape != h_fp.shape:
        raise ModelError(f"branch shapes differ: {h_lp.shape} vs {h_fp.shape}")
    s_lp = ad.leaky_relu(ad.matmul(h_lp, attn), slope)
    s_fp = ad.leaky_relu(ad.matmul(h_fp, attn), slope)
    coef = ad.row_softmax(ad.concat_cols(s_lp, s_fp))
    a_lp = ad.column(coef, 0)
    a_fp = ad.column(coef, 1)
    z = ad.add(ad.mul(h_lp, a_lp), ad.mul(h_fp, a_fp))
    return z, a_lp, a_fp


def random_branch_pick(n_nodes: int, seed) -> np.ndarray:
    """Boolean mask of the (seeded) half of nodes that take the LP embedding."""
    rng = np.random.default_rng(seed)
    pick = np.zeros(n_nodes, dtype=bool)
    pick[rng.permutation(n_nodes)[: n_nodes // 2]] = True
    return pick


def attention_variant(h_lp: Tensor, h_fp: Tensor, variant: str, seed=None) -> Tensor:
    if variant == "sum":
        return ad.add(h_lp, h_fp)
    if variant == "mean":
        return ad.scale(ad.add(h_lp, h_fp), 0.5)
    if variant == "concat":
        return ad.concat_cols(h_lp, h_fp)
    if variant == "random":
        pick = random_branch_pick(h_lp.shape[0], seed)[:, None].astype(np.float64)
        return ad.add(ad.mul_const(h_lp, pick), ad.mul_const(h_fp, 1.0 - pick))
    raise ModelError(f"unknown attention variant {variant!r}")


def class_logits(adj: NormalizedAdjacency, z: Tensor, w_cls: Tensor, activation: str = "none") -> Tensor:
    out = ad.spmm_fixed(adj, ad.matmul(z, w_cls))
    return ad.relu(out) if activation == "relu" else out


def classify(adj: NormalizedAdjacency, z: Tensor, params: GoodieParams) -> Tensor:
    """Class probabilities softmax(A Z W_cls)."""
    return ad.row_softmax(class_logits(adj, z, params.w_cls))


# -- pair weights and contrastive losses -------------------------------------


def pair_weight(i: int, p: int, is_train, confidence) -> float:
    """Positive-pair weight: 1 for train/train, the pseudo side's confidence
    for mixed pairs, the product of confidences for pseudo/pseudo."""
    ti, tp = bool(is_train[i]), bool(is_train[p])
    if ti and tp:
        return 1.0
    if ti:
        return float(confidence[p])
    if tp:
        return float(confidence[i])
    return float(confidence[i]) * float(confidence[p])


@dataclass(frozen=True)
class PairWeights:
    is_train: np.ndarray
    confidence: np.ndarray

    def __call__(self, i: int, p: int) -> float:
        return pair_weight(i, p, self.is_train, self.confidence)

    def matrix(self) -> np.ndarray:
        """Dense N x N weight table for every ordered pair."""
        t = self.is_train
        c = np.where(t, 1.0, self.confidence)
        return np.outer(c, c)


def variant_weights(variant: str, is_train: np.ndarray, confidence: np.ndarray) -> np.ndarray:
    t = np.asarray(is_train, dtype=bool)
    both = np.outer(t, t)
    if variant == "pseudocon":
        return PairWeights(t, confidence).matrix()
    if variant == "strong":
        return np.ones((t.size, t.size))
    if variant == "weak":
        w = np.outer(confidence, confidence)
        w[both] = 1.0
        return w
    if variant == "manual":
        strong, neutral, weak = MANUAL_WEIGHTS
        w = np.full((t.size, t.size), neutral)
        w[both] = strong
        w[np.outer(~t, ~t)] = weak
        return w
    raise ModelError(f"no pair weights for loss variant {variant!r}")


def pseudocon_loss(z: Tensor, labels_ext, weights, tau: float, normalize: bool = True) -> Tensor:
    """Weighted supervised-contrastive loss summed over anchors.

    ``weights`` is a :class:`PairWeights` or a dense N x N array; only entries
    for same-label pairs are read. Anchors without positives contribute 0.
    """
    n = z.shape[0]
    if n < 2:
        raise ModelError("contrastive loss needs at least two nodes")
    y = np.asarray(labels_ext)
    w = weights.matrix() if isinstance(weights, PairWeights) else np.asarray(weights, dtype=np.float64)
    others = ~np.eye(n, dtype=bool)
    pos = (y[:, None] == y[None, :]) & others
    n_pos = pos.sum(axis=1)
    coef = np.where(pos, w, 0.0) / np.maximum(n_pos, 1)[:, None]

    zn = ad.row_l2_normalize(z) if normalize else z
    sim = ad.scale(ad.matmul(zn, ad.transpose(zn)), 1.0 / tau)
    lse = ad.masked_logsumexp_rows(sim, others)
    attract = ad.sum_all(ad.mul_const(sim, coef))
    repel = ad.sum_all(ad.mul_const(lse, coef.sum(axis=1, keepdims=True)))
    return ad.add(repel, ad.scale(attract, -1.0))


def supcon_loss(z: Tensor, labels, tau: float, normalize: bool = True) -> Tensor:
    n = z.shape[0]
    return pseudocon_loss(z, labels, np.ones((n, n)), tau, normalize)


def class_prototypes(z: Tensor, labels_ext, is_train, confidence, n_classes: int):
    """Confidence-weighted class means (train members weigh 1).

    Returns ``(prototypes, counts)``; empty classes get a zero row.
    """
    y = np.asarray(labels_ext, dtype=np.int64)
    coef = np.where(np.asarray(is_train, dtype=bool), 1.0, np.asarray(confidence, dtype=np.float64))
    counts = np.bincount(y, minlength=n_classes)
    m = np.zeros((n_classes, y.size))
    m[y, np.arange(y.size)] = coef
    m /= np.maximum(counts, 1)[:, None]
    return ad.matmul(ad.constant(m), z), counts


def pseudocon_scaled(prototypes: Tensor, tau: float, counts=None, normalize: bool = True) -> Tensor:
    """sum_c log sum_{b != c} exp(z^c . z^b / tau) over non-empty classes."""
    if counts is not None:
        keep = np.flatnonzero(np.asarray(counts) > 0)
        if keep.size < prototypes.shape[0]:
            prototypes = ad.take_rows(prototypes, keep)
    k = prototypes.shape[0]
    pn = ad.row_l2_normalize(prototypes) if normalize else prototypes
    sim = ad.scale(ad.matmul(pn, ad.transpose(pn)), 1.0 / tau)
    return ad.sum_all(ad.masked_logsumexp_rows(sim, ~np.eye(k, dtype=bool)))


def total_loss(ce: Tensor, pseudo: Tensor | None, lam: float) -> Tensor:
    if pseudo is None or lam == 0.0:
        return ce
    return ad.add(ce, ad.scale(pseudo, lam))


def loss_variant(variant: str, z: Tensor, labels_ext, is_train, confidence, tau: float,
                 train_idx=None, scaled: bool = False, n_classes: int | None = None,
                 normalize: bool = True) -> Tensor | None:
    """Contrastive term for one of the ablation variants (``None`` for 'none')."""
    if variant == "none":
        return None
    if variant == "supcon_train":
        idx = np.asarray(train_idx if train_idx is not None else np.flatnonzero(is_train))
        return supcon_loss(ad.take_rows(z, idx), np.asarray(labels_ext)[idx], tau, normalize)
    if scaled and variant == "pseudocon":
        if n_classes is None:
            n_classes = int(np.max(labels_ext)) + 1
        protos, counts = class_prototypes(z, labels_ext, is_train, confidence, n_classes)
        return pseudocon_scaled(protos, tau, counts, normalize)
    w = variant_weights(variant, is_train, confidence)
    return pseudocon_loss(z, labels_ext, w, tau, normalize)


# -- assembled model ---------------------------------------------------------


@dataclass
class Forward:
    logits: Tensor
    z: Tensor
    alpha_lp: np.ndarray | None
    alpha_fp: np.ndarray | None


class GoodieModel:
    """Everything that stays fixed during training plus the learnable params.

    Pseudo-labels, confidences and pair weights come from the converged LP
    output and are computed once, at construction.
    """

    def __init__(self, adj: NormalizedAdjacency, lp: LPResult, fp: FPResult,
                 labels: LabelTable, config: GoodieConfig, seed: int = 0):
        self.adj = adj
        self.lp = lp
        self.fp = fp
        self.labels = labels
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        d = config.hidden
        cls_in = 2 * d if config.attention_variant == "concat" else d
        self.params = GoodieParams.init(labels.n_classes, fp.x_hat.shape[1], d, rng, cls_in=cls_in)

        self.is_train = labels.train_mask()
        self.labels_ext = np.where(self.is_train, labels.labels, lp.pseudo_labels)
        self.confidence = lp.confidence
        self._ay = adj.csr @ lp.y_hat
        self._ax = adj.csr @ fp.x_hat

    @property
    def tensors(self) -> list[Tensor]:
        return self.params.tensors()

    def named_tensors(self) -> dict[str, Tensor]:
        return self.params.named()

    def forward(self, training: bool = False, rng=None) -> Forward:
        cfg, p = self.config, self.params
        p_drop = cfg.dropout if training else 0.0
        h_lp = ad.dropout(ad.relu(ad.matmul(ad.constant(self._ay), p.w_lp)), p_drop, training, rng)
        h_fp = ad.dropout(ad.relu(ad.matmul(ad.constant(self._ax), p.w_fp)), p_drop, training, rng)
        a_lp = a_fp = None
        if cfg.attention_variant == "attention":
            z, t_lp, t_fp = attention_combine(h_lp, h_fp, p.attn, cfg.leaky_slope)
            a_lp, a_fp = t_lp.data[:, 0], t_fp.data[:, 0]
        else:
            z = attention_variant(h_lp, h_fp, cfg.attention_variant, self.seed)
            if cfg.attention_variant == "random":
                a_lp = random_branch_pick(z.shape[0], self.seed).astype(np.float64)
                a_fp = 1.0 - a_lp
            elif cfg.attention_variant == "mean":
                a_lp = a_fp = np.full(z.shape[0], 0.5)
        logits = class_logits(self.adj, ad.dropout(z, p_drop, training, rng), p.w_cls,
                              cfg.cls_activation)
        return Forward(logits, z, a_lp, a_fp)

    def loss(self, out: Forward, subset=None):
        """Return ``(total, ce, pseudo)``; ``pseudo`` may be ``None``."""
        cfg = self.config
        subset = self.labels.train_idx if subset is None else subset
        ce = ad.masked_cross_entropy(out.logits, self.labels.labels, subset)
        pseudo = None
        if cfg.lam != 0.0:
            pseudo = loss_variant(
                cfg.loss_variant, out.z, self.labels_ext, self.is_train, self.confidence,
                cfg.tau, train_idx=self.labels.train_idx, scaled=cfg.scaled_loss,
                n_classes=self.labels.n_classes, normalize=cfg.normalize_embeddings,
            )
        return total_loss(ce, pseudo, cfg.lam), ce, pseudo

    def training_loss(self, rng) -> Tensor:
        return self.loss(self.forward(training=True, rng=rng))[0]

    def predict_proba(self) -> np.ndarray:
        return ad.row_softmax(self.forward(training=False).logits).data
