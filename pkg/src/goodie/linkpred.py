"""Edge splits and inner-product auto-encoders for link prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import Graph, NormalizedAdjacency, build_graph
from .masking import LabelTable
from .metrics import average_precision, roc_auc
from .model import GoodieConfig, attention_combine, loss_variant
from .propagation import FPResult, LPResult

HIDDEN = (32, 16)


@dataclass(frozen=True)
class LinkSplit:
    train_graph: Graph
    train_pos: np.ndarray
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


def _pair_keys(pairs: np.ndarray, n: int) -> np.ndarray:
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    return lo * n + hi


def sample_non_edges(n: int, count: int, forbidden: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct unordered pairs (i < j) whose keys are not in ``forbidden``."""
    if count > n * (n - 1) // 2 - len(forbidden):
        raise ValueError("not enough absent pairs to sample from")
    taken = set(forbidden.tolist())
    out = []
    while len(out) < count:
        cand = rng.integers(0, n, size=(2 * (count - len(out)) + 8, 2))
        for i, j in cand:
            if i == j:
                continue
            i, j = (i, j) if i < j else (j, i)
            key = int(i) * n + int(j)
            if key in taken:
                continue
            taken.add(key)
            out.append((i, j))
            if len(out) == count:
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def link_split(graph: Graph, test_frac: float = 0.10, val_frac: float = 0.05, seed: int = 0) -> LinkSplit:
    """Hold out edges as positives and pair them with as many absent pairs."""
    rng = np.random.default_rng(seed)
    e = graph.edges
    n_test = int(round(test_frac * len(e)))
    n_val = int(round(val_frac * len(e)))
    perm = rng.permutation(len(e))
    test_pos = e[perm[:n_test]]
    val_pos = e[perm[n_test:n_test + n_val]]
    train_pos = e[np.sort(perm[n_test + n_val:])]
    neg = sample_non_edges(graph.n_nodes, n_test + n_val, _pair_keys(e, graph.n_nodes), rng)
    return LinkSplit(
        train_graph=build_graph(train_pos, graph.n_nodes),
        train_pos=train_pos,
        val_pos=val_pos,
        val_neg=neg[n_test:],
        test_pos=test_pos,
        test_neg=neg[:n_test],
    )


def pair_logits(emb: ad.Tensor, pairs: np.ndarray) -> ad.Tensor:
    return ad.sum_rows(ad.mul(ad.take_rows(emb, pairs[:, 0]), ad.take_rows(emb, pairs[:, 1])))


def score_pairs(emb: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    logits = np.einsum("ij,ij->i", emb[pairs[:, 0]], emb[pairs[:, 1]])
    return 1.0 / (1.0 + np.exp(-logits))


class GoodieEncoder:
    """Both branches at the first width, attention, then one linear GCN layer."""

    def __init__(self, adj: NormalizedAdjacency, lp: LPResult, fp: FPResult, labels: LabelTable,
                 config: GoodieConfig, seed: int = 0, widths=HIDDEN):
        rng = np.random.default_rng(seed)
        d1, d2 = widths
        self.adj = adj
        self.config = config
        self.w_lp = ad.glorot_uniform(labels.n_classes, d1, rng, "w_lp")
        self.w_fp = ad.glorot_uniform(fp.x_hat.shape[1], d1, rng, "w_fp")
        self.attn = ad.glorot_uniform(d1, 1, rng, "attn")
        self.w_out = ad.glorot_uniform(d1, d2, rng, "w_out")
        self._ay = adj.csr @ lp.y_hat
        self._ax = adj.csr @ fp.x_hat
        self.is_train = labels.train_mask()
        self.labels_ext = np.where(self.is_train, labels.labels, lp.pseudo_labels)
        self.confidence = lp.confidence
        self.labels = labels
        self.alpha_lp = self.alpha_fp = None

    @property
    def tensors(self):
        return [self.w_lp, self.w_fp, self.attn, self.w_out]

    def named_tensors(self):
        return {"w_lp": self.w_lp, "w_fp": self.w_fp, "attn": self.attn, "w_out": self.w_out}

    def encode(self):
        h_lp = ad.relu(ad.matmul(ad.constant(self._ay), self.w_lp))
        h_fp = ad.relu(ad.matmul(ad.constant(self._ax), self.w_fp))
        z, a_lp, a_fp = attention_combine(h_lp, h_fp, self.attn, self.config.leaky_slope)
        self.alpha_lp, self.alpha_fp = a_lp.data[:, 0], a_fp.data[:, 0]
        return ad.spmm_fixed(self.adj, ad.matmul(z, self.w_out)), z

    def aux_loss(self, z):
        cfg = self.config
        if cfg.lam == 0.0:
            return None
        return loss_variant(cfg.loss_variant, z, self.labels_ext, self.is_train, self.confidence,
                            cfg.tau, train_idx=self.labels.train_idx, scaled=cfg.scaled_loss,
                            n_classes=self.labels.n_classes, normalize=cfg.normalize_embeddings)


class GCNEncoder:
    """Standard GAE encoder: ReLU GCN layer followed by a linear GCN layer."""

    def __init__(self, adj: NormalizedAdjacency, features: np.ndarray, seed: int = 0, widths=HIDDEN):
        rng = np.random.default_rng(seed)
        d1, d2 = widths
        self.adj = adj
        self.w1 = ad.glorot_uniform(features.shape[1], d1, rng, "w1")
        self.w2 = ad.glorot_uniform(d1, d2, rng, "w2")
        self._ax = adj.csr @ np.asarray(features, dtype=np.float64)
        self.alpha_lp = self.alpha_fp = None

    @property
    def tensors(self):
        return [self.w1, self.w2]

    def named_tensors(self):
        return {"w1": self.w1, "w2": self.w2}

    def encode(self):
        h = ad.relu(ad.matmul(ad.constant(self._ax), self.w1))
        return ad.spmm_fixed(self.adj, ad.matmul(h, self.w2)), h

    def aux_loss(self, z):
        return None


class LinkModel:
    """Wraps an encoder with the inner-product decoder and BCE objective.

    Training negatives are redrawn every epoch from pairs absent in the
    training graph, one per positive edge.
    """

    def __init__(self, encoder, split: LinkSplit, lam: float = 0.0):
        self.encoder = encoder
        self.split = split
        self.lam = lam
        self._forbidden = _pair_keys(split.train_pos, split.train_graph.n_nodes)

    @property
    def tensors(self):
        return self.encoder.tensors

    def training_loss(self, rng) -> ad.Tensor:
        n = self.split.train_graph.n_nodes
        pos = self.split.train_pos
        neg = sample_non_edges(n, len(pos), self._forbidden, rng)
        emb, z = self.encoder.encode()
        l_pos = ad.bce_with_logits(pair_logits(emb, pos), np.ones(len(pos)))
        l_neg = ad.bce_with_logits(pair_logits(emb, neg), np.zeros(len(neg)))
        loss = ad.add(ad.scale(l_pos, 0.5), ad.scale(l_neg, 0.5))
        aux = self.encoder.aux_loss(z)
        if aux is not None and self.lam != 0.0:
            loss = ad.add(loss, ad.scale(aux, self.lam))
        return loss

    def embeddings(self) -> np.ndarray:
        return self.encoder.encode()[0].data

    def evaluate(self, pos: np.ndarray, neg: np.ndarray) -> tuple[float, float]:
        emb = self.embeddings()
        sp, sn = score_pairs(emb, pos), score_pairs(emb, neg)
        return roc_auc(sp, sn), average_precision(sp, sn)

    def validator(self):
        def validate():
            auc, ap = self.evaluate(self.split.val_pos, self.split.val_neg)
            return {"val_score": auc, "val_auc": auc, "val_ap": ap}
        return validate
