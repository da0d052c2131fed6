"""Undirected graphs in CSR form and the self-looped symmetric normalization."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Immutable, symmetric, unweighted adjacency without self-loops.

    ``edges`` holds each undirected edge once as ``(i, j)`` with ``i < j``;
    ``csr`` stores both directions with unit values and sorted column indices.
    """

    n_nodes: int
    edges: np.ndarray
    csr: sp.csr_matrix

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr.indptr).astype(np.float64)

    def neighbors(self, i: int) -> np.ndarray:
        return self.csr.indices[self.csr.indptr[i]:self.csr.indptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        return bool(np.any(self.neighbors(i) == j))


@dataclass(frozen=True)
class NormalizedAdjacency:
    """D^-1/2 (A + I) D^-1/2 with D the self-looped degree."""

    n_nodes: int
    csr: sp.csr_matrix

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()


def build_graph(edge_list, n_nodes: int) -> Graph:
    """Symmetrize and deduplicate ``edge_list``; self-loops are dropped."""
    if n_nodes <= 0:
        raise GraphError("graph needs at least one node")
    e = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= n_nodes):
        raise GraphError(f"edge index out of range [0, {n_nodes})")
    e = e[e[:, 0] != e[:, 1]]
    e = np.sort(e, axis=1)
    e = np.unique(e, axis=0) if e.size else e.reshape(0, 2)

    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    csr = sp.csr_matrix(
        (np.ones(rows.shape[0]), (rows, cols)), shape=(n_nodes, n_nodes)
    )
    csr.sort_indices()
    return Graph(n_nodes=n_nodes, edges=e, csr=csr)


def normalize_sym(graph: Graph) -> NormalizedAdjacency:
    n = graph.n_nodes
    a_tilde = (graph.csr + sp.identity(n, format="csr")).tocsr()
    a_tilde.sort_indices()
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    rows = np.repeat(np.arange(n), np.diff(a_tilde.indptr))
    data = 1.0 / np.sqrt(deg[rows] * deg[a_tilde.indices])
    csr = sp.csr_matrix((data, a_tilde.indices.copy(), a_tilde.indptr.copy()), shape=(n, n))
    return NormalizedAdjacency(n_nodes=n, csr=csr)


def spmm(adj: NormalizedAdjacency, dense: np.ndarray) -> np.ndarray:
    """Sparse-dense product; rows accumulate in ascending column order."""
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2 or dense.shape[0] != adj.n_nodes:
        raise GraphError(
            f"spmm: expected {adj.n_nodes} rows, got shape {dense.shape}"
        )
    return adj.csr @ dense


def connected_components(graph: Graph) -> tuple[int, np.ndarray]:
    return csgraph.connected_components(graph.csr, directed=False)


def load_edge_list(path, n_nodes: int | None = None) -> Graph:
    """Read ``src<TAB>dst`` lines (``#`` starts a comment)."""
    pairs = []
    declared = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line, _, comment = raw.partition("#")
        comment = comment.strip()
        if comment.startswith("n_nodes="):
            declared = int(comment.split("=", 1)[1])
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'src<TAB>dst', got {raw!r}")
        pairs.append((int(parts[0]), int(parts[1])))
    if n_nodes is None:
        n_nodes = declared
    if n_nodes is None:
        n_nodes = 1 + max((max(p) for p in pairs), default=-1)
    return build_graph(np.array(pairs, dtype=np.int64).reshape(-1, 2), n_nodes)


def save_edge_list(graph: Graph, path) -> None:
    lines = [f"# n_nodes={graph.n_nodes}"]
    lines += [f"{i}\t{j}" for i, j in graph.edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
