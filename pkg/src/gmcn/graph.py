"""Undirected graph structure, degree normalization and random edge noise.

Adjacency matrices are kept in compressed sparse row form (``scipy.sparse``)
with 64-bit weights. Self-loops are never stored; the identity / self term
of every propagation rule is handled by the layers themselves.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """Nonnegative n x n adjacency stored as CSR.

    Construct through :meth:`from_entries` or :meth:`from_matrix`; both
    validate the invariants (nonnegative weights, no self-loops, no duplicate
    pairs, symmetry when ``symmetric`` is set).
    """

    matrix: sp.csr_matrix
    symmetric: bool = True

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def num_edges(self) -> int:
        """Undirected edge count for symmetric graphs, stored entries otherwise."""
        return self.nnz // 2 if self.symmetric else self.nnz

    def entries(self) -> Iterator[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        for i, j, w in zip(coo.row, coo.col, coo.data):
            yield int(i), int(j), float(w)

    def edge_list(self) -> np.ndarray:
        """Upper-triangular (i < j) pairs as an (m, 2) int array."""
        coo = sp.triu(self.matrix, k=1).tocoo()
        return np.stack([coo.row, coo.col], axis=1).astype(np.int64)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseAdjacency):
            return NotImplemented
        if self.matrix.shape != other.matrix.shape or self.symmetric != other.symmetric:
            return False
        return (self.matrix != other.matrix).nnz == 0

    @classmethod
    def from_entries(
        cls,
        n: int,
        entries: Iterable[tuple[int, int, float]],
        symmetric: bool = True,
    ) -> "SparseAdjacency":
        rows, cols, vals = [], [], []
        for i, j, w in entries:
            rows.append(i)
            cols.append(j)
            vals.append(w)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size:
            if rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n:
                raise ValidationError(f"entry index out of range for n={n}")
            keys = rows * n + cols
            if np.unique(keys).size != keys.size:
                raise ValidationError("duplicate (row, col) entries")
        coo = sp.coo_matrix(
            (np.asarray(vals, dtype=np.float64), (rows, cols)), shape=(n, n)
        )
        return cls.from_matrix(coo, symmetric=symmetric)

    @classmethod
    def from_edges(cls, n: int, edges, weight: float = 1.0) -> "SparseAdjacency":
        """Symmetric graph from undirected pairs; repeated pairs collapse to one edge."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        edges = edges[edges[:, 0] != edges[:, 1]]
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(edges) else edges
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        data = np.full(rows.size, weight, dtype=np.float64)
        return cls.from_matrix(sp.coo_matrix((data, (rows, cols)), shape=(n, n)))

    @classmethod
    def from_matrix(cls, matrix, symmetric: bool = True) -> "SparseAdjacency":
        m = sp.csr_matrix(matrix, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise ValidationError(f"adjacency must be square, got {m.shape}")
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        _validate(m, symmetric)
        return cls(m, symmetric)


def _validate(m: sp.csr_matrix, symmetric: bool) -> None:
    if not np.all(np.isfinite(m.data)):
        raise ValidationError("adjacency weights must be finite")
    if np.any(m.data < 0):
        raise ValidationError("adjacency weights must be nonnegative")
    if m.diagonal().any():
        raise ValidationError("self-loops are not stored; drop diagonal entries")
    if symmetric and (m != m.T).nnz:
        raise ValidationError("adjacency flagged symmetric but A != A^T")


def compute_degrees(a: SparseAdjacency) -> np.ndarray:
    """Row sums ``D_ii = sum_j A_ij``."""
    return np.asarray(a.matrix.sum(axis=1), dtype=np.float64).ravel()


def normalize_adjacency(a: SparseAdjacency) -> SparseAdjacency:
    """Symmetric degree normalization ``D^{-1/2} A D^{-1/2}``.

    Isolated nodes have no entries, so they are left untouched rather than
    divided by zero.
    """
    if not a.symmetric:
        raise ValidationError("normalize_adjacency expects a symmetric graph")
    _validate(a.matrix, True)
    deg = compute_degrees(a)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    m = a.matrix.tocoo()
    data = m.data * (inv_sqrt[m.row] * inv_sqrt[m.col])
    out = sp.csr_matrix((data, (m.row, m.col)), shape=m.shape)
    out.sort_indices()
    return SparseAdjacency(out, symmetric=True)


def perturb_graph(a: SparseAdjacency, p: float, seed: int) -> SparseAdjacency:
    """Random structural noise at level ``p``.

    Every undirected edge is cut independently with probability ``p``. For
    each cut edge one node pair, drawn uniformly among pairs not adjacent in
    the input graph, is connected with probability ``p``. New edges get unit
    weight; surviving edges keep their weight.
    """
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"perturbation level must lie in [0, 1], got {p}")
    if not a.symmetric:
        raise ValidationError("perturb_graph expects a symmetric graph")
    rng = np.random.default_rng(seed)
    n = a.n
    upper = sp.triu(a.matrix, k=1).tocoo()
    cut = rng.random(upper.nnz) < p
    keep_r, keep_c, keep_w = upper.row[~cut], upper.col[~cut], upper.data[~cut]

    existing = set((upper.row * n + upper.col).tolist())
    added: set[int] = set()
    max_pairs = n * (n - 1) // 2
    for _ in range(int(cut.sum())):
        # one candidate pair per removed edge
        if len(existing) + len(added) >= max_pairs:
            break
        while True:
            i, j = rng.integers(0, n, size=2)
            if i == j:
                continue
            key = int(min(i, j) * n + max(i, j))
            if key not in existing and key not in added:
                break
        if rng.random() < p:
            added.add(key)

    new = np.fromiter(sorted(added), dtype=np.int64, count=len(added))
    rows = np.concatenate([keep_r, new // n])
    cols = np.concatenate([keep_c, new % n])
    vals = np.concatenate([keep_w, np.ones(new.size)])
    upper_out = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    return SparseAdjacency.from_matrix(upper_out + upper_out.T, symmetric=True)
