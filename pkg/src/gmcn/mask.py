"""Neighbor-selection mask: similarity init, successive projection, thresholding.

The relaxed mask problem is a Euclidean projection of ``Z / (2 gamma)``,
with ``Z = A_hat * (U U^T)``, onto matrices with unit row/column sums and
nonnegative entries. It is solved approximately by alternating an exact
affine projection with a clamp at zero for a fixed number of rounds, then
thresholded into a binary mask on the edges of the graph.

Two evaluations of the same projection are provided. ``method="dense"``
works on an n x n buffer (8 n^2 bytes). ``method="fused"`` never stores the
matrix: off the edge support the starting point is zero, so every entry is
a clamped chain of per-row and per-column shifts and can be regenerated
on the fly while accumulating row/column sums. Both cost O(n^2) per round.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .graph import SparseAdjacency

METHODS = ("fused", "dense")


@dataclass(frozen=True)
class MaskSolverConfig:
    gamma: float = 0.001
    epsilon: float = 1e-3
    inner_iters: int = 3

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError(f"gamma must be positive, got {self.gamma}")
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.inner_iters < 1:
            raise ValidationError("inner_iters must be >= 1")


def _csr(a_hat) -> sp.csr_matrix:
    return a_hat.matrix if isinstance(a_hat, SparseAdjacency) else sp.csr_matrix(a_hat)


def edge_similarity(a_hat, u: np.ndarray, block: int = 4096) -> sp.csr_matrix:
    """``A_hat * (U U^T)`` evaluated only on the edge support of ``A_hat``.

    The result has exactly the sparsity pattern of ``A_hat``; edges whose
    endpoints have orthogonal features are kept as explicit zeros.
    """
    a = sp.csr_matrix(_csr(a_hat), copy=True)
    a.sort_indices()
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] != a.shape[0]:
        raise ValidationError(f"features {u.shape} do not match a graph on {a.shape[0]} nodes")
    rows = np.repeat(np.arange(a.shape[0]), np.diff(a.indptr))
    dots = np.empty(a.nnz)
    for start in range(0, a.nnz, block):
        r = rows[start:start + block]
        c = a.indices[start:start + block]
        dots[start:start + block] = np.einsum("ij,ij->i", u[r], u[c])
    return sp.csr_matrix((a.data * dots, a.indices, a.indptr), shape=a.shape)


def init_mask(a_hat, u: np.ndarray, gamma: float, out: np.ndarray | None = None) -> np.ndarray:
    """Dense starting point ``M = A_hat * (U U^T) / (2 gamma)``.

    ``out`` is an optional n x n scratch buffer that is overwritten.
    """
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    z = edge_similarity(a_hat, u).tocoo()
    n = z.shape[0]
    if out is None:
        out = np.zeros((n, n))
    else:
        if out.shape != (n, n):
            raise ValidationError("scratch buffer has the wrong shape")
        out.fill(0.0)
    out[z.row, z.col] = z.data / (2.0 * gamma)
    return out


def affine_project_step(m: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Exact projection onto ``{X : X 1 = 1, X^T 1 = 1}``.

    Evaluates ``M - (1/n) J M + ((1/n) I + (s/n^2) I - (1/n) M) J`` with
    ``J`` the all-ones matrix and ``s`` the total sum of ``M``, without
    forming ``J``: entry (i, j) becomes
    ``M_ij - c_j/n - r_i/n + 1/n + s/n^2`` for row sums r and column sums c.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"mask must be square, got {m.shape}")
    n = m.shape[0]
    row = m.sum(axis=1)
    col = m.sum(axis=0)
    total = row.sum()
    row_term = (1.0 / n + total / n**2) - row / n
    if out is None:
        out = m - col / n
    elif out is m:
        out -= col / n
    else:
        np.subtract(m, col / n, out=out)
    out += row_term[:, None]
    return out


def project_mask(m: np.ndarray, iters: int, inplace: bool = False) -> np.ndarray:
    """``iters`` rounds of affine projection followed by a clamp at zero."""
    if iters < 1:
        raise ValidationError("projection needs at least one iteration")
    out = m if inplace else np.array(m, dtype=np.float64, copy=True)
    for _ in range(iters):
        affine_project_step(out, out=out)
        np.maximum(out, 0.0, out=out)
    return out


def discretize_mask(m: np.ndarray, a_hat, epsilon: float) -> sp.csr_matrix:
    """Binary mask: 1 where ``m > epsilon`` on an edge of ``a_hat``, else 0.

    The result shares the sparsity layout of ``a_hat`` (explicit zeros are
    dropped), so ``mask.multiply(a_hat)`` is cheap.
    """
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    a = _csr(a_hat).tocoo()
    m = np.asarray(m)
    if m.shape != a.shape:
        raise ValidationError(f"mask shape {m.shape} != graph shape {a.shape}")
    on = m[a.row, a.col] > epsilon
    mask = sp.csr_matrix(
        (np.ones(int(on.sum())), (a.row[on], a.col[on])), shape=a.shape
    )
    mask.sort_indices()
    return mask


@numba.njit(cache=True)
def _chain_sums(indptr, indices, data, n, row_shift, col_shift, levels):
    """Row and column sums after ``levels`` shift-and-clamp rounds.

    Entry (i, j) starts at the sparse value (0 off support) and each round
    applies ``max((m + col_shift[k, j]) + row_shift[k, i], 0)``.
    """
    rows = np.zeros(n)
    cols = np.zeros(n)
    for i in range(n):
        ptr = indptr[i]
        end = indptr[i + 1]
        acc = 0.0
        for j in range(n):
            m = 0.0
            if ptr < end and indices[ptr] == j:
                m = data[ptr]
                ptr += 1
            for k in range(levels):
                m = (m + col_shift[k, j]) + row_shift[k, i]
                if m < 0.0:
                    m = 0.0
            acc += m
            cols[j] += m
        rows[i] = acc
    return rows, cols


def project_on_support(m0: sp.csr_matrix, iters: int) -> sp.csr_matrix:
    """Values of ``project_mask(m0.toarray(), iters)`` on the stored entries of ``m0``.

    ``m0`` must be zero off its sparsity pattern, which holds for the
    similarity initialization. No n x n array is allocated.
    """
    if iters < 1:
        raise ValidationError("projection needs at least one iteration")
    m0 = sp.csr_matrix(m0, dtype=np.float64)
    m0.sort_indices()
    n = m0.shape[0]
    indptr = m0.indptr.astype(np.int64)
    indices = m0.indices.astype(np.int64)
    row_shift = np.zeros((iters, n))
    col_shift = np.zeros((iters, n))
    rows = np.asarray(m0.sum(axis=1)).ravel()
    cols = np.asarray(m0.sum(axis=0)).ravel()
    for k in range(iters):
        total = rows.sum()
        row_shift[k] = (1.0 / n + total / n**2) - rows / n
        col_shift[k] = -(cols / n)
        if k + 1 < iters:
            rows, cols = _chain_sums(indptr, indices, m0.data, n, row_shift, col_shift, k + 1)
    rows_of = np.repeat(np.arange(n), np.diff(indptr))
    vals = m0.data.copy()
    for k in range(iters):
        vals = np.maximum((vals + col_shift[k, indices]) + row_shift[k, rows_of], 0.0)
    return sp.csr_matrix((vals, m0.indices.copy(), m0.indptr.copy()), shape=m0.shape)


def solve_mask(
    a_hat,
    u: np.ndarray,
    cfg: MaskSolverConfig,
    scratch: np.ndarray | None = None,
    method: str = "fused",
) -> sp.csr_matrix:
    """Similarity init, ``cfg.inner_iters`` projection rounds, thresholding."""
    if method == "dense":
        m = init_mask(a_hat, u, cfg.gamma, out=scratch)
        project_mask(m, cfg.inner_iters, inplace=True)
        return discretize_mask(m, a_hat, cfg.epsilon)
    if method != "fused":
        raise ValidationError(f"unknown projection method {method!r}; expected one of {METHODS}")
    if not cfg.epsilon > 0:
        raise ValidationError(f"epsilon must be positive, got {cfg.epsilon}")
    a = _csr(a_hat)
    z = edge_similarity(a, u)
    # keep explicit zeros so the support of A_hat is preserved
    m0 = sp.csr_matrix((z.data / (2.0 * cfg.gamma), z.indices, z.indptr), shape=z.shape)
    projected = project_on_support(m0, cfg.inner_iters)
    rows_of = np.repeat(np.arange(projected.shape[0]), np.diff(projected.indptr))
    keep = projected.data > cfg.epsilon
    mask = sp.csr_matrix(
        (np.ones(int(keep.sum())), (rows_of[keep], projected.indices[keep])), shape=projected.shape
    )
    mask.sort_indices()
    return mask


def oracle_affine_projection(m: np.ndarray) -> np.ndarray:
    """Reference projection by solving the KKT system of

    ``min ||X - M||_F^2  s.t.  X 1 = 1,  X^T 1 = 1``

    directly on the n^2 unknowns. Only meant for tiny n (n <= 8).
    """
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValidationError("oracle expects a square matrix")
    if n > 8:
        raise ValidationError(f"oracle refuses n={n} > 8")
    nv = n * n
    # constraint rows: n row sums then n column sums over row-major vec(X)
    c = np.zeros((2 * n, nv))
    for i in range(n):
        c[i, i * n:(i + 1) * n] = 1.0
        c[n + i, i::n] = 1.0
    kkt = np.zeros((nv + 2 * n, nv + 2 * n))
    kkt[:nv, :nv] = 2.0 * np.eye(nv)
    kkt[:nv, nv:] = c.T
    kkt[nv:, :nv] = c
    rhs = np.concatenate([2.0 * m.ravel(), np.ones(2 * n)])
    # one constraint is redundant (both families sum to n); lstsq handles the rank loss
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:nv].reshape(n, n)
