"""Dense and sparse numeric kernels everything higher up computes with.

Dense matrices are plain 2-D float64 numpy arrays.  Sparse matrices are
canonical sorted coordinate lists rather than CSR: the delta codec and the
smoothing operators are set computations over entry indices, and sorted
coordinate lists turn them into linear merges.

All reductions here have a fixed accumulation order so that repeated runs
(and the simulated distributed runs) are bit-comparable.  Everything is
64-bit; memory parity with accelerators is a non-goal.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "SparseMatrix",
    "as_dense_matrix",
    "matmul",
    "sparse_weighted_sum",
    "spmm",
    "spmm_transpose",
    "single_thread_blas",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Square sparse matrix in canonical COO form.

    Canonical means: entries strictly sorted lexicographically by
    (row, col), no duplicates, no stored zeros.  Two values with equal
    entry lists are the same graph.  Arrays are read-only; instances are
    safe to share across threads.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @staticmethod
    def from_entries(dim, rows, cols, vals=None) -> "SparseMatrix":
        """Build a canonical matrix from (possibly unsorted, duplicated) entries.

        Duplicate (row, col) entries sum their values; entries whose summed
        value is exactly 0.0 are elided.
        """
        if dim < 0:
            raise InputError(f"dimension must be non-negative, got {dim}")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        if vals is None:
            vals = np.ones(rows.shape[0], dtype=np.float64)
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise InputError("rows, cols and vals must have equal lengths")
        if rows.size and (rows.min() < 0 or rows.max() >= dim):
            raise InputError(f"row index out of range for dim {dim}")
        if cols.size and (cols.min() < 0 or cols.max() >= dim):
            raise InputError(f"col index out of range for dim {dim}")
        if not np.all(np.isfinite(vals)):
            raise InputError("entry values must be finite")
        keys = rows * np.int64(dim) + cols
        uniq, inverse = np.unique(keys, return_inverse=True)
        summed = np.zeros(uniq.shape[0], dtype=np.float64)
        np.add.at(summed, inverse, vals)
        keep = summed != 0.0
        uniq, summed = uniq[keep], summed[keep]
        return SparseMatrix(
            dim=int(dim),
            rows=_readonly(uniq // dim),
            cols=_readonly(uniq % dim),
            vals=_readonly(summed),
        )

    @staticmethod
    def empty(dim: int) -> "SparseMatrix":
        return SparseMatrix.from_entries(dim, [], [], [])

    @staticmethod
    def identity(dim: int) -> "SparseMatrix":
        idx = np.arange(dim, dtype=np.int64)
        return SparseMatrix.from_entries(dim, idx, idx, np.ones(dim))

    @property
    def nnz(self) -> int:
        return int(self.vals.shape[0])

    def index_keys(self) -> np.ndarray:
        """Entry indices flattened to sorted int64 keys row*dim+col."""
        return self.rows * np.int64(self.dim) + self.cols

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=np.float64)
        out[self.rows, self.cols] = self.vals
        return out

    def row_counts(self) -> np.ndarray:
        """Number of structural entries per row."""
        return np.bincount(self.rows, minlength=self.dim).astype(np.int64)

    def col_counts(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.dim).astype(np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )

    def __repr__(self) -> str:
        return f"SparseMatrix(dim={self.dim}, nnz={self.nnz})"


def as_dense_matrix(a) -> np.ndarray:
    """Validate and coerce to a finite 2-D float64 array."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise InputError("matrix contains non-finite values")
    return out


def spmm(a: SparseMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse @ dense: out[i, :] = sum over entries (i, j, v) of v * x[j, :].

    Accumulation follows canonical entry order, so results are
    reproducible bit-for-bit.
    """
    if a.dim != x.shape[0]:
        raise InputError(f"spmm dimension mismatch: {a.dim} vs {x.shape[0]}")
    out = np.zeros((a.dim, x.shape[1]), dtype=np.float64)
    np.add.at(out, a.rows, a.vals[:, None] * x[a.cols])
    return out


def spmm_transpose(a: SparseMatrix, g: np.ndarray) -> np.ndarray:
    """a.T @ g without materialising the transpose (adjoint of spmm)."""
    if a.dim != g.shape[0]:
        raise InputError(f"spmm_transpose dimension mismatch: {a.dim} vs {g.shape[0]}")
    out = np.zeros((a.dim, g.shape[1]), dtype=np.float64)
    np.add.at(out, a.cols, a.vals[:, None] * g[a.rows])
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense product in 64-bit arithmetic with shape validation."""
    if a.ndim != 2 or b.ndim != 2:
        raise InputError("matmul expects 2-D matrices")
    if a.shape[1] != b.shape[0]:
        raise InputError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


def sparse_weighted_sum(terms) -> SparseMatrix:
    """Weighted sum of sparse matrices with exact-zero elision.

    Entry (r, c) is present in the result iff sum_k w_k * m_k[r, c] != 0.
    Used for the edge-life smoothing and the first-mode product applied to
    the adjacency tensor.
    """
    terms = list(terms)
    if not terms:
        raise InputError("sparse_weighted_sum needs at least one term")
    dim = terms[0][1].dim
    for w, m in terms:
        if m.dim != dim:
            raise InputError(f"dimension mismatch in weighted sum: {m.dim} vs {dim}")
        if not np.isfinite(w):
            raise InputError("weights must be finite")
    rows = np.concatenate([m.rows for _, m in terms])
    cols = np.concatenate([m.cols for _, m in terms])
    vals = np.concatenate([float(w) * m.vals for w, m in terms])
    return SparseMatrix.from_entries(dim, rows, cols, vals)


@contextlib.contextmanager
def single_thread_blas():
    """Pin BLAS to one thread for the duration of a computation.

    The training engines run under this so that sequential, checkpointed,
    and simulated-distributed executions see identical GEMM blocking and
    stay bit-comparable regardless of scheduler.
    """
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - declared dependency
        yield
        return
    with threadpool_limits(limits=1):
        yield
