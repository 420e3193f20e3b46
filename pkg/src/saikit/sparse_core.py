"""Compressed sparse column matrices, Matrix Market I/O, and basic kernels.

Matrices are stored in CSC form with 0-based indices in memory. Matrix
Market files use 1-based indices on disk, coordinate format, real field.
All matrices are normalized on construction: duplicate entries summed,
explicitly stored zeros purged, row indices sorted within each column.
Instances are treated as immutable and are safe to share across workers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np
from scipy.sparse import csc_matrix as _scipy_csc
from scipy.sparse.csgraph import maximum_bipartite_matching as _max_matching


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input (header, size line, or entries)."""


class UnsupportedFieldError(MatrixMarketError):
    """Matrix Market field or symmetry this reader does not handle."""


class StructurallySingularError(ValueError):
    """The matrix pattern admits no zero-free diagonal (no perfect matching)."""


PathOrStream = Union[str, os.PathLike, IO[str]]


def _as_index_array(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def _as_value_array(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


@dataclass
class CscMatrix:
    """Real sparse matrix in compressed sparse column form.

    Invariants (checked on construction): ``col_ptr`` is monotone with
    ``col_ptr[0] == 0`` and ``col_ptr[-1] == nnz``; row indices strictly
    increase within each column and lie in ``[0, n_rows)``; values are
    finite and none is stored as an exact zero.
    """

    n_rows: int
    n_cols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.col_ptr = _as_index_array(self.col_ptr)
        self.row_idx = _as_index_array(self.row_idx)
        self.values = _as_value_array(self.values)
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if self.col_ptr.shape != (self.n_cols + 1,):
            raise ValueError("col_ptr must have length n_cols + 1")
        if self.col_ptr[0] != 0 or self.col_ptr[-1] != len(self.row_idx):
            raise ValueError("col_ptr must start at 0 and end at nnz")
        if np.any(np.diff(self.col_ptr) < 0):
            raise ValueError("col_ptr must be non-decreasing")
        if len(self.row_idx) != len(self.values):
            raise ValueError("row_idx and values length mismatch")
        if len(self.row_idx):
            if self.row_idx.min() < 0 or self.row_idx.max() >= self.n_rows:
                raise ValueError("row index out of range")
            # strictly increasing rows within each column
            d = np.diff(self.row_idx)
            col_starts = self.col_ptr[1:-1]
            interior = np.ones(len(d), dtype=bool)
            interior[col_starts[(col_starts > 0) & (col_starts < len(self.row_idx))] - 1] = False
            if np.any(d[interior] <= 0):
                raise ValueError("row indices must strictly increase within a column")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix values must be finite")
        if np.any(self.values == 0.0):
            raise ValueError("explicit zeros must be purged before construction")
        for arr in (self.col_ptr, self.row_idx, self.values):
            arr.flags.writeable = False

    # -- constructors -------------------------------------------------

    @classmethod
    def from_coo(cls, n_rows: int, n_cols: int, rows, cols, vals) -> "CscMatrix":
        """Build from coordinate triplets; duplicates are summed, zeros purged."""
        rows = _as_index_array(rows)
        cols = _as_index_array(cols)
        vals = _as_value_array(vals)
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("triplet arrays must have equal length")
        if len(rows):
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("column index out of range")
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new_group = np.empty(len(rows), dtype=bool)
            new_group[0] = True
            new_group[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new_group)
            summed = np.add.reduceat(vals, starts)
            rows, cols, vals = rows[starts], cols[starts], summed
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        col_ptr = np.zeros(n_cols + 1, dtype=np.int64)
        np.add.at(col_ptr, cols + 1, 1)
        np.cumsum(col_ptr, out=col_ptr)
        return cls(n_rows, n_cols, col_ptr, rows, vals)

    @classmethod
    def from_dense(cls, arr) -> "CscMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        rows, cols = np.nonzero(arr)
        return cls.from_coo(arr.shape[0], arr.shape[1], rows, cols, arr[rows, cols])

    @classmethod
    def identity(cls, n: int) -> "CscMatrix":
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    @classmethod
    def empty(cls, n_rows: int, n_cols: int) -> "CscMatrix":
        return cls(n_rows, n_cols, np.zeros(n_cols + 1, dtype=np.int64),
                   np.empty(0, dtype=np.int64), np.empty(0))

    # -- accessors ----------------------------------------------------

    @property
    def nnz(self) -> int:
        return int(self.col_ptr[-1])

    @property
    def per_col_nnz(self) -> np.ndarray:
        return np.diff(self.col_ptr)

    def col(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Row indices and values of column j (read-only views)."""
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.row_idx[lo:hi], self.values[lo:hi]

    def entry_cols(self) -> np.ndarray:
        """Column index of each stored entry, in storage order."""
        return np.repeat(np.arange(self.n_cols, dtype=np.int64), self.per_col_nnz)

    def diagonal(self) -> np.ndarray:
        """Dense diagonal, with 0.0 at positions lacking a stored entry."""
        n = min(self.n_rows, self.n_cols)
        d = np.zeros(n)
        for j in range(n):
            rows, vals = self.col(j)
            pos = np.searchsorted(rows, j)
            if pos < len(rows) and rows[pos] == j:
                d[j] = vals[pos]
        return d

    def has_full_structural_diagonal(self) -> bool:
        n = min(self.n_rows, self.n_cols)
        for j in range(n):
            rows, _ = self.col(j)
            pos = np.searchsorted(rows, j)
            if pos >= len(rows) or rows[pos] != j:
                return False
        return True

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        out[self.row_idx, self.entry_cols()] = self.values
        return out

    def same_as(self, other: "CscMatrix") -> bool:
        """Exact pattern and value equality."""
        return (self.n_rows == other.n_rows and self.n_cols == other.n_cols
                and np.array_equal(self.col_ptr, other.col_ptr)
                and np.array_equal(self.row_idx, other.row_idx)
                and np.array_equal(self.values, other.values))


@dataclass
class SparseVector:
    """Sparse real vector with sorted indices and no stored zeros."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.indices = _as_index_array(self.indices)
        self.values = _as_value_array(self.values)
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values length mismatch")
        keep = self.values != 0.0
        if not keep.all():
            self.indices = self.indices[keep]
            self.values = self.values[keep]
        order = np.argsort(self.indices, kind="stable")
        if len(order) and np.any(np.diff(order) != 1):
            self.indices = self.indices[order]
            self.values = self.values[order]
        if len(self.indices):
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValueError("index out of range")
            if np.any(np.diff(self.indices) == 0):
                raise ValueError("duplicate indices in sparse vector")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("vector values must be finite")
        self.indices.flags.writeable = False
        self.values.flags.writeable = False

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=np.float64)
        idx = np.flatnonzero(x)
        return cls(len(x), idx, x[idx])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return len(self.indices)


@dataclass
class ColumnStats:
    """Per-column fill statistics and the irregular-column census.

    ``p`` is floor(nnz / n_cols) clamped to at least 1. A column is
    irregular when its entry count is at least ``factor * p``.
    """

    p: int
    per_col_nnz: np.ndarray
    p_d: int
    s: int
    factor: float
    irregular_cols: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


def column_stats(a: CscMatrix, factor: float = 10.0) -> ColumnStats:
    """Average/max column fill and the count of irregular columns."""
    if a.n_cols == 0 or a.nnz == 0:
        raise ValueError("column_stats requires a non-empty matrix")
    if factor <= 0:
        raise ValueError("factor must be positive")
    per_col = a.per_col_nnz
    p = max(1, a.nnz // a.n_cols)
    threshold = factor * p
    irregular = np.flatnonzero(per_col >= threshold)
    return ColumnStats(p=p, per_col_nnz=per_col, p_d=int(per_col.max()),
                       s=len(irregular), factor=factor, irregular_cols=irregular)


def matvec(a: CscMatrix, x) -> np.ndarray:
    """y = A x with a fixed column-major accumulation order."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.n_cols,):
        raise ValueError(f"dimension mismatch: matrix has {a.n_cols} columns, "
                         f"vector has shape {x.shape}")
    if a.nnz == 0:
        return np.zeros(a.n_rows)
    contrib = a.values * np.repeat(x, a.per_col_nnz)
    return np.bincount(a.row_idx, weights=contrib, minlength=a.n_rows)


def matvec_t(a: CscMatrix, x) -> np.ndarray:
    """y = A^T x (per-column dot products, deterministic)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.n_rows,):
        raise ValueError("dimension mismatch in transpose matvec")
    if a.nnz == 0:
        return np.zeros(a.n_cols)
    contrib = a.values * x[a.row_idx]
    return np.bincount(a.entry_cols(), weights=contrib, minlength=a.n_cols)


def transpose(a: CscMatrix) -> CscMatrix:
    return CscMatrix.from_coo(a.n_cols, a.n_rows, a.entry_cols(), a.row_idx, a.values)


def norm1(a: CscMatrix) -> float:
    """Maximum absolute column sum (0 for an empty matrix)."""
    if a.nnz == 0:
        return 0.0
    sums = np.bincount(a.entry_cols(), weights=np.abs(a.values), minlength=a.n_cols)
    return float(sums.max())


def norm_inf(a: CscMatrix) -> float:
    """Maximum absolute row sum (0 for an empty matrix)."""
    if a.nnz == 0:
        return 0.0
    sums = np.bincount(a.row_idx, weights=np.abs(a.values), minlength=a.n_rows)
    return float(sums.max())


def zero_free_diagonal_permutation(a: CscMatrix) -> np.ndarray:
    """Row permutation ``perm`` making every diagonal of A[perm, :] structural.

    Returns the identity when the diagonal is already zero-free. Raises
    :class:`StructurallySingularError` when the pattern has no perfect
    matching between columns and rows.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("square matrix required")
    n = a.n_rows
    if n == 0 or a.has_full_structural_diagonal():
        return np.arange(n, dtype=np.int64)
    graph = _scipy_csc((np.ones(a.nnz), a.row_idx.copy(), a.col_ptr.copy()),
                       shape=(n, n)).tocsr()
    match = _max_matching(graph, perm_type="row")
    if np.any(match < 0):
        raise StructurallySingularError(
            "no perfect matching: the matrix is structurally singular")
    # match[j] is the row holding a nonzero in column j
    return np.asarray(match, dtype=np.int64)


def permute_rows(a: CscMatrix, perm) -> CscMatrix:
    """Matrix whose row i is row perm[i] of ``a``."""
    perm = _as_index_array(perm)
    if perm.shape != (a.n_rows,):
        raise ValueError("permutation length mismatch")
    inv = np.empty_like(perm)
    inv[perm] = np.arange(a.n_rows, dtype=np.int64)
    return CscMatrix.from_coo(a.n_rows, a.n_cols, inv[a.row_idx], a.entry_cols(), a.values)


# -- Matrix Market I/O ----------------------------------------------------


def _open_text(source: PathOrStream, mode: str):
    if hasattr(source, "read") or hasattr(source, "write"):
        return source, False
    return open(source, mode), True


def read_matrix_market(source: PathOrStream) -> CscMatrix:
    """Parse a coordinate-format, real Matrix Market stream or file.

    Symmetric files are expanded to general storage. Duplicate entries are
    summed. Integer, complex and pattern fields are rejected.
    """
    stream, owned = _open_text(source, "r")
    try:
        header = stream.readline()
        if not header.startswith("%%MatrixMarket"):
            raise MatrixMarketError("missing %%MatrixMarket header")
        parts = header.strip().split()
        if len(parts) != 5:
            raise MatrixMarketError(f"malformed header: {header.strip()!r}")
        _, obj, fmt, fld, sym = (p.lower() for p in parts)
        if obj != "matrix":
            raise MatrixMarketError(f"unsupported object {obj!r}")
        if fmt != "coordinate":
            raise MatrixMarketError(f"unsupported format {fmt!r} (coordinate only)")
        if fld != "real":
            raise UnsupportedFieldError(f"unsupported field {fld!r} (real only)")
        if sym not in ("general", "symmetric"):
            raise UnsupportedFieldError(f"unsupported symmetry {sym!r}")

        size_line = None
        for line in stream:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            size_line = stripped
            break
        if size_line is None:
            raise MatrixMarketError("missing size line")
        try:
            m_str, n_str, nnz_str = size_line.split()
            n_rows, n_cols, nnz = int(m_str), int(n_str), int(nnz_str)
        except ValueError as exc:
            raise MatrixMarketError(f"malformed size line: {size_line!r}") from exc
        if n_rows < 0 or n_cols < 0 or nnz < 0:
            raise MatrixMarketError("negative dimension in size line")

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line in stream:
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            fields = stripped.split()
            if len(fields) != 3:
                raise MatrixMarketError(f"malformed entry line: {stripped!r}")
            if k >= nnz:
                raise MatrixMarketError("more entries than declared")
            try:
                i, j, v = int(fields[0]), int(fields[1]), float(fields[2])
            except ValueError as exc:
                raise MatrixMarketError(f"malformed entry line: {stripped!r}") from exc
            if not (1 <= i <= n_rows and 1 <= j <= n_cols):
                raise MatrixMarketError(
                    f"entry ({i}, {j}) outside declared {n_rows}x{n_cols} bounds")
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"declared {nnz} entries, found {k}")

        if sym == "symmetric":
            off = rows != cols
            rows, cols, vals = (np.concatenate([rows, cols[off]]),
                                np.concatenate([cols, rows[off]]),
                                np.concatenate([vals, vals[off]]))
        return CscMatrix.from_coo(n_rows, n_cols, rows, cols, vals)
    finally:
        if owned:
            stream.close()


def write_matrix_market(a: CscMatrix, dest: PathOrStream) -> None:
    """Write coordinate-format real general output, 1-based, column-major."""
    stream, owned = _open_text(dest, "w")
    try:
        stream.write("%%MatrixMarket matrix coordinate real general\n")
        stream.write(f"{a.n_rows} {a.n_cols} {a.nnz}\n")
        cols = a.entry_cols()
        for i, j, v in zip(a.row_idx, cols, a.values):
            stream.write(f"{i + 1} {j + 1} {v:.17g}\n")
    finally:
        if owned:
            stream.close()
