"""Regular/irregular splitting A = A_tilde + U V^T and matrix classifiers.

Columns whose entry count reaches ``factor * p`` (p the floor-average
column fill, clamped to 1) are irregular. Each irregular column of
A_tilde keeps its diagonal plus ``p_kept - 1`` further entries, chosen
either nearest to the diagonal or largest in magnitude; everything
dropped lands in the corresponding column of U. V is implicit: it selects
the irregular column positions, so U V^T scatters U's columns back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu as _dense_lu

from .sparse_core import CscMatrix, column_stats

_M_MATRIX_DENSE_CUTOFF = 400


class ZeroDiagonalError(ValueError):
    """An irregular column lacks a structural diagonal entry.

    Apply :func:`saikit.sparse_core.zero_free_diagonal_permutation` first.
    """


@dataclass
class SplitSystem:
    a_tilde: CscMatrix
    u: CscMatrix
    irregular_cols: np.ndarray
    strategy: str
    p_kept: int

    @property
    def s(self) -> int:
        return len(self.irregular_cols)


@dataclass
class MatrixClassReport:
    strict_row_dd: bool
    strict_col_dd: bool
    irreducible: bool
    m_matrix: bool
    m_matrix_certified: bool
    beta: np.ndarray
    beta_tilde: np.ndarray | None = None


def _keep_indices(rows: np.ndarray, vals: np.ndarray, j: int,
                  p_kept: int, strategy: str) -> np.ndarray:
    """Positions (into rows) retained in the sparsified column j."""
    diag_pos = int(np.searchsorted(rows, j))
    if diag_pos >= len(rows) or rows[diag_pos] != j:
        raise ZeroDiagonalError(
            f"irregular column {j} has no structural diagonal; "
            "apply zero_free_diagonal_permutation before splitting")
    if strategy == "nearest":
        # distance ties resolved toward the smaller row index
        order = np.lexsort((rows, np.abs(rows - j)))
    elif strategy == "largest":
        others = np.delete(np.arange(len(rows)), diag_pos)
        ranked = others[np.lexsort((rows[others], -np.abs(vals[others])))]
        order = np.concatenate([[diag_pos], ranked])
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return np.sort(order[:p_kept])


def split(a: CscMatrix, factor: float = 10.0, strategy: str = "nearest",
          p_kept: int | None = None) -> SplitSystem:
    """Split off the irregular columns of a square matrix.

    Irregular columns with at most ``p_kept`` entries are left untouched
    and not reported. ``s == 0`` returns A itself with an n-by-0 U.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("square matrix required")
    stats = column_stats(a, factor)
    if p_kept is None:
        p_kept = stats.p
    if p_kept < 1:
        raise ValueError("p_kept must be at least 1")
    irregular = [int(j) for j in stats.irregular_cols
                 if stats.per_col_nnz[j] > p_kept]
    if not irregular:
        return SplitSystem(a_tilde=a, u=CscMatrix.empty(a.n_rows, 0),
                           irregular_cols=np.empty(0, dtype=np.int64),
                           strategy=strategy, p_kept=p_kept)

    keep_rows, keep_vals, keep_cols = [], [], []
    u_rows, u_vals, u_cols = [], [], []
    irregular_set = set(irregular)
    for j in range(a.n_cols):
        rows, vals = a.col(j)
        if j in irregular_set:
            kept = _keep_indices(rows, vals, j, p_kept, strategy)
            mask = np.zeros(len(rows), dtype=bool)
            mask[kept] = True
            keep_rows.append(rows[mask])
            keep_vals.append(vals[mask])
            keep_cols.append(np.full(int(mask.sum()), j, dtype=np.int64))
            u_idx = len(u_cols)
            u_rows.append(rows[~mask])
            u_vals.append(vals[~mask])
            u_cols.append(np.full(int((~mask).sum()), u_idx, dtype=np.int64))
        else:
            keep_rows.append(rows)
            keep_vals.append(vals)
            keep_cols.append(np.full(len(rows), j, dtype=np.int64))

    a_tilde = CscMatrix.from_coo(a.n_rows, a.n_cols,
                                 np.concatenate(keep_rows),
                                 np.concatenate(keep_cols),
                                 np.concatenate(keep_vals))
    u = CscMatrix.from_coo(a.n_rows, len(irregular),
                           np.concatenate(u_rows),
                           np.concatenate(u_cols),
                           np.concatenate(u_vals))
    return SplitSystem(a_tilde=a_tilde, u=u,
                       irregular_cols=np.asarray(irregular, dtype=np.int64),
                       strategy=strategy, p_kept=p_kept)


def reconstruct(sys: SplitSystem) -> CscMatrix:
    """A_tilde + U V^T, for checking the splitting identity."""
    at = sys.a_tilde
    rows = [at.row_idx]
    cols = [at.entry_cols()]
    vals = [at.values]
    for i, j in enumerate(sys.irregular_cols):
        u_r, u_v = sys.u.col(i)
        rows.append(u_r)
        cols.append(np.full(len(u_r), j, dtype=np.int64))
        vals.append(u_v)
    return CscMatrix.from_coo(at.n_rows, at.n_cols, np.concatenate(rows),
                              np.concatenate(cols), np.concatenate(vals))


# -- classifiers -----------------------------------------------------------


def _row_margins(a: CscMatrix) -> np.ndarray:
    """beta_i = |a_ii| - sum_{j != i} |a_ij| for every row."""
    absdiag = np.abs(a.diagonal())
    rowsums = np.bincount(a.row_idx, weights=np.abs(a.values), minlength=a.n_rows)
    return absdiag - (rowsums - absdiag)


def _col_margins(a: CscMatrix) -> np.ndarray:
    absdiag = np.abs(a.diagonal())
    colsums = np.bincount(a.entry_cols(), weights=np.abs(a.values), minlength=a.n_cols)
    return absdiag - (colsums - absdiag)


def _strongly_connected(a: CscMatrix) -> bool:
    """Strong connectivity of the pattern digraph (edge j -> i per entry)."""
    n = a.n_rows
    if n <= 1:
        return True

    def reaches_all(neighbors) -> bool:
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        count = 1
        while stack:
            v = stack.pop()
            for w in neighbors(v):
                if not seen[w]:
                    seen[w] = True
                    count += 1
                    stack.append(int(w))
        return count == n

    fwd_adj = [a.col(j)[0] for j in range(n)]
    rev_adj = [[] for _ in range(n)]
    for j in range(n):
        for i in fwd_adj[j]:
            rev_adj[int(i)].append(j)
    return (reaches_all(lambda v: fwd_adj[v])
            and reaches_all(lambda v: rev_adj[v]))


def classify(a: CscMatrix,
             m_matrix_dense_cutoff: int = _M_MATRIX_DENSE_CUTOFF) -> MatrixClassReport:
    """Dominance, irreducibility and M-matrix flags for a square matrix.

    The M-matrix flag combines the sign-pattern test with an
    inverse-nonnegativity certificate computed densely; above
    ``m_matrix_dense_cutoff`` only the sign pattern is checked and
    ``m_matrix_certified`` is False.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("square matrix required")
    beta = _row_margins(a)
    gamma = _col_margins(a)
    diag = a.diagonal()
    off_mask = a.row_idx != a.entry_cols()
    sign_ok = bool(np.all(diag > 0.0) and np.all(a.values[off_mask] <= 0.0))
    certified = False
    m_matrix = sign_ok
    if sign_ok and a.n_rows <= m_matrix_dense_cutoff:
        certified = True
        try:
            inv = np.linalg.inv(a.to_dense())
            m_matrix = bool(np.all(inv >= -1e-12))
        except np.linalg.LinAlgError:
            m_matrix = False
    return MatrixClassReport(strict_row_dd=bool(np.all(beta > 0.0)),
                             strict_col_dd=bool(np.all(gamma > 0.0)),
                             irreducible=_strongly_connected(a),
                             m_matrix=m_matrix,
                             m_matrix_certified=certified,
                             beta=beta)


def dominance_margins(a: CscMatrix, a_tilde: CscMatrix,
                      ) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Row dominance margins of both matrices and the 1/min-margin bounds.

    The bounds dominate the infinity norms of the inverses. Requires both
    inputs strictly row diagonally dominant; margins of the sparsified
    matrix can never fall below those of the original.
    """
    beta = _row_margins(a)
    beta_tilde = _row_margins(a_tilde)
    if beta.min() <= 0.0 or beta_tilde.min() <= 0.0:
        raise ValueError("both matrices must be strictly row diagonally dominant")
    if np.any(beta_tilde < beta - 1e-12 * np.maximum(1.0, np.abs(beta))):
        raise ValueError("sparsified margins fell below the originals; "
                         "the second matrix is not a sparsification of the first")
    return beta, beta_tilde, 1.0 / float(beta.min()), 1.0 / float(beta_tilde.min())


def condition_estimates(a: CscMatrix, a_tilde: CscMatrix | None = None,
                        max_n: int = 500) -> dict:
    """Dense 1-norm condition estimates, for matrices up to ``max_n`` only."""
    out: dict = {}
    if a.n_rows != a.n_cols or a.n_rows > max_n:
        return out

    def kappa(mat: CscMatrix) -> float | None:
        dense = mat.to_dense()
        try:
            inv = np.linalg.inv(dense)
        except np.linalg.LinAlgError:
            return None
        return float(np.abs(dense).sum(axis=0).max() * np.abs(inv).sum(axis=0).max())

    out["kappa_1"] = kappa(a)
    if a_tilde is not None:
        out["kappa_1_tilde"] = kappa(a_tilde)
    return out


def dense_lu_min_pivot(a: CscMatrix) -> float:
    """Smallest absolute pivot of a dense LU, a cheap nonsingularity witness."""
    _, _, u = _dense_lu(a.to_dense())
    return float(np.abs(np.diag(u)).min())


# -- generators ------------------------------------------------------------

_KINDS = ("dominant-row", "dominant-col", "m-matrix", "irreducible-dd")


def generate_test_matrix(kind: str, n: int, density: float | None = None,
                         planted_dense_cols: int = 0, seed: int = 0) -> CscMatrix:
    """Random member of a matrix class, optionally with planted dense columns.

    ``density`` is the off-diagonal fill fraction per column (default about
    three entries). Planted columns are fully dense with entries scaled by
    1/n; diagonals are set last from the realized row or column sums, so
    the class membership holds by construction.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {_KINDS}")
    if n < 2:
        raise ValueError("n must be at least 2")
    if planted_dense_cols < 0 or planted_dense_cols > n:
        raise ValueError("planted_dense_cols out of range")
    if density is None:
        density = min(1.0, 3.0 / (n - 1))
    if density < 0 or density > 1:
        raise ValueError("density must lie in [0, 1]")
    k_off = int(round(density * (n - 1)))
    if kind == "irreducible-dd" and k_off < 1:
        raise ValueError("density too low for irreducibility")

    rng = np.random.default_rng(seed)
    rows_l, cols_l, vals_l = [], [], []
    dense_cols = set(int(j) for j in
                     rng.choice(n, size=planted_dense_cols, replace=False)) \
        if planted_dense_cols else set()

    def magnitudes(count: int) -> np.ndarray:
        return rng.uniform(0.1, 1.0, size=count)

    def signed(count: int) -> np.ndarray:
        mags = magnitudes(count)
        if kind == "m-matrix":
            return -mags
        return mags * rng.choice((-1.0, 1.0), size=count)

    for j in range(n):
        if j in dense_cols:
            r = np.concatenate([np.arange(j), np.arange(j + 1, n)])
            v = signed(n - 1) / n
        else:
            choices = np.concatenate([np.arange(j), np.arange(j + 1, n)])
            r = rng.choice(choices, size=min(k_off, n - 1), replace=False)
            v = signed(len(r))
        if kind == "irreducible-dd":
            cyc = (j + 1) % n
            if cyc not in set(int(x) for x in r):
                r = np.concatenate([r, [cyc]])
                v = np.concatenate([v, signed(1)])
        rows_l.append(r)
        cols_l.append(np.full(len(r), j, dtype=np.int64))
        vals_l.append(v)

    rows = np.concatenate(rows_l)
    cols = np.concatenate(cols_l)
    vals = np.concatenate(vals_l)

    abs_rowsums = np.bincount(rows, weights=np.abs(vals), minlength=n)
    abs_colsums = np.bincount(cols, weights=np.abs(vals), minlength=n)
    margins = rng.uniform(0.5, 1.5, size=n)
    if kind in ("dominant-row", "m-matrix"):
        diag = abs_rowsums + margins
    elif kind == "dominant-col":
        diag = abs_colsums + margins
    else:  # irreducible-dd: weak row dominance, strict in one row
        diag = abs_rowsums.copy()
        diag[diag == 0.0] = 1.0
        diag[int(rng.integers(n))] += margins[0]

    rows = np.concatenate([rows, np.arange(n)])
    cols = np.concatenate([cols, np.arange(n)])
    vals = np.concatenate([vals, diag])
    return CscMatrix.from_coo(n, n, rows, cols, vals)
