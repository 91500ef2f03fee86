"""Sparse matrix container and random instance generators.

Conventions used across the package:

* Dense matrices are 2-D C-contiguous float64 ndarrays.
* Sparse matrices are COO triples sorted lexicographically by (row, col)
  with no duplicate coordinates.  Indices are int64, values float64.
* When a nonzero travels with its coordinates it costs 3 words on the
  wire (row, col, value); a value-only payload costs 1 word per nonzero.
"""

from __future__ import annotations

import dataclasses

import numpy as np


class DimensionMismatchError(ValueError):
    """Operands do not conform."""


@dataclasses.dataclass(frozen=True)
class SparseMatrix:
    """COO matrix in canonical (row-major, duplicate-free) order.

    Build instances through :func:`from_coo`, which sorts and validates;
    the constructor itself trusts its arguments.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def with_values(self, vals: np.ndarray) -> "SparseMatrix":
        """Same sparsity pattern, new values."""
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape != self.vals.shape:
            raise DimensionMismatchError(
                f"expected {self.vals.shape[0]} values, got {vals.shape}"
            )
        return SparseMatrix(self.n_rows, self.n_cols, self.rows, self.cols, vals)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        out[self.rows, self.cols] = self.vals
        return out


def from_coo(n_rows, n_cols, rows, cols, vals) -> SparseMatrix:
    """Canonicalize a COO triple: validate bounds, sort, reject duplicates."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (rows.size == cols.size == vals.size):
        raise DimensionMismatchError(
            f"coordinate arrays disagree: {rows.size}, {cols.size}, {vals.size}"
        )
    if rows.size:
        if rows.min() < 0 or rows.max() >= n_rows:
            raise DimensionMismatchError(f"row index out of range for {n_rows} rows")
        if cols.min() < 0 or cols.max() >= n_cols:
            raise DimensionMismatchError(f"col index out of range for {n_cols} cols")
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size > 1:
        dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DimensionMismatchError(
                f"duplicate coordinate ({rows[k]}, {cols[k]})"
            )
    return SparseMatrix(int(n_rows), int(n_cols), rows, cols, vals)


def transpose(s: SparseMatrix) -> SparseMatrix:
    return from_coo(s.n_cols, s.n_rows, s.cols, s.rows, s.vals)


def phi(s: SparseMatrix, r: int) -> float:
    """Nonzero density relative to an n_cols-by-r dense factor."""
    return s.nnz / (s.n_cols * r)


def erdos_renyi(n_rows: int, n_cols: int, nnz_per_row: int, seed: int) -> SparseMatrix:
    """Random matrix with exactly ``nnz_per_row`` distinct columns per row.

    Column sets are drawn uniformly; values are Uniform(0, 1).  The result
    is deterministic for a given seed.
    """
    k = int(nnz_per_row)
    if not 0 < k <= n_cols:
        raise DimensionMismatchError(f"nnz_per_row={k} not in 1..{n_cols}")
    rng = np.random.default_rng(seed)
    if k == n_cols:
        cols = np.tile(np.arange(n_cols, dtype=np.int64), n_rows)
    elif k > n_cols // 2:
        # dense rows: rejection would thrash, sample via random-key argsort
        keys = rng.random((n_rows, n_cols))
        cols = np.sort(np.argsort(keys, axis=1)[:, :k], axis=1).ravel()
    else:
        draw = rng.integers(0, n_cols, size=(n_rows, k))
        draw.sort(axis=1)
        bad = (np.diff(draw, axis=1) == 0).any(axis=1)
        while bad.any():
            fresh = rng.integers(0, n_cols, size=(int(bad.sum()), k))
            fresh.sort(axis=1)
            draw[bad] = fresh
            bad = (np.diff(draw, axis=1) == 0).any(axis=1)
        cols = draw.astype(np.int64).ravel()
    rows = np.repeat(np.arange(n_rows, dtype=np.int64), k)
    vals = rng.random(rows.size)
    return SparseMatrix(int(n_rows), int(n_cols), rows, cols, vals)


def random_permute(
    s: SparseMatrix, seed: int
) -> tuple[SparseMatrix, np.ndarray, np.ndarray]:
    """Apply independent uniform row and column permutations.

    Returns the permuted matrix plus the permutations themselves;
    ``row_perm[i]`` is the new position of old row ``i``.
    """
    rng = np.random.default_rng(seed)
    row_perm = rng.permutation(s.n_rows)
    col_perm = rng.permutation(s.n_cols)
    out = from_coo(s.n_rows, s.n_cols, row_perm[s.rows], col_perm[s.cols], s.vals)
    return out, row_perm, col_perm
