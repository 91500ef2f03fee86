"""Serial reference kernels.

These run on whole matrices and double as the per-rank local compute in
the simulated distributed algorithms.  All heavy lifting is gather plus
einsum or index-accumulate, so results are bitwise reproducible: no
BLAS-order nondeterminism enters the distributed paths.

A thread-local tally counts multiply-accumulate operations so callers
(the fabric, load-balance checks) can attribute work per rank.
"""

from __future__ import annotations

import enum
import threading

import numpy as np

from .sparse import DimensionMismatchError, SparseMatrix, transpose


class KernelMode(enum.Enum):
    SDDMM = "sddmm"
    SPMM_A = "spmm_a"
    SPMM_B = "spmm_b"
    FUSEDMM_A = "fusedmm_a"
    FUSEDMM_B = "fusedmm_b"


FUSED_MODES = (KernelMode.FUSEDMM_A, KernelMode.FUSEDMM_B)

_tally = threading.local()


def _bump(n: int) -> None:
    _tally.n = getattr(_tally, "n", 0) + int(n)


def reset_flops() -> None:
    _tally.n = 0


def flop_count() -> int:
    """Multiply-accumulates tallied on this thread since the last reset."""
    return getattr(_tally, "n", 0)


def _factor(name: str, x, rows_expected: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {x.shape}")
    if x.shape[0] != rows_expected:
        raise DimensionMismatchError(
            f"{name} has {x.shape[0]} rows, expected {rows_expected}"
        )
    return x


def dot_rows(a: np.ndarray, b: np.ndarray, rows, cols) -> np.ndarray:
    """Row-wise dot products <a[rows[k]], b[cols[k]]> for each k."""
    dots = np.einsum("ij,ij->i", a[rows], b[cols])
    _bump(len(rows) * a.shape[1])
    return dots


def sddmm(s: SparseMatrix, a, b) -> SparseMatrix:
    """Sampled dense-dense product: out_ij = s_ij * <a_i, b_j>."""
    a = _factor("a", a, s.n_rows)
    b = _factor("b", b, s.n_cols)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(
            f"feature widths differ: {a.shape[1]} vs {b.shape[1]}"
        )
    return s.with_values(s.vals * dot_rows(a, b, s.rows, s.cols))


def sddmm_concat(s: SparseMatrix, a, b, weights) -> SparseMatrix:
    """SDDMM variant scoring edges by w . [a_i ; b_j] instead of <a_i, b_j>."""
    a = _factor("a", a, s.n_rows)
    b = _factor("b", b, s.n_cols)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(
            f"feature widths differ: {a.shape[1]} vs {b.shape[1]}"
        )
    r = a.shape[1]
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size != 2 * r:
        raise DimensionMismatchError(f"weights must have length {2 * r}")
    scores = a[s.rows] @ weights[:r] + b[s.cols] @ weights[r:]
    _bump(2 * s.nnz * r)
    return s.with_values(s.vals * scores)


def spmm_a(s: SparseMatrix, b) -> np.ndarray:
    """Sparse-times-dense: returns s @ b, shape (s.n_rows, r)."""
    b = _factor("b", b, s.n_cols)
    out = np.zeros((s.n_rows, b.shape[1]))
    np.add.at(out, s.rows, s.vals[:, None] * b[s.cols])
    _bump(s.nnz * b.shape[1])
    return out


def spmm_b(s: SparseMatrix, a) -> np.ndarray:
    """Transposed product s.T @ a, realized through spmm_a for exact duality."""
    a = _factor("a", a, s.n_rows)
    return spmm_a(transpose(s), a)


def fusedmm_a(s: SparseMatrix, a, b) -> np.ndarray:
    return spmm_a(sddmm(s, a, b), b)


def fusedmm_b(s: SparseMatrix, a, b) -> np.ndarray:
    return spmm_b(sddmm(s, a, b), a)
