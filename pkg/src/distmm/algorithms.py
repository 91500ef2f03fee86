"""Drivers that run a kernel on a process grid and reassemble the output.

`run_kernel` handles the three base kernels, `run_fusedmm` the fused
pipelines with their elision strategies.  Both partition the global
operands, spawn one rank program per process, and stitch the returned
blocks back into a global matrix, so callers never see the simulated
fabric directly.

Strategy compatibility is checked up front: local kernel fusion needs
the stationary-S dense 1.5D layout, and replication reuse needs a
replicated dense operand to reuse, which the sparse-shifting 2.5D
layout does not have.  A fused kernel whose native pipeline replicates
the wrong operand for the requested strategy is run as its mirror image
on the stored transpose of S with the dense operands swapped.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import d15, d25, fabric, kernels
from .fabric import CommStats
from .kernels import FUSED_MODES, KernelMode
from .layout import (
    AlgorithmId,
    DenseBlock,
    IndivisibleDimensionsError,
    LocalSlice,
    MatrixRole,
    ProcessGrid,
    global_divisors,
    make_grid,
    make_plan,
    partition_dense,
    partition_sparse,
    unpartition_dense,
    unpartition_sparse,
)
from .sparse import DimensionMismatchError, SparseMatrix


class FusionStrategy(enum.Enum):
    NO_ELISION = "none"
    REPLICATION_REUSE = "reuse"
    LOCAL_KERNEL_FUSION = "fusion"


class IncompatibleStrategyError(ValueError):
    """Raised when a fusion strategy cannot run on the chosen layout."""


_PROGRAMS = {
    AlgorithmId.D15_DENSE_SHIFT: d15.dense_program,
    AlgorithmId.D15_SPARSE_SHIFT: d15.sparse_program,
    AlgorithmId.D25_DENSE_REPL: d25.dense_program,
    AlgorithmId.D25_SPARSE_REPL: d25.sparse_program,
}

# which input roles each rank program actually reads
_NEEDS = {
    KernelMode.SDDMM: (MatrixRole.A, MatrixRole.B),
    KernelMode.SPMM_A: (MatrixRole.B,),
    KernelMode.SPMM_B: (MatrixRole.A,),
    KernelMode.FUSEDMM_A: (MatrixRole.A, MatrixRole.B),
    KernelMode.FUSEDMM_B: (MatrixRole.A, MatrixRole.B),
}

_OUTPUT_ROLE = {
    KernelMode.SDDMM: MatrixRole.S,
    KernelMode.SPMM_A: MatrixRole.A,
    KernelMode.SPMM_B: MatrixRole.B,
    KernelMode.FUSEDMM_A: MatrixRole.A,
    KernelMode.FUSEDMM_B: MatrixRole.B,
}


@dataclass(frozen=True)
class RunResult:
    """Distributed run output plus per-rank communication counters."""

    output: object
    stats: list
    grid: ProcessGrid
    mode: KernelMode
    dims: tuple
    padded_dims: tuple

    @property
    def total_words(self) -> int:
        return sum(s.sent_total for s in self.stats)


def _as_dense(name: str, x, rows: int, r: int | None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] != rows:
        raise DimensionMismatchError(
            f"{name} has {arr.shape[0]} rows, expected {rows}"
        )
    if r is not None and arr.shape[1] != r:
        raise DimensionMismatchError(
            f"{name} has width {arr.shape[1]}, expected {r}"
        )
    return np.ascontiguousarray(arr)


def _serial(mode: KernelMode, s, a, b):
    if mode is KernelMode.SDDMM:
        return kernels.sddmm(s, a, b)
    if mode is KernelMode.SPMM_A:
        return kernels.spmm_a(s, b)
    if mode is KernelMode.SPMM_B:
        return kernels.spmm_b(s, a)
    if mode is KernelMode.FUSEDMM_A:
        return kernels.fusedmm_a(s, a, b)
    return kernels.fusedmm_b(s, a, b)


def _pad_dense(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    if x.shape == (rows, cols):
        return x
    out = np.zeros((rows, cols))
    out[: x.shape[0], : x.shape[1]] = x
    return out


def _pad_sparse(s: SparseMatrix, rows: int, cols: int) -> SparseMatrix:
    if (rows, cols) == s.shape:
        return s
    return SparseMatrix(rows, cols, s.rows, s.cols, s.vals)


def _reassemble_dense(results, plan, rows: int, cols: int):
    bh = rows // plan.part_grid[0]
    bw = cols // plan.part_grid[1]
    slices = []
    for rank, res in enumerate(results):
        blocks = [
            DenseBlock(bid, bid[0] * bh, bid[1] * bw, data)
            for bid, data in res["dense"]
        ]
        slices.append(LocalSlice(rank, blocks))
    return unpartition_dense(slices, plan, rows, cols)


def _reassemble_sparse(results, s_slices, plan, rows: int, cols: int):
    slices = []
    for rank, res in enumerate(results):
        by_key = {(bid, ci): vals for bid, ci, vals in res["sparse"]}
        blocks = []
        for blk in s_slices[rank].blocks:
            vals = by_key[(blk.block_id, blk.chunk_index)]
            blocks.append(replace(blk, vals=np.asarray(vals)))
        slices.append(LocalSlice(rank, blocks))
    return unpartition_sparse(slices, plan, rows, cols)


def _launch(
    grid: ProcessGrid,
    mode: KernelMode,
    strategy,
    s: SparseMatrix,
    a,
    b,
    r: int,
    pad: bool,
    executor: str,
    debug: bool,
):
    m, n = s.shape
    plans = {role: make_plan(grid, role) for role in MatrixRole}
    md, nd, rd = global_divisors(grid)
    big_m = -(-m // md) * md
    big_n = -(-n // nd) * nd
    big_r = -(-r // rd) * rd
    if not pad and (big_m, big_n, big_r) != (m, n, r):
        raise IndivisibleDimensionsError(
            f"dims {(m, n, r)} need divisors {(md, nd, rd)} on this grid; "
            "pass pad=True to zero-pad"
        )

    s_p = _pad_sparse(s, big_m, big_n)
    s_slices = partition_sparse(s_p, plans[MatrixRole.S], pad=True)
    needs = _NEEDS[mode]
    a_slices = b_slices = None
    if MatrixRole.A in needs:
        a_slices = partition_dense(
            _pad_dense(a, big_m, big_r), plans[MatrixRole.A], pad=True
        )
    if MatrixRole.B in needs:
        b_slices = partition_dense(
            _pad_dense(b, big_n, big_r), plans[MatrixRole.B], pad=True
        )

    strategy_token = strategy.value if strategy is not None else None
    inputs = []
    for rank in range(grid.p):
        inputs.append(
            {
                "mode": mode,
                "strategy": strategy_token,
                "dims": (big_m, big_n, big_r),
                "s": s_slices[rank].blocks,
                "a": a_slices[rank].blocks if a_slices else None,
                "b": b_slices[rank].blocks if b_slices else None,
            }
        )

    program = _PROGRAMS[grid.algorithm]
    results, stats = fabric.spawn(
        grid, program, inputs, executor=executor, debug=debug
    )

    out_role = _OUTPUT_ROLE[mode]
    if out_role is MatrixRole.S:
        padded = _reassemble_sparse(results, s_slices, plans[MatrixRole.S], big_m, big_n)
        output = SparseMatrix(m, n, padded.rows, padded.cols, padded.vals)
    elif out_role is MatrixRole.A:
        padded = _reassemble_dense(results, plans[MatrixRole.A], big_m, big_r)
        output = padded[:m, :r].copy()
    else:
        padded = _reassemble_dense(results, plans[MatrixRole.B], big_n, big_r)
        output = padded[:n, :r].copy()
    return output, stats, (big_m, big_n, big_r)


def _run(grid, mode, strategy, s, a, b, pad, executor, debug):
    if not isinstance(s, SparseMatrix):
        raise TypeError("s must be a SparseMatrix")
    if grid.algorithm not in _PROGRAMS:
        raise ValueError(f"unknown algorithm {grid.algorithm!r}")
    m, n = s.shape
    r = None
    if a is not None:
        a = _as_dense("a", a, m, None)
        r = a.shape[1]
    if b is not None:
        b = _as_dense("b", b, n, r)
        r = b.shape[1]
    needs = _NEEDS[mode]
    if MatrixRole.A in needs and a is None:
        raise DimensionMismatchError("kernel requires the dense operand a")
    if MatrixRole.B in needs and b is None:
        raise DimensionMismatchError("kernel requires the dense operand b")

    if grid.p == 1:
        kernels.reset_flops()
        out = _serial(mode, s, a, b)
        stats = CommStats()
        stats.flops = kernels.flop_count()
        return RunResult(out, [stats], grid, mode, (m, n, r), (m, n, r))

    output, stats, padded = _launch(
        grid, mode, strategy, s, a, b, r, pad, executor, debug
    )
    return RunResult(output, stats, grid, mode, (m, n, r), padded)


def run_kernel(
    alg: AlgorithmId,
    mode: KernelMode,
    s: SparseMatrix,
    a=None,
    b=None,
    grid: ProcessGrid | None = None,
    *,
    p: int | None = None,
    c: int = 1,
    pad: bool = False,
    executor: str = "threaded",
    debug: bool = False,
) -> RunResult:
    """Run one base kernel (sddmm, spmm_a, or spmm_b) on a grid."""
    if mode in FUSED_MODES:
        raise ValueError("fused modes go through run_fusedmm")
    if grid is None:
        if p is None:
            raise ValueError("pass either a grid or a process count p")
        grid = make_grid(alg, p, c)
    elif grid.algorithm is not alg:
        raise ValueError("grid was built for a different algorithm")
    return _run(grid, mode, None, s, a, b, pad, executor, debug)


def _needs_transpose(mode: KernelMode, strategy: FusionStrategy) -> bool:
    if strategy is FusionStrategy.REPLICATION_REUSE:
        return mode is KernelMode.FUSEDMM_A
    if strategy is FusionStrategy.LOCAL_KERNEL_FUSION:
        return mode is KernelMode.FUSEDMM_B
    return False


def run_fusedmm(
    alg: AlgorithmId,
    strategy: FusionStrategy,
    mode: KernelMode,
    s: SparseMatrix,
    a,
    b,
    grid: ProcessGrid | None = None,
    *,
    s_t: SparseMatrix | None = None,
    p: int | None = None,
    c: int = 1,
    pad: bool = False,
    executor: str = "threaded",
    debug: bool = False,
) -> RunResult:
    """Run a fused sample-scale-aggregate pipeline under one strategy.

    When the native pipeline replicates the wrong operand for the
    requested strategy, the mirror kernel is run on `s_t` (the stored
    transpose of `s`) with the dense operands swapped; `s_t` must then
    be supplied by the caller, since building it on the fly would hide
    a real preprocessing cost.
    """
    if mode not in FUSED_MODES:
        raise ValueError("run_fusedmm handles fused modes only")
    strategy = FusionStrategy(strategy)
    if grid is None:
        if p is None:
            raise ValueError("pass either a grid or a process count p")
        grid = make_grid(alg, p, c)
    elif grid.algorithm is not alg:
        raise ValueError("grid was built for a different algorithm")
    if strategy is FusionStrategy.LOCAL_KERNEL_FUSION and alg is not AlgorithmId.D15_DENSE_SHIFT:
        raise IncompatibleStrategyError(
            "local kernel fusion needs the stationary-S dense 1.5D layout"
        )
    if strategy is FusionStrategy.REPLICATION_REUSE and alg is AlgorithmId.D25_SPARSE_REPL:
        raise IncompatibleStrategyError(
            "replication reuse needs a fiber-replicated dense operand, "
            "which the sparse-shifting 2.5D layout never forms"
        )

    if not isinstance(s, SparseMatrix):
        raise TypeError("s must be a SparseMatrix")

    run_mode, run_s = mode, s
    if _needs_transpose(mode, strategy):
        if s_t is None:
            raise ValueError(
                "this mode and strategy run as the mirror kernel; pass the "
                "stored transpose via s_t"
            )
        if s_t.shape != (s.n_cols, s.n_rows) or s_t.nnz != s.nnz:
            raise DimensionMismatchError("s_t does not match the transpose of s")
        run_mode = (
            KernelMode.FUSEDMM_B
            if mode is KernelMode.FUSEDMM_A
            else KernelMode.FUSEDMM_A
        )
        run_s = s_t
        a, b = b, a

    m, n = run_s.shape
    a = _as_dense("a", a, m, None)
    b = _as_dense("b", b, n, a.shape[1])

    if grid.p == 1:
        kernels.reset_flops()
        out = _serial(run_mode, run_s, a, b)
        stats = CommStats()
        stats.flops = kernels.flop_count()
        return RunResult(out, [stats], grid, mode, (m, n, a.shape[1]), (m, n, a.shape[1]))

    output, stats, padded = _launch(
        grid, run_mode, strategy, run_s, a, b, a.shape[1], pad, executor, debug
    )
    return RunResult(output, stats, grid, mode, (m, n, a.shape[1]), padded)


def comm_breakdown(stats) -> dict:
    """Summarise per-rank counters: maxima model the critical path,
    totals the aggregate traffic."""
    if not stats:
        return {
            "max_rank_cost": 0,
            "propagation_words": 0,
            "replication_words": 0,
            "dense_words": 0,
            "sparse_words": 0,
            "messages": 0,
            "total_words": 0,
            "flops": 0,
        }
    return {
        "max_rank_cost": max(s.max_traffic for s in stats),
        "propagation_words": max(s.propagation_words for s in stats),
        "replication_words": max(s.replication_words for s in stats),
        "dense_words": max(s.dense_words for s in stats),
        "sparse_words": max(s.sparse_words for s in stats),
        "messages": max(s.messages_total for s in stats),
        "total_words": sum(s.sent_total for s in stats),
        "flops": max(s.flops for s in stats),
    }
