"""Distributed sparse-times-dense kernels on a simulated message fabric.

The package couples three sampled/scaled matrix kernels with four
process-grid layouts, counts every word and message the simulated ranks
exchange, and checks the counts against an analytic cost model.
"""

from .algorithms import (
    FusionStrategy,
    IncompatibleStrategyError,
    RunResult,
    comm_breakdown,
    run_fusedmm,
    run_kernel,
)
from .costmodel import (
    elision_ratio,
    optimal_c,
    optimal_c_continuous,
    predict,
    select_algorithm,
)
from .fabric import CommStats, DeadlockError, Fabric, RankContext, spawn
from .kernels import (
    KernelMode,
    fusedmm_a,
    fusedmm_b,
    sddmm,
    sddmm_concat,
    spmm_a,
    spmm_b,
)
from .layout import (
    AlgorithmId,
    IndivisibleDimensionsError,
    InvalidReplicationError,
    MatrixRole,
    ProcessGrid,
    make_grid,
    make_plan,
    owner,
    partition_dense,
    partition_sparse,
    unpartition_dense,
    unpartition_sparse,
)
from .mmio import MatrixMarketError, read_matrix_market, write_matrix_market
from .sparse import (
    DimensionMismatchError,
    SparseMatrix,
    erdos_renyi,
    from_coo,
    phi,
    random_permute,
    transpose,
)

__version__ = "0.1.0"
