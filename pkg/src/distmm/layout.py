"""Process grids, block ownership, and matrix partitioners.

Two layers of truth live here.  ``owner`` answers "which grid coordinate
holds block (i, j) before replication" in the published tabular form.
``part_owner`` is what the partitioners actually use: it folds in the
initial skew of the 2.5D algorithms (so no startup shift is ever needed
or counted) and, for the 2.5D sparse-replicating layout, the executable
fine-slab decomposition of the dense operands.

Rank numbering is layer-major: all ranks of fiber layer 0 first, then
layer 1, and so on.
"""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from . import sparse
from .sparse import SparseMatrix


class AlgorithmId(enum.Enum):
    D15_DENSE_SHIFT = "d15-dense"
    D15_SPARSE_SHIFT = "d15-sparse"
    D25_DENSE_REPL = "d25-dense"
    D25_SPARSE_REPL = "d25-sparse"


ALGORITHMS_15D = (AlgorithmId.D15_DENSE_SHIFT, AlgorithmId.D15_SPARSE_SHIFT)
ALGORITHMS_25D = (AlgorithmId.D25_DENSE_REPL, AlgorithmId.D25_SPARSE_REPL)


class MatrixRole(enum.Enum):
    A = "A"
    B = "B"
    S = "S"  # S and its same-shaped SDDMM output share one distribution


class InvalidReplicationError(ValueError):
    pass


class IndivisibleDimensionsError(ValueError):
    pass


def _isqrt_exact(x: int) -> int | None:
    r = math.isqrt(x)
    return r if r * r == x else None


@dataclasses.dataclass(frozen=True)
class ProcessGrid:
    """(p/c) x c grid for 1.5D algorithms, q x q x c with q = sqrt(p/c) for 2.5D."""

    algorithm: AlgorithmId
    p: int
    c: int

    @property
    def is_25d(self) -> bool:
        return self.algorithm in ALGORITHMS_25D

    @property
    def g(self) -> int:
        """Ring length within a layer (1.5D only)."""
        return self.p // self.c

    @property
    def q(self) -> int:
        return math.isqrt(self.p // self.c)

    @property
    def dims(self) -> tuple[int, ...]:
        if self.is_25d:
            return (self.q, self.q, self.c)
        return (self.g, self.c)

    @property
    def fiber_axis(self) -> int:
        return 2 if self.is_25d else 1

    def axis_size(self, axis: int) -> int:
        return self.dims[axis]

    def rank_of(self, coord: tuple[int, ...]) -> int:
        if self.is_25d:
            u, v, w = coord
            return w * self.q * self.q + u * self.q + v
        u, v = coord
        return v * self.g + u

    def coord_of(self, rank: int) -> tuple[int, ...]:
        if self.is_25d:
            layer, rem = divmod(rank, self.q * self.q)
            u, v = divmod(rem, self.q)
            return (u, v, layer)
        v, u = divmod(rank, self.g)
        return (u, v)

    def axis_group(self, rank: int, axis: int) -> list[int]:
        """Ranks sharing this rank's ring along `axis`, ordered by coordinate."""
        coord = list(self.coord_of(rank))
        out = []
        for k in range(self.axis_size(axis)):
            coord[axis] = k
            out.append(self.rank_of(tuple(coord)))
        return out


def make_grid(algorithm: AlgorithmId, p: int, c: int) -> ProcessGrid:
    if c < 1 or p < 1:
        raise InvalidReplicationError(f"p={p}, c={c} must be positive")
    if c > p or p % c != 0:
        raise InvalidReplicationError(f"replication factor {c} must divide p={p}")
    if algorithm in ALGORITHMS_25D and _isqrt_exact(p // c) is None:
        raise InvalidReplicationError(
            f"p/c = {p // c} is not a perfect square, required for {algorithm.value}"
        )
    return ProcessGrid(algorithm, p, c)


@dataclasses.dataclass(frozen=True)
class DistributionPlan:
    """Block grid and owner map for one matrix role under one algorithm.

    ``block_grid`` is the published shape; ``part_grid`` is the grid the
    partitioner cuts along, which differs only for the 2.5D
    sparse-replicating dense operands (fine feature slabs).
    """

    grid: ProcessGrid
    role: MatrixRole
    block_grid: tuple[int, int]
    part_grid: tuple[int, int]
    replicated_fiber: bool = False


def make_plan(grid: ProcessGrid, role: MatrixRole) -> DistributionPlan:
    p, c, alg = grid.p, grid.c, grid.algorithm
    if alg is AlgorithmId.D15_DENSE_SHIFT:
        shapes = {
            MatrixRole.A: (p, 1),
            MatrixRole.B: (p, 1),
            MatrixRole.S: (p // c, p),
        }
        return DistributionPlan(grid, role, shapes[role], shapes[role])
    if alg is AlgorithmId.D15_SPARSE_SHIFT:
        shapes = {
            MatrixRole.A: (p, p // c),
            MatrixRole.B: (p, p // c),
            MatrixRole.S: (1, p),
        }
        return DistributionPlan(grid, role, shapes[role], shapes[role])
    q = grid.q
    if alg is AlgorithmId.D25_DENSE_REPL:
        shapes = {
            MatrixRole.A: (q * c, q),
            MatrixRole.B: (q * c, q),
            MatrixRole.S: (q, q * c),
        }
        return DistributionPlan(grid, role, shapes[role], shapes[role])
    # 2.5D sparse-replicate: dense operands are cut into q row blocks times
    # q*c fine feature slabs; the published p x q / q x p grids are not
    # realizable together with a stationary fiber-replicated S.
    published = {
        MatrixRole.A: (p, q),
        MatrixRole.B: (q, p),
        MatrixRole.S: (q, q),
    }
    part = {
        MatrixRole.A: (q, q * c),
        MatrixRole.B: (q, q * c),
        MatrixRole.S: (q, q),
    }
    return DistributionPlan(
        grid, role, published[role], part[role], replicated_fiber=role is MatrixRole.S
    )


def owner(plan: DistributionPlan, i: int, j: int):
    """Published owner tuple of block (i, j) before replication."""
    nb_i, nb_j = plan.block_grid
    if not (0 <= i < nb_i and 0 <= j < nb_j):
        raise IndexError(f"block ({i}, {j}) outside {plan.block_grid} grid")
    c = plan.grid.c
    q = plan.grid.q
    alg = plan.grid.algorithm
    role = plan.role
    if alg is AlgorithmId.D15_DENSE_SHIFT:
        if role in (MatrixRole.A, MatrixRole.B):
            return (i // c, i % c)
        return (i, j % c)
    if alg is AlgorithmId.D15_SPARSE_SHIFT:
        if role in (MatrixRole.A, MatrixRole.B):
            return (j, i % c)
        return (j // c, j % c)
    if alg is AlgorithmId.D25_DENSE_REPL:
        if role in (MatrixRole.A, MatrixRole.B):
            return (i // c, j, i % c)
        return (i, j // c, j % c)
    if role is MatrixRole.A:
        return ((i // c) % q, j, i % c)
    if role is MatrixRole.B:
        return (i, (j // c) % q, j % c)
    return [(i, j, w) for w in range(c)]


def part_owner(plan: DistributionPlan, i: int, j: int):
    """Executable owner of partition block (i, j): skewed, fine-slab layout."""
    nb_i, nb_j = plan.part_grid
    if not (0 <= i < nb_i and 0 <= j < nb_j):
        raise IndexError(f"block ({i}, {j}) outside {plan.part_grid} grid")
    c = plan.grid.c
    q = plan.grid.q
    alg = plan.grid.algorithm
    role = plan.role
    if alg in ALGORITHMS_15D:
        return owner(plan, i, j)
    if alg is AlgorithmId.D25_DENSE_REPL:
        if role is MatrixRole.A:
            return (i // c, j, i % c)
        if role is MatrixRole.B:
            # block row i = U*c + w sits at u = (U - j) mod q so that the
            # first phase pairs it with the local S block without a shift
            return ((i // c - j) % q, j, i % c)
        return (i, (j // c - i) % q, j % c)
    if role is MatrixRole.S:
        return [(i, j, w) for w in range(c)]
    # fine slab s belongs to layer s // q; the position within the layer
    # carries the same diagonal skew as the 2.5D dense-replicating start
    if role is MatrixRole.A:
        return (i, (j % q - i) % q, j // q)
    return ((j % q - i) % q, i, j // q)


@dataclasses.dataclass
class DenseBlock:
    block_id: tuple[int, int]
    row0: int
    col0: int
    data: np.ndarray


@dataclasses.dataclass
class SparseBlock:
    block_id: tuple[int, int]
    row0: int
    col0: int
    n_rows: int
    n_cols: int
    rows: np.ndarray  # re-based to the block
    cols: np.ndarray
    vals: np.ndarray  # only this rank's chunk when chunk_count > 1
    chunk_index: int = 0
    chunk_count: int = 1

    @property
    def nnz(self) -> int:
        return int(self.rows.size)


@dataclasses.dataclass
class LocalSlice:
    rank: int
    blocks: list


def value_chunk_bounds(nnz: int, chunk_count: int, chunk_index: int) -> tuple[int, int]:
    """Contiguous value chunks padded to equal wire size ceil(nnz / count)."""
    k = -(-nnz // chunk_count) if nnz else 0
    lo = min(chunk_index * k, nnz)
    hi = min(lo + k, nnz)
    return lo, hi


def global_divisors(grid: ProcessGrid) -> tuple[int, int, int]:
    """Divisibility required of (m, n, r) across all three roles at once."""
    alg = grid.algorithm
    if alg in ALGORITHMS_15D:
        m_div = n_div = grid.p
        r_div = 1 if alg is AlgorithmId.D15_DENSE_SHIFT else grid.g
    elif alg is AlgorithmId.D25_DENSE_REPL:
        m_div = n_div = grid.q * grid.c
        r_div = grid.q
    else:
        m_div = n_div = grid.q
        r_div = grid.q * grid.c
    return m_div, n_div, r_div


def _padded(n: int, div: int, pad: bool, what: str) -> int:
    if n % div == 0:
        return n
    if not pad:
        raise IndivisibleDimensionsError(
            f"{what} = {n} is not divisible by {div}; pass pad=True or resize"
        )
    return ((n + div - 1) // div) * div


def padded_dims(plan: DistributionPlan, n_rows: int, n_cols: int, pad: bool):
    nb_i, nb_j = plan.part_grid
    pr = _padded(n_rows, nb_i, pad, f"{plan.role.value} rows")
    pc = _padded(n_cols, nb_j, pad, f"{plan.role.value} cols")
    return pr, pc


def _owner_ranks(plan: DistributionPlan, i: int, j: int) -> list[int]:
    who = part_owner(plan, i, j)
    coords = who if isinstance(who, list) else [who]
    return [plan.grid.rank_of(co) for co in coords]


def partition_dense(x, plan: DistributionPlan, pad: bool = False) -> list[LocalSlice]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise sparse.DimensionMismatchError(f"expected a matrix, got shape {x.shape}")
    pr, pc = padded_dims(plan, x.shape[0], x.shape[1], pad)
    if (pr, pc) != x.shape:
        padded = np.zeros((pr, pc))
        padded[: x.shape[0], : x.shape[1]] = x
        x = padded
    nb_i, nb_j = plan.part_grid
    bh, bw = pr // nb_i, pc // nb_j
    slices = [LocalSlice(rank, []) for rank in range(plan.grid.p)]
    for i in range(nb_i):
        for j in range(nb_j):
            block = x[i * bh : (i + 1) * bh, j * bw : (j + 1) * bw].copy()
            for rank in _owner_ranks(plan, i, j):
                slices[rank].blocks.append(DenseBlock((i, j), i * bh, j * bw, block))
    return slices


def partition_sparse(
    s: SparseMatrix, plan: DistributionPlan, pad: bool = False
) -> list[LocalSlice]:
    pr, pc = padded_dims(plan, s.n_rows, s.n_cols, pad)
    nb_i, nb_j = plan.part_grid
    bh, bw = pr // nb_i, pc // nb_j
    bi = s.rows // bh
    bj = s.cols // bw
    key = bi * nb_j + bj
    order = np.argsort(key, kind="stable")
    bounds = np.searchsorted(key[order], np.arange(nb_i * nb_j + 1))
    slices = [LocalSlice(rank, []) for rank in range(plan.grid.p)]
    for i in range(nb_i):
        for j in range(nb_j):
            sel = order[bounds[i * nb_j + j] : bounds[i * nb_j + j + 1]]
            rows = s.rows[sel] - i * bh
            cols = s.cols[sel] - j * bw
            vals = s.vals[sel]
            owners = _owner_ranks(plan, i, j)
            if plan.replicated_fiber:
                for w, rank in enumerate(owners):
                    lo, hi = value_chunk_bounds(vals.size, len(owners), w)
                    slices[rank].blocks.append(
                        SparseBlock(
                            (i, j), i * bh, j * bw, bh, bw,
                            rows, cols, vals[lo:hi],
                            chunk_index=w, chunk_count=len(owners),
                        )
                    )
            else:
                (rank,) = owners
                slices[rank].blocks.append(
                    SparseBlock((i, j), i * bh, j * bw, bh, bw, rows, cols, vals)
                )
    return slices


class ReassemblyError(ValueError):
    """A block is missing, duplicated, or inconsistent during unpartition."""


def unpartition_dense(
    slices: list[LocalSlice], plan: DistributionPlan, n_rows: int, n_cols: int
) -> np.ndarray:
    """Inverse of partition_dense; (n_rows, n_cols) are the padded dims."""
    nb_i, nb_j = plan.part_grid
    bh, bw = n_rows // nb_i, n_cols // nb_j
    out = np.zeros((n_rows, n_cols))
    seen = np.zeros((nb_i, nb_j), dtype=bool)
    for sl in slices:
        for blk in sl.blocks:
            i, j = blk.block_id
            if seen[i, j]:
                raise ReassemblyError(f"duplicate dense block {blk.block_id}")
            if blk.data.shape != (bh, bw):
                raise ReassemblyError(
                    f"block {blk.block_id} has shape {blk.data.shape}, want {(bh, bw)}"
                )
            seen[i, j] = True
            out[blk.row0 : blk.row0 + bh, blk.col0 : blk.col0 + bw] = blk.data
    if not seen.all():
        i, j = np.argwhere(~seen)[0]
        raise ReassemblyError(f"missing dense block ({i}, {j})")
    return out


def unpartition_sparse(
    slices: list[LocalSlice], plan: DistributionPlan, n_rows: int, n_cols: int
) -> SparseMatrix:
    nb_i, nb_j = plan.part_grid
    per_block: dict[tuple[int, int], list[SparseBlock]] = {}
    for sl in slices:
        for blk in sl.blocks:
            per_block.setdefault(blk.block_id, []).append(blk)
    rows_parts, cols_parts, vals_parts = [], [], []
    for i in range(nb_i):
        for j in range(nb_j):
            got = per_block.pop((i, j), None)
            if got is None:
                raise ReassemblyError(f"missing sparse block ({i}, {j})")
            first = got[0]
            if first.chunk_count == 1:
                if len(got) != 1:
                    raise ReassemblyError(f"duplicate sparse block ({i}, {j})")
                vals = first.vals
            else:
                if len(got) != first.chunk_count:
                    raise ReassemblyError(
                        f"block ({i}, {j}) has {len(got)} of "
                        f"{first.chunk_count} value chunks"
                    )
                got.sort(key=lambda b: b.chunk_index)
                if [b.chunk_index for b in got] != list(range(first.chunk_count)):
                    raise ReassemblyError(f"block ({i}, {j}) chunk indices collide")
                for b in got:
                    if not (
                        np.array_equal(b.rows, first.rows)
                        and np.array_equal(b.cols, first.cols)
                    ):
                        raise ReassemblyError(
                            f"block ({i}, {j}) replicas disagree on coordinates"
                        )
                vals = np.concatenate([b.vals for b in got]) if first.nnz else first.vals
            if vals.size != first.rows.size:
                raise ReassemblyError(
                    f"block ({i}, {j}) has {vals.size} values for {first.rows.size} coords"
                )
            rows_parts.append(first.rows + first.row0)
            cols_parts.append(first.cols + first.col0)
            vals_parts.append(vals)
    if per_block:
        raise ReassemblyError(f"unexpected extra blocks: {sorted(per_block)}")
    rows = np.concatenate(rows_parts) if rows_parts else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols_parts) if cols_parts else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals_parts) if vals_parts else np.zeros(0)
    return sparse.from_coo(n_rows, n_cols, rows, cols, vals)
