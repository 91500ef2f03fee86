"""Process grids, owner maps, and partition round trips."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from distmm.layout import (
    AlgorithmId,
    InvalidReplicationError,
    IndivisibleDimensionsError,
    MatrixRole,
    ReassemblyError,
    global_divisors,
    make_grid,
    make_plan,
    owner,
    part_owner,
    partition_dense,
    partition_sparse,
    unpartition_dense,
    unpartition_sparse,
    value_chunk_bounds,
)
from distmm.sparse import erdos_renyi

ALGS_15 = (AlgorithmId.D15_DENSE_SHIFT, AlgorithmId.D15_SPARSE_SHIFT)
ALGS_25 = (AlgorithmId.D25_DENSE_REPL, AlgorithmId.D25_SPARSE_REPL)


def grid_cases():
    for alg in ALGS_15:
        for p, c in ((1, 1), (4, 1), (4, 2), (4, 4), (8, 2), (6, 3)):
            yield alg, p, c
    for alg in ALGS_25:
        for p, c in ((1, 1), (4, 1), (4, 4), (8, 2), (16, 4), (18, 2)):
            yield alg, p, c


class TestProcessGrid:
    def test_15d_dims(self):
        g = make_grid(AlgorithmId.D15_DENSE_SHIFT, 8, 2)
        assert g.dims == (4, 2)
        assert g.g == 4 and g.fiber_axis == 1

    def test_25d_dims(self):
        g = make_grid(AlgorithmId.D25_DENSE_REPL, 8, 2)
        assert g.dims == (2, 2, 2)
        assert g.q == 2 and g.fiber_axis == 2

    def test_25d_needs_square_layer(self):
        with pytest.raises(InvalidReplicationError):
            make_grid(AlgorithmId.D25_DENSE_REPL, 8, 4)

    def test_c_must_divide_p(self):
        with pytest.raises(InvalidReplicationError):
            make_grid(AlgorithmId.D15_DENSE_SHIFT, 8, 3)

    @pytest.mark.parametrize("alg,p,c", list(grid_cases()))
    def test_rank_coord_round_trip(self, alg, p, c):
        g = make_grid(alg, p, c)
        seen = set()
        for rank in range(p):
            coord = g.coord_of(rank)
            assert g.rank_of(coord) == rank
            seen.add(coord)
        assert len(seen) == p

    def test_layer_major_numbering(self):
        g = make_grid(AlgorithmId.D15_DENSE_SHIFT, 8, 2)
        # fiber position v picks the layer, ring position u runs inside it
        assert g.coord_of(0) == (0, 0)
        assert g.coord_of(3) == (3, 0)
        assert g.coord_of(4) == (0, 1)
        g2 = make_grid(AlgorithmId.D25_DENSE_REPL, 8, 2)
        assert g2.coord_of(0) == (0, 0, 0)
        assert g2.coord_of(1) == (0, 1, 0)
        assert g2.coord_of(4) == (0, 0, 1)

    def test_axis_group_partitions_ranks(self):
        g = make_grid(AlgorithmId.D25_DENSE_REPL, 16, 4)
        for axis in range(3):
            groups = {tuple(g.axis_group(rank, axis)) for rank in range(16)}
            flat = [r for grp in groups for r in grp]
            assert sorted(flat) == list(range(16))


class TestOwnerMaps:
    def test_dense_shift_factor_owner(self):
        plan = make_plan(make_grid(AlgorithmId.D15_DENSE_SHIFT, 8, 2), MatrixRole.A)
        assert owner(plan, 5, 0) == (2, 1)

    def test_25d_dense_sparse_owner(self):
        plan = make_plan(make_grid(AlgorithmId.D25_DENSE_REPL, 8, 2), MatrixRole.S)
        assert owner(plan, 1, 3) == (1, 1, 1)

    def test_sparse_replicate_s_owner_lists_full_fiber(self):
        plan = make_plan(make_grid(AlgorithmId.D25_SPARSE_REPL, 16, 4), MatrixRole.S)
        who = owner(plan, 1, 0)
        assert isinstance(who, list) and len(who) == 4
        assert {w[2] for w in who} == {0, 1, 2, 3}

    @pytest.mark.parametrize("alg,p,c", [t for t in grid_cases() if t[1] > 1])
    def test_partition_blocks_land_on_their_owner(self, alg, p, c):
        grid = make_grid(alg, p, c)
        for role in MatrixRole:
            plan = make_plan(grid, role)
            nb_i, nb_j = plan.part_grid
            x = np.arange(nb_i * 2 * nb_j * 3, dtype=float).reshape(nb_i * 2, nb_j * 3)
            slices = partition_dense(x, plan)
            for rank, sl in enumerate(slices):
                coord = grid.coord_of(rank)
                for blk in sl.blocks:
                    who = part_owner(plan, *blk.block_id)
                    owners = who if isinstance(who, list) else [who]
                    assert coord in owners


class TestChunks:
    @given(st.integers(0, 300), st.integers(1, 8))
    def test_value_chunks_tile_the_range(self, nnz, count):
        bounds = [value_chunk_bounds(nnz, count, k) for k in range(count)]
        assert bounds[0][0] == 0 and bounds[-1][1] == nnz
        for (a, b), (c, d) in zip(bounds, bounds[1:]):
            assert b == c and a <= b
        width = -(-nnz // count)
        assert all(b - a <= width for a, b in bounds)


class TestGlobalDivisors:
    def test_values(self):
        assert global_divisors(make_grid(AlgorithmId.D15_DENSE_SHIFT, 8, 2)) == (8, 8, 1)
        assert global_divisors(make_grid(AlgorithmId.D15_SPARSE_SHIFT, 8, 2)) == (8, 8, 4)
        assert global_divisors(make_grid(AlgorithmId.D25_DENSE_REPL, 8, 2)) == (4, 4, 2)
        assert global_divisors(make_grid(AlgorithmId.D25_SPARSE_REPL, 8, 2)) == (2, 2, 4)


class TestRoundTrips:
    @pytest.mark.parametrize("alg,p,c", list(grid_cases()))
    def test_dense_round_trip_with_padding(self, alg, p, c):
        grid = make_grid(alg, p, c)
        rng = np.random.default_rng(p * 31 + c)
        for role in (MatrixRole.A, MatrixRole.B):
            plan = make_plan(grid, role)
            x = rng.standard_normal((50, 13))
            pr, pc_ = (
                -(-50 // plan.part_grid[0]) * plan.part_grid[0],
                -(-13 // plan.part_grid[1]) * plan.part_grid[1],
            )
            padded = np.zeros((pr, pc_))
            padded[:50, :13] = x
            slices = partition_dense(padded, plan)
            back = unpartition_dense(slices, plan, pr, pc_)
            assert np.array_equal(back[:50, :13], x)

    @pytest.mark.parametrize("alg,p,c", list(grid_cases()))
    def test_sparse_round_trip(self, alg, p, c):
        grid = make_grid(alg, p, c)
        plan = make_plan(grid, MatrixRole.S)
        s = erdos_renyi(60, 60, 3, seed=p * 7 + c)
        slices = partition_sparse(s, plan, pad=True)
        back = unpartition_sparse(slices, plan, *_padded_shape(plan, 60, 60))
        assert np.array_equal(back.rows, s.rows)
        assert np.array_equal(back.cols, s.cols)
        assert np.array_equal(back.vals, s.vals)

    def test_sparse_replicate_value_chunks_cover_block(self):
        grid = make_grid(AlgorithmId.D25_SPARSE_REPL, 16, 4)
        plan = make_plan(grid, MatrixRole.S)
        s = erdos_renyi(64, 64, 4, seed=8)
        slices = partition_sparse(s, plan, pad=True)
        # same coordinates on every fiber layer, value chunks disjoint
        for u in range(grid.q):
            for v in range(grid.q):
                fiber = [
                    blk
                    for sl in slices
                    for blk in sl.blocks
                    if blk.block_id == (u, v)
                ]
                assert len(fiber) == 4
                base = fiber[0]
                total = sum(blk.vals.size for blk in fiber)
                assert total == base.rows.size
                for blk in fiber[1:]:
                    assert np.array_equal(blk.rows, base.rows)

    def test_unpartition_missing_block_raises(self):
        grid = make_grid(AlgorithmId.D15_DENSE_SHIFT, 4, 1)
        plan = make_plan(grid, MatrixRole.A)
        x = np.ones((8, 3))
        slices = partition_dense(x, plan)
        slices[2] = type(slices[2])(2, [])
        with pytest.raises(ReassemblyError):
            unpartition_dense(slices, plan, 8, 3)

    def test_indivisible_without_pad_raises(self):
        grid = make_grid(AlgorithmId.D15_DENSE_SHIFT, 4, 1)
        plan = make_plan(grid, MatrixRole.A)
        with pytest.raises(IndivisibleDimensionsError):
            partition_dense(np.ones((7, 3)), plan, pad=False)


def _padded_shape(plan, rows, cols):
    nb_i, nb_j = plan.part_grid
    return -(-rows // nb_i) * nb_i, -(-cols // nb_j) * nb_j
