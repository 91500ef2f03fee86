"""Rank programs for the 2.5D algorithm family.

Both variants run on a q x q x c grid with q = sqrt(p/c): axes 0 and 1
are the in-layer rings, axis 2 the fiber.  Inputs arrive skewed so that
at phase t the rank at (u, v, w) holds pieces keyed by the contraction
index K_t = (u + v + t) mod q; shifting S or A along axis 1 and B along
axis 0 with displacement -1 advances every rank to K_{t+1} in lockstep.
After q phases all circulating buffers are home.

The dense-shifting variant replicates whole matrix blocks over the
fiber; the sparse-shifting variant stores the full local coordinate
pattern on every fiber layer and splits only the value array, so value
traffic rides fiber collectives of one word per nonzero.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .fabric import CooShuttle, RankContext
from .kernels import KernelMode
from .sparse import SparseMatrix


def dense_program(ctx: RankContext, inp: dict):
    """2.5D dense shift: S values travel with their coordinates, B blocks
    counter-rotate, A is fiber-replicated (gathered or reduce-scattered)."""
    grid = ctx.grid
    u, v, w = ctx.coord
    q, c = grid.q, grid.c
    m, n, r = inp["dims"]
    mq, nh, rq = m // q, n // (q * c), r // q
    mode: KernelMode = inp["mode"]
    strategy = inp["strategy"]

    s_blk = inp["s"][0]
    b_home = inp["b"][0].data if inp["b"] else None

    def gather_t() -> np.ndarray:
        parts = ctx.allgather(inp["a"][0].data, axis=2)
        return np.vstack(parts)

    def sddmm_cycle(t_in: np.ndarray):
        acc = CooShuttle(s_blk.rows, s_blk.cols, np.zeros(s_blk.nnz))
        b_cur = b_home
        for t in range(q):
            acc.vals += kernels.dot_rows(t_in, b_cur, acc.rows, acc.cols)
            acc = ctx.shift(acc, axis=1, displacement=-1)
            b_cur = ctx.shift(b_cur, axis=0, displacement=-1)
        return s_blk.vals * acc.vals, b_cur

    def spmm_a_cycle(vals: np.ndarray) -> np.ndarray:
        t_acc = np.zeros((mq, rq))
        payload = CooShuttle(s_blk.rows, s_blk.cols, vals)
        b_cur = b_home
        for t in range(q):
            s_local = SparseMatrix(mq, nh, payload.rows, payload.cols, payload.vals)
            t_acc += kernels.spmm_a(s_local, b_cur)
            payload = ctx.shift(payload, axis=1, displacement=-1)
            b_cur = ctx.shift(b_cur, axis=0, displacement=-1)
        return ctx.reduce_scatter(t_acc, axis=2)

    def spmm_b_cycle(vals: np.ndarray, t_in: np.ndarray) -> np.ndarray:
        acc = np.zeros((nh, rq))
        payload = CooShuttle(s_blk.rows, s_blk.cols, vals)
        for t in range(q):
            s_local = SparseMatrix(mq, nh, payload.rows, payload.cols, payload.vals)
            acc += kernels.spmm_b(s_local, t_in)
            payload = ctx.shift(payload, axis=1, displacement=-1)
            acc = ctx.shift(acc, axis=0, displacement=-1)
        return acc

    a_bid = (u * c + w, v)
    b_bid = (((u + v) % q) * c + w, v)

    if mode is KernelMode.SDDMM:
        r_vals, _ = sddmm_cycle(gather_t())
        return {"sparse": [(s_blk.block_id, 0, r_vals)]}
    if mode is KernelMode.SPMM_A:
        return {"dense": [(a_bid, spmm_a_cycle(s_blk.vals))]}
    if mode is KernelMode.SPMM_B:
        return {"dense": [(b_bid, spmm_b_cycle(s_blk.vals, gather_t()))]}

    if mode is KernelMode.FUSEDMM_A:
        r_vals, _ = sddmm_cycle(gather_t())
        return {"dense": [(a_bid, spmm_a_cycle(r_vals))]}

    t_in = gather_t()
    r_vals, _ = sddmm_cycle(t_in)
    if strategy != "reuse":
        t_in = gather_t()
    return {"dense": [(b_bid, spmm_b_cycle(r_vals, t_in))]}


def sparse_program(ctx: RankContext, inp: dict):
    """2.5D sparse shift: every fiber layer keeps the full block pattern
    plus a 1/c slice of the values, and both dense operands circulate as
    narrow feature slabs.  Value traffic is fiber-only."""
    grid = ctx.grid
    u, v, w = ctx.coord
    q, c = grid.q, grid.c
    m, n, r = inp["dims"]
    mq, nq = m // q, n // q
    slab = r // (q * c)
    mode: KernelMode = inp["mode"]

    s_blk = inp["s"][0]
    nnz = s_blk.rows.size
    key = (int(s_blk.rows.sum()), int(s_blk.cols.sum()), nnz) if ctx.debug else None
    a_home = inp["a"][0].data if inp["a"] else None
    b_home = inp["b"][0].data if inp["b"] else None

    def gather_vals(chunk: np.ndarray) -> np.ndarray:
        return ctx.allgather_values(chunk, axis=2, total_len=nnz, debug_key=key)

    def sddmm_cycle() -> np.ndarray:
        # partial dots are scaled by the gathered full values before the
        # fiber reduction, so each rank keeps only its value chunk at rest
        full_vals = gather_vals(s_blk.vals)
        acc = np.zeros(nnz)
        a_cur, b_cur = a_home, b_home
        for t in range(q):
            acc += kernels.dot_rows(a_cur, b_cur, s_blk.rows, s_blk.cols)
            a_cur = ctx.shift(a_cur, axis=1, displacement=-1)
            b_cur = ctx.shift(b_cur, axis=0, displacement=-1)
        return ctx.reduce_values(full_vals * acc, axis=2, debug_key=key)

    def spmm_a_cycle(val_chunk: np.ndarray) -> np.ndarray:
        s_local = SparseMatrix(mq, nq, s_blk.rows, s_blk.cols, gather_vals(val_chunk))
        acc = np.zeros((mq, slab))
        b_cur = b_home
        for t in range(q):
            acc += kernels.spmm_a(s_local, b_cur)
            acc = ctx.shift(acc, axis=1, displacement=-1)
            b_cur = ctx.shift(b_cur, axis=0, displacement=-1)
        return acc

    def spmm_b_cycle(val_chunk: np.ndarray) -> np.ndarray:
        s_local = SparseMatrix(mq, nq, s_blk.rows, s_blk.cols, gather_vals(val_chunk))
        acc = np.zeros((nq, slab))
        a_cur = a_home
        for t in range(q):
            acc += kernels.spmm_b(s_local, a_cur)
            a_cur = ctx.shift(a_cur, axis=1, displacement=-1)
            acc = ctx.shift(acc, axis=0, displacement=-1)
        return acc

    s0 = w * q + (u + v) % q
    a_bid = (u, s0)
    b_bid = (v, s0)

    if mode is KernelMode.SDDMM:
        return {"sparse": [(s_blk.block_id, w, sddmm_cycle())]}
    if mode is KernelMode.SPMM_A:
        return {"dense": [(a_bid, spmm_a_cycle(s_blk.vals))]}
    if mode is KernelMode.SPMM_B:
        return {"dense": [(b_bid, spmm_b_cycle(s_blk.vals))]}
    if mode is KernelMode.FUSEDMM_A:
        return {"dense": [(a_bid, spmm_a_cycle(sddmm_cycle()))]}
    return {"dense": [(b_bid, spmm_b_cycle(sddmm_cycle()))]}
