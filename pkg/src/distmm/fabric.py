"""Simulated message-passing runtime with exact communication accounting.

Ranks run the same program object on private threads and talk only
through per-(source, destination) FIFO queues, so results never depend
on thread scheduling.  Every payload is copied on send.  Word counts
follow the package conventions: a dense buffer costs its element count,
a coordinate payload costs 3 words per nonzero, a value-only payload
1 word per value.  Collectives are ring (all-gather) or direct-exchange
(reduce-scatter) realizations whose per-rank counts match the
(g-1)-style closed forms term for term.

The "sequential" executor hands a baton around so exactly one rank
thread is ever runnable; it must produce bit-identical results to the
threaded executor and exists for debugging.
"""

from __future__ import annotations

import collections
import dataclasses
import threading
import time

import numpy as np

from .kernels import flop_count, reset_flops
from .layout import ProcessGrid

PROPAGATION = "propagation"
REPLICATION = "replication"

_KEYS = tuple(
    (cat, pay)
    for cat in (PROPAGATION, REPLICATION)
    for pay in ("dense", "sparse")
)


class DeadlockError(RuntimeError):
    pass


class CollectiveMismatchError(RuntimeError):
    pass


class _Aborted(RuntimeError):
    """Internal unwind signal once some rank has failed."""


def _zero_counters() -> dict:
    return {k: 0 for k in _KEYS}


@dataclasses.dataclass
class CommStats:
    words_sent: dict = dataclasses.field(default_factory=_zero_counters)
    words_received: dict = dataclasses.field(default_factory=_zero_counters)
    messages_sent: dict = dataclasses.field(default_factory=_zero_counters)
    flops: int = 0

    def _record(self, table: dict, category: str, is_sparse: bool, words: int) -> None:
        table[(category, "sparse" if is_sparse else "dense")] += words

    def record_send(self, category: str, is_sparse: bool, words: int) -> None:
        self._record(self.words_sent, category, is_sparse, words)
        self._record(self.messages_sent, category, is_sparse, 1)

    def record_recv(self, category: str, is_sparse: bool, words: int) -> None:
        self._record(self.words_received, category, is_sparse, words)

    @property
    def sent_total(self) -> int:
        return sum(self.words_sent.values())

    @property
    def received_total(self) -> int:
        return sum(self.words_received.values())

    @property
    def max_traffic(self) -> int:
        """Per-rank cost under the send/receive-overlap convention."""
        return max(self.sent_total, self.received_total)

    @property
    def propagation_words(self) -> int:
        return sum(v for (cat, _), v in self.words_sent.items() if cat == PROPAGATION)

    @property
    def replication_words(self) -> int:
        return sum(v for (cat, _), v in self.words_sent.items() if cat == REPLICATION)

    @property
    def dense_words(self) -> int:
        return sum(v for (_, pay), v in self.words_sent.items() if pay == "dense")

    @property
    def sparse_words(self) -> int:
        return sum(v for (_, pay), v in self.words_sent.items() if pay == "sparse")

    @property
    def messages_total(self) -> int:
        return sum(self.messages_sent.values())

    def to_dict(self) -> dict:
        def nest(table):
            return {
                cat: {pay: table[(cat, pay)] for pay in ("dense", "sparse")}
                for cat in (PROPAGATION, REPLICATION)
            }

        return {
            "words_sent": nest(self.words_sent),
            "words_received": nest(self.words_received),
            "messages_sent": nest(self.messages_sent),
            "flops": self.flops,
        }


@dataclasses.dataclass
class CooShuttle:
    """Coordinates plus one scalar per nonzero (values or partial dots)."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    @property
    def words(self) -> int:
        return 3 * self.nnz

    def copy(self) -> "CooShuttle":
        return CooShuttle(self.rows.copy(), self.cols.copy(), self.vals.copy())


@dataclasses.dataclass
class _Envelope:
    src: int
    tag: tuple
    payload: object
    words: int
    category: str
    is_sparse: bool
    debug_key: object = None


def _copy_payload(payload):
    if isinstance(payload, CooShuttle):
        return payload.copy()
    return np.array(payload, dtype=np.float64, copy=True)


class Fabric:
    """Shared state: queues, liveness flags, and the sequential baton."""

    def __init__(self, n_ranks: int, sequential: bool, timeout: float = 120.0):
        self.n = n_ranks
        self.sequential = sequential
        self.timeout = timeout
        self.cv = threading.Condition()
        self.queues = [
            [collections.deque() for _ in range(n_ranks)] for _ in range(n_ranks)
        ]
        self.finished = [False] * n_ranks
        self.blocked = [False] * n_ranks
        self.turn = 0
        self.failed: BaseException | None = None
        self.failed_rank: int | None = None

    # All methods below are called with self.cv held.

    def _runnable_after(self, rank: int) -> int | None:
        for k in range(1, self.n + 1):
            s = (rank + k) % self.n
            if not self.finished[s] and not self.blocked[s]:
                return s
        return None

    def _fail(self, rank: int, exc: BaseException) -> None:
        if self.failed is None:
            self.failed = exc
            self.failed_rank = rank
        self.cv.notify_all()

    def wait_for_turn(self, rank: int) -> None:
        if not self.sequential:
            return
        self.cv.wait_for(lambda: self.turn == rank or self.failed is not None)
        if self.failed is not None and self.failed_rank != rank:
            raise _Aborted()

    def yield_turn(self, rank: int) -> None:
        """Sequential executor: the caller is blocked or done, pick a successor."""
        if not self.sequential or self.turn != rank:
            return
        nxt = self._runnable_after(rank)
        if nxt is not None:
            self.turn = nxt
            self.cv.notify_all()


class RankContext:
    """One rank's endpoint: point-to-point primitives plus the collectives."""

    def __init__(self, rank: int, grid: ProcessGrid, fabric: Fabric, debug: bool):
        self.rank = rank
        self.grid = grid
        self.coord = grid.coord_of(rank)
        self.fabric = fabric
        self.debug = debug
        self.stats = CommStats()
        self._op = 0

    def _next_op(self) -> int:
        self._op += 1
        return self._op

    def neighbor(self, axis: int, offset: int) -> int:
        coord = list(self.coord)
        size = self.grid.axis_size(axis)
        coord[axis] = (coord[axis] + offset) % size
        return self.grid.rank_of(tuple(coord))

    def axis_index(self, axis: int) -> int:
        return self.coord[axis]

    def send(
        self,
        dst: int,
        payload,
        category: str,
        tag: tuple,
        is_sparse: bool | None = None,
        debug_key=None,
    ) -> None:
        payload = _copy_payload(payload)
        if isinstance(payload, CooShuttle):
            words, sparse_flag = payload.words, True
        else:
            words = int(payload.size)
            sparse_flag = bool(is_sparse)
        env = _Envelope(self.rank, tag, payload, words, category, sparse_flag, debug_key)
        fab = self.fabric
        with fab.cv:
            if fab.failed is not None and fab.failed_rank != self.rank:
                raise _Aborted()
            fab.queues[self.rank][dst].append(env)
            fab.blocked[dst] = False
            self.stats.record_send(category, sparse_flag, words)
            fab.cv.notify_all()

    def recv(self, src: int, tag: tuple) -> _Envelope:
        fab = self.fabric
        deadline = time.monotonic() + fab.timeout
        with fab.cv:
            queue = fab.queues[src][self.rank]
            while not queue:
                if fab.failed is not None and fab.failed_rank != self.rank:
                    raise _Aborted()
                if fab.finished[src]:
                    raise DeadlockError(
                        f"rank {self.rank} waiting on finished rank {src} for {tag}"
                    )
                fab.blocked[self.rank] = True
                fab.yield_turn(self.rank)
                if fab.sequential:
                    dead = fab._runnable_after(self.rank) is None and fab.turn == self.rank
                    if dead and not queue:
                        raise DeadlockError(
                            f"all ranks blocked; rank {self.rank} wants {tag} from {src}"
                        )
                if not fab.cv.wait(timeout=1.0) and time.monotonic() > deadline:
                    raise DeadlockError(
                        f"rank {self.rank} timed out waiting on rank {src} for {tag}"
                    )
            fab.blocked[self.rank] = False
            if fab.sequential:
                fab.cv.wait_for(
                    lambda: fab.turn == self.rank or fab.failed is not None
                )
                if fab.failed is not None and fab.failed_rank != self.rank:
                    raise _Aborted()
            env = queue.popleft()
        if env.tag != tag:
            raise CollectiveMismatchError(
                f"rank {self.rank} expected {tag} from {src}, got {env.tag}"
            )
        self.stats.record_recv(env.category, env.is_sparse, env.words)
        return env

    # -- collectives ----------------------------------------------------

    def shift(
        self,
        payload,
        axis: int,
        displacement: int = 1,
        category: str = PROPAGATION,
        is_sparse: bool | None = None,
    ):
        """Cyclic shift: receive the buffer of the ring predecessor at
        `displacement`.  displacement 0 is the identity and costs nothing;
        any other displacement is a real counted message, even on a ring
        of size one."""
        if displacement == 0:
            return payload
        op = self._next_op()
        tag = ("shift", op)
        self.send(
            self.neighbor(axis, displacement), payload, category, tag, is_sparse
        )
        return self.recv(self.neighbor(axis, -displacement), tag).payload

    def allgather(self, block, axis: int, category: str = REPLICATION) -> list:
        """Ring all-gather: returns the group's blocks ordered by ring
        position.  (s-1) messages and (s-1)*words(block) words per rank."""
        size = self.grid.axis_size(axis)
        me = self.axis_index(axis)
        block = np.asarray(block, dtype=np.float64)
        out: list = [None] * size
        out[me] = block
        if size == 1:
            return out
        op = self._next_op()
        current = block
        for step in range(size - 1):
            tag = ("allgather", op, step)
            self.send(self.neighbor(axis, 1), current, category, tag)
            env = self.recv(self.neighbor(axis, -1), tag)
            current = env.payload
            if current.size != block.size:
                raise ValueError(
                    f"allgather blocks differ in size: {current.size} vs {block.size}"
                )
            out[(me - 1 - step) % size] = current
        return out

    def reduce_scatter(self, buffer, axis: int, category: str = REPLICATION):
        """Direct-exchange reduce-scatter along leading dimension: rank at
        ring position k gets the sum of everyone's k-th chunk.  Summation
        order is ascending ring position, so results are deterministic.
        (s-1)*(words/s) words and (s-1) messages per rank."""
        size = self.grid.axis_size(axis)
        buffer = np.asarray(buffer, dtype=np.float64)
        if size == 1:
            return buffer
        if buffer.shape[0] % size != 0:
            raise ValueError(
                f"reduce_scatter buffer of {buffer.shape[0]} rows "
                f"not divisible by group size {size}"
            )
        h = buffer.shape[0] // size
        me = self.axis_index(axis)
        op = self._next_op()
        for j in range(size):
            if j == me:
                continue
            tag = ("reduce_scatter", op, j)
            self.send(
                self.neighbor(axis, j - me), buffer[j * h : (j + 1) * h], category, tag
            )
        acc = np.zeros_like(buffer[me * h : (me + 1) * h])
        for origin in range(size):
            if origin == me:
                part = buffer[me * h : (me + 1) * h]
            else:
                tag = ("reduce_scatter", op, me)
                part = self.recv(self.grid.axis_group(self.rank, axis)[origin], tag).payload
            acc += part
        return acc

    # -- value-only collectives (1 word per nonzero) --------------------

    def allgather_values(
        self, chunk, axis: int, total_len: int, debug_key=None
    ) -> np.ndarray:
        """All-gather of sparse values along the fiber.  Chunks are padded
        on the wire to ceil(total_len / s) words so every rank counts the
        same (s-1)*ceil(total_len/s) replication words."""
        size = self.grid.axis_size(axis)
        chunk = np.asarray(chunk, dtype=np.float64).ravel()
        if size == 1:
            return chunk.copy()
        k = -(-total_len // size) if total_len else 0
        me = self.axis_index(axis)
        out = np.zeros(size * k)
        wire = np.zeros(k)
        wire[: chunk.size] = chunk
        out[me * k : me * k + k] = wire
        op = self._next_op()
        current = wire
        for step in range(size - 1):
            tag = ("allgather_values", op, step)
            self.send(
                self.neighbor(axis, 1), current, REPLICATION, tag,
                is_sparse=True, debug_key=debug_key,
            )
            env = self.recv(self.neighbor(axis, -1), tag)
            self._check_debug_key(env, debug_key)
            current = env.payload
            origin = (me - 1 - step) % size
            out[origin * k : origin * k + k] = current
        return out[:total_len]

    def reduce_values(self, partial, axis: int, debug_key=None) -> np.ndarray:
        """Reduce-scatter of sparse values: returns this rank's summed
        chunk (padded chunking as in allgather_values)."""
        size = self.grid.axis_size(axis)
        partial = np.asarray(partial, dtype=np.float64).ravel()
        total_len = partial.size
        if size == 1:
            return partial.copy()
        k = -(-total_len // size) if total_len else 0
        padded = np.zeros(size * k)
        padded[:total_len] = partial
        me = self.axis_index(axis)
        group = self.grid.axis_group(self.rank, axis)
        op = self._next_op()
        for j in range(size):
            if j == me:
                continue
            tag = ("reduce_values", op, j)
            self.send(
                self.neighbor(axis, j - me), padded[j * k : (j + 1) * k],
                REPLICATION, tag, is_sparse=True, debug_key=debug_key,
            )
        acc = np.zeros(k)
        for origin in range(size):
            if origin == me:
                acc += padded[me * k : (me + 1) * k]
            else:
                tag = ("reduce_values", op, me)
                env = self.recv(group[origin], tag)
                self._check_debug_key(env, debug_key)
                acc += env.payload
        lo = min(me * k, total_len)
        hi = min(lo + k, total_len)
        return acc[: hi - lo]

    def _check_debug_key(self, env: _Envelope, expected) -> None:
        if self.debug and expected is not None and env.debug_key is not None:
            if env.debug_key != expected:
                raise CollectiveMismatchError(
                    f"rank {self.rank}: fiber coordinate sets diverged "
                    f"({env.debug_key} != {expected})"
                )


def spawn(
    grid: ProcessGrid,
    program,
    rank_inputs: list,
    executor: str = "threaded",
    debug: bool = False,
    timeout: float = 120.0,
):
    """Run `program(ctx, rank_inputs[rank])` on every rank to completion.

    Returns (results, stats) indexed by rank.  Raises the first rank
    failure, and checks global word conservation before returning.
    """
    if executor not in ("threaded", "sequential"):
        raise ValueError(f"unknown executor {executor!r}")
    p = grid.p
    if len(rank_inputs) != p:
        raise ValueError(f"expected {p} rank inputs, got {len(rank_inputs)}")
    fabric = Fabric(p, sequential=(executor == "sequential"), timeout=timeout)
    contexts = [RankContext(rank, grid, fabric, debug) for rank in range(p)]
    results: list = [None] * p

    def runner(rank: int) -> None:
        ctx = contexts[rank]
        try:
            with fabric.cv:
                fabric.wait_for_turn(rank)
            reset_flops()
            results[rank] = program(ctx, rank_inputs[rank])
            ctx.stats.flops = flop_count()
        except _Aborted:
            pass
        except BaseException as exc:
            with fabric.cv:
                fabric._fail(rank, exc)
        finally:
            with fabric.cv:
                fabric.finished[rank] = True
                fabric.yield_turn(rank)
                fabric.cv.notify_all()

    threads = [
        threading.Thread(target=runner, args=(rank,), name=f"rank-{rank}")
        for rank in range(p)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if fabric.failed is not None:
        raise RuntimeError(
            f"rank {fabric.failed_rank} failed: {fabric.failed}"
        ) from fabric.failed
    stats = [ctx.stats for ctx in contexts]
    sent = sum(s.sent_total for s in stats)
    received = sum(s.received_total for s in stats)
    if sent != received:
        raise AssertionError(
            f"conservation violated: {sent} words sent, {received} received"
        )
    return results, stats
