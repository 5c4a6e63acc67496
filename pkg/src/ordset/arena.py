"""Block arena with recycling through the lock-free queue.

Nodes are created in blocks of ``block_capacity`` slots and addressed by a
64-bit handle (block index in the high 24 bits, slot in the low 40).  Freed
handles are pushed onto a :class:`LockFreeQueue`; ``alloc`` pops from it before
touching fresh slots and bumps the recycled node's generation counter.

``EpochReclaimer`` sits in front of ``free`` for structures whose readers
traverse without locks: retired handles are only released once every reader
that might still hold them has left its critical section.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional

from .core import (
    MAX_BLOCKS,
    SLOT_BITS,
    SLOT_MASK,
    AllocFailure,
    AtomicInt,
    DomainError,
)
from .queue import EMPTY, LockFreeQueue

GEN_MASK = 0xFFFFFFFF


class NodeHeader:
    __slots__ = ("gen", "mark", "handle")

    def __init__(self) -> None:
        self.gen = 0
        self.mark = False
        self.handle = 0


@dataclass(frozen=True)
class ArenaConfig:
    block_capacity: int = 10_000
    node_kind: Callable[[], NodeHeader] = NodeHeader
    max_blocks: Optional[int] = None  # simulated allocation ceiling
    recycle_block_size: Optional[int] = None
    debug: bool = False

    def __post_init__(self) -> None:
        if self.block_capacity < 1:
            raise DomainError("block_capacity must be >= 1")


class Arena:
    def __init__(self, config: ArenaConfig | None = None, **kw) -> None:
        cfg = config if config is not None else ArenaConfig(**kw)
        self.config = cfg
        self._C = cfg.block_capacity
        self._factory = cfg.node_kind
        self._limit = min(cfg.max_blocks or MAX_BLOCKS, MAX_BLOCKS)
        self._blocks: List[list] = []
        self._cursor = AtomicInt(0)
        self._grow = threading.Lock()
        rbs = cfg.recycle_block_size or min(max(self._C, 16), 10_000)
        self._recycle = LockFreeQueue(block_size=rbs)
        self._live: Optional[set] = set() if cfg.debug else None
        self._live_lock = threading.Lock()
        self.double_frees = 0
        self._append_block()  # first block is allocated eagerly

    def _append_block(self) -> None:
        if len(self._blocks) >= self._limit:
            raise AllocFailure(f"arena limit of {self._limit} blocks reached")
        try:
            block = [None] * self._C
        except MemoryError as exc:
            raise AllocFailure("system refused a new block") from exc
        self._blocks.append(block)

    def alloc(self) -> int:
        h = self._recycle.pop()
        if h is not EMPTY:
            node = self.deref(h)
            node.gen = (node.gen + 1) & GEN_MASK
            node.mark = False
        else:
            C = self._C
            i = self._cursor.fetch_add(1)
            b, s = divmod(i, C)
            if b >= len(self._blocks):
                with self._grow:
                    try:
                        while len(self._blocks) <= b:
                            self._append_block()
                    except AllocFailure:
                        # hand the cursor position back so the arena stays usable
                        self._cursor.compare_exchange(i + 1, i)
                        raise
            node = self._factory()
            h = (b << SLOT_BITS) | s
            node.handle = h
            self._blocks[b][s] = node
        if self._live is not None:
            with self._live_lock:
                if h in self._live:
                    raise AssertionError(f"handle {h:#x} handed out twice")
                self._live.add(h)
        return h

    def free(self, h: int) -> None:
        if self._live is not None:
            with self._live_lock:
                if h not in self._live:
                    self.double_frees += 1
                    return
                self._live.discard(h)
        self._recycle.push(h)

    def deref(self, h: int):
        return self._blocks[h >> SLOT_BITS][h & SLOT_MASK]

    def new(self):
        """Allocate and return the node object itself."""
        h = self.alloc()
        return self._blocks[h >> SLOT_BITS][h & SLOT_MASK]

    def blocks_in_use(self) -> int:
        return len(self._blocks)

    @property
    def blocks(self) -> List[list]:
        return self._blocks

    @property
    def block_capacity(self) -> int:
        return self._C

    def live_handles(self) -> Optional[frozenset]:
        if self._live is None:
            return None
        with self._live_lock:
            return frozenset(self._live)


def _ceil_sum(k: int, C: int) -> int:
    # sum of ceil(j / C) for j in 0..k
    q, r = divmod(k, C)
    return C * q * (q + 1) // 2 + r * (q + 1)


def expected_average_blocks(N: int, C: int) -> Fraction:
    """Average number of blocks in use over all (allocs, frees) prefixes, exact."""
    if N < 1 or C < 1:
        raise DomainError("N and C must both be >= 1")
    num = sum(_ceil_sum(k, C) for k in range(1, N + 1))
    return Fraction(num, N * (N + 1) // 2)


class EpochReclaimer:
    """Deferred ``free`` for lock-free readers.

    Readers bracket each traversal with ``pin``/``unpin``.  A handle retired in
    epoch ``e`` is released once every pinned reader entered after ``e``.
    """

    def __init__(self, arena: Arena, batch: int = 64) -> None:
        self._arena = arena
        self._batch = batch
        self._epoch = 0
        self._active: Dict[int, Optional[int]] = {}
        self._limbo: list = []
        self._lock = threading.Lock()

    def pin(self) -> int:
        tid = threading.get_ident()
        active = self._active
        if tid not in active:
            with self._lock:
                active[tid] = None
        active[tid] = self._epoch
        return tid

    def unpin(self, tid: int) -> None:
        self._active[tid] = None

    def retire(self, h: int) -> None:
        with self._lock:
            self._limbo.append((self._epoch, h))
            if len(self._limbo) >= self._batch:
                self._collect()

    def _collect(self) -> None:
        self._epoch += 1
        pinned = [e for e in list(self._active.values()) if e is not None]
        low = min(pinned) if pinned else self._epoch
        keep = []
        free = self._arena.free
        for e, h in self._limbo:
            if e < low:
                free(h)
            else:
                keep.append((e, h))
        self._limbo = keep

    def flush(self) -> None:
        """Release everything retired so far; caller guarantees quiescence."""
        with self._lock:
            limbo, self._limbo = self._limbo, []
        for _, h in limbo:
            self._arena.free(h)

    @property
    def pending(self) -> int:
        return len(self._limbo)
