"""Unbounded MPMC queue over fixed-size array blocks.

Positions are handed out by two monotone counters.  Logical position ``p``
lives in block ``(p - shift) // C`` at cell ``(p - shift) % C``.  When the pop
that consumes the final cell of the head block finishes, it rotates that block
to the end of the block list and adds ``C`` to ``shift``, so memory is reused
instead of growing without bound.

Rotation must not race with operations that are mid-way through indexing the
block list.  A single gate word tracks ``2 * in_flight + recycling``; ordinary
operations enter only while the recycling bit is clear, and the recycler sets
the bit and waits for in-flight operations to drain before touching the list.
"""

from __future__ import annotations

import threading
import time
from typing import Any, List, Tuple

from .core import MASK64, AtomicInt, Backoff, DomainError, OpStatus, ValueReservedError

EMPTY_CELL = MASK64
DEFAULT_BLOCK_SIZE = 10_000

EMPTY = OpStatus.EMPTY


def allocation_bounds(n1: int, n2: int, C: int) -> Tuple[int, int]:
    """Block-count range after ``n1`` pushes and ``n2`` pops with block size ``C``."""
    if C < 1:
        raise DomainError("block size must be at least 1")
    if n2 > n1 or n1 < 0 or n2 < 0:
        raise DomainError("need 0 <= n2 <= n1")
    lo = max(1, -(-(n1 - n2) // C))
    hi = max(1, -(-n1 // C))
    return lo, hi


class LockFreeQueue:
    def __init__(self, block_size: int = DEFAULT_BLOCK_SIZE, valid_bits: bool = False) -> None:
        if block_size < 1:
            raise DomainError("block size must be at least 1")
        self._C = block_size
        self._valid_bits = valid_bits
        self._blocks: List[list] = [self._new_block()]
        self._head = AtomicInt(0)
        self._tail = AtomicInt(0)
        self._shift = 0
        self._gate = AtomicInt(0)
        self._grow = threading.Lock()
        self.recycle_events = 0
        self.peak_blocks = 1

    def _new_block(self) -> list:
        if self._valid_bits:
            # cell holds None until written; any payload is legal
            return [None] * self._C
        return [EMPTY_CELL] * self._C

    # gate handling
    def _enter(self) -> None:
        gate = self._gate
        while True:
            s = gate.value
            if not s & 1 and gate.compare_exchange(s, s + 2):
                return
            time.sleep(0)

    def _exit(self) -> None:
        self._gate.fetch_add(-2)

    def _append_block(self, index: int) -> None:
        with self._grow:
            while len(self._blocks) <= index:
                self._blocks.append(self._new_block())
            if len(self._blocks) > self.peak_blocks:
                self.peak_blocks = len(self._blocks)

    def push(self, v: Any) -> None:
        if not self._valid_bits and v == EMPTY_CELL:
            raise ValueReservedError("payload 2**64-1 is the EMPTY marker")
        C = self._C
        tail = self._tail
        self._enter()
        try:
            backoff = None
            while True:
                t = tail.value
                idx = t - self._shift
                bi = idx // C
                if bi >= len(self._blocks):
                    self._append_block(bi)
                    continue
                if tail.compare_exchange(t, t + 1):
                    self._blocks[bi][idx % C] = v
                    return
                if backoff is None:
                    backoff = Backoff()
                backoff.pause()
        finally:
            self._exit()

    def pop(self) -> Any:
        """Oldest payload, or ``EMPTY`` when the queue is empty."""
        C = self._C
        head = self._head
        empty = None if self._valid_bits else EMPTY_CELL
        self._enter()
        try:
            backoff = None
            while True:
                h = head.value
                if h >= self._tail.value:
                    return EMPTY
                if head.compare_exchange(h, h + 1):
                    break
                if backoff is None:
                    backoff = Backoff()
                backoff.pause()
            idx = h - self._shift
            block = self._blocks[idx // C]
            off = idx % C
            # the matching push claimed this cell but may not have written it yet
            while True:
                v = block[off]
                if v != empty:
                    break
                time.sleep(0)
            block[off] = empty
            last_in_block = off == C - 1
        finally:
            self._exit()
        if last_in_block:
            self.recycle_blocks()
        return v

    def recycle_blocks(self) -> None:
        gate = self._gate
        while True:
            s = gate.value
            if s & 1:
                return  # another thread is already recycling
            if gate.compare_exchange(s, s | 1):
                break
        while gate.value != 1:
            time.sleep(0)
        C = self._C
        while self._head.value - self._shift >= C:
            self._blocks.append(self._blocks.pop(0))
            self._shift += C
            self.recycle_events += 1
        gate.store(0)

    # observability
    def blocks_in_use(self) -> int:
        return len(self._blocks)

    @property
    def block_size(self) -> int:
        return self._C

    @property
    def shift(self) -> int:
        return self._shift

    def __len__(self) -> int:
        return self._tail.value - self._head.value

    def debug_state(self) -> Tuple[int, int, int]:
        """(head - shift, tail - shift, blocks); only meaningful when quiescent."""
        return self._head.value - self._shift, self._tail.value - self._shift, len(self._blocks)

    def drain(self) -> list:
        out = []
        while True:
            v = self.pop()
            if v is EMPTY:
                return out
            out.append(v)
