from __future__ import annotations

import random
import threading
from collections import Counter, deque

import pytest
from hypothesis import given, settings, strategies as st

from ordset.bench.lincheck import ConcurrentRecorder, apply_fifo_op, check_linearizable
from ordset.core import MASK64, DomainError, ValueReservedError
from ordset.queue import DEFAULT_BLOCK_SIZE, EMPTY, LockFreeQueue, allocation_bounds


def test_default_block_size():
    assert DEFAULT_BLOCK_SIZE == 10_000
    assert LockFreeQueue().block_size == 10_000


def test_fifo_small():
    q = LockFreeQueue(block_size=4)
    for v in (1, 2, 3):
        q.push(v)
    assert [q.pop(), q.pop(), q.pop()] == [1, 2, 3]
    assert q.pop() is EMPTY


def test_pop_fresh_is_empty():
    assert LockFreeQueue().pop() is EMPTY


def test_singleton():
    q = LockFreeQueue()
    q.push(42)
    assert q.pop() == 42
    assert len(q) == 0


def test_empty_marker_is_reserved():
    q = LockFreeQueue()
    with pytest.raises(ValueReservedError):
        q.push(MASK64)


def test_valid_bits_accepts_full_range():
    q = LockFreeQueue(block_size=3, valid_bits=True)
    vals = [MASK64, 0, 7, MASK64 - 1, MASK64]
    for v in vals:
        q.push(v)
    assert q.drain() == vals
    assert q.pop() is EMPTY


def test_25000_pushes_at_most_three_blocks():
    q = LockFreeQueue(block_size=10_000)
    for i in range(25_000):
        q.push(i)
    assert q.blocks_in_use() <= 3
    assert q.blocks_in_use() == 3


def test_one_recycle_after_a_full_block():
    C = 8
    q = LockFreeQueue(block_size=C)
    for i in range(C):
        q.push(i)
    for i in range(C):
        assert q.pop() == i
    assert q.recycle_events == 1
    assert q.shift == C
    assert q.blocks_in_use() == 1


def test_fifo_across_recycle_boundary():
    q = LockFreeQueue(block_size=5)
    out = []
    n = 0
    for _ in range(20):
        for _ in range(3):
            q.push(n)
            n += 1
        out.append(q.pop())
        out.append(q.pop())
    out.extend(q.drain())
    assert out == list(range(n))
    assert q.recycle_events >= 10


def test_3c_pushes_then_3c_pops_respects_bounds():
    C = 10
    q = LockFreeQueue(block_size=C)
    for i in range(3 * C):
        q.push(i)
        assert q.blocks_in_use() <= allocation_bounds(i + 1, 0, C)[1]
    for j in range(3 * C):
        assert q.pop() == j
        lo, hi = allocation_bounds(3 * C, j + 1, C)
        assert lo <= q.blocks_in_use() <= hi
    # consumed blocks were rotated, not leaked
    assert q.blocks_in_use() == 3
    assert q.recycle_events == 3
    for i in range(3 * C):
        q.push(i)
    assert q.blocks_in_use() == 3


def test_allocation_bounds_examples():
    assert allocation_bounds(100, 100, 10) == (1, 10)
    assert allocation_bounds(0, 0, 5) == (1, 1)
    assert allocation_bounds(25_000, 0, 10_000) == (3, 3)
    with pytest.raises(DomainError):
        allocation_bounds(1, 2, 5)
    with pytest.raises(DomainError):
        allocation_bounds(1, 0, 0)


def _replay(trace, C):
    q = LockFreeQueue(block_size=C)
    n = 0
    for op in trace:
        if op:
            q.push(n)
            n += 1
        else:
            q.pop()
    return q


@pytest.mark.parametrize("C", [1, 2, 5])
def test_block_count_bounds_exhaustive(C):
    """Every push/pop trace with n1, n2 <= 30 (pops only when non-empty).

    Traces reaching the same (n1, n2, queue state) behave identically from then
    on, so exploring one representative per state covers every trace.
    """
    N = 30
    frontier = {(0, 0, (0, 0, 1)): ()}
    checked = 0
    while frontier:
        nxt = {}
        for (n1, n2, _), trace in frontier.items():
            for op in (True, False):
                if op and n1 == N:
                    continue
                if not op and n2 == n1:
                    continue
                t = trace + (op,)
                q = _replay(t, C)
                a, b = (n1 + 1, n2) if op else (n1, n2 + 1)
                lo, hi = allocation_bounds(a, b, C)
                assert lo <= q.blocks_in_use() <= hi, (t, q.debug_state())
                checked += 1
                nxt.setdefault((a, b, q.debug_state()), t)
        frontier = nxt
    assert checked > 0


def test_ring_model_no_aliasing():
    C = 16
    rng = random.Random(3)
    q = LockFreeQueue(block_size=C)
    model = deque()
    n = 0
    for step in range(100_000):
        if rng.random() < 0.5:
            q.push(n)
            model.append(n)
            n += 1
        else:
            v = q.pop()
            assert v == (model.popleft() if model else EMPTY)
        if step % 97 == 0:
            h, t, _ = q.debug_state()
            cells = set()
            for i, p in enumerate(range(h, t)):
                blk = q._blocks[p // C]
                cell = (id(blk), p % C)
                assert cell not in cells
                cells.add(cell)
                assert blk[p % C] == model[i]
    assert q.drain() == list(model)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.integers(0, 1000), st.none()), max_size=200), st.integers(1, 7))
def test_sequential_fifo_property(ops, C):
    q = LockFreeQueue(block_size=C)
    model = deque()
    for op in ops:
        if op is None:
            got = q.pop()
            assert got == (model.popleft() if model else EMPTY)
        else:
            q.push(op)
            model.append(op)
        assert len(q) == len(model)


def test_concurrent_conservation(fast_switch):
    T = 16
    per = 2_000
    q = LockFreeQueue(block_size=64)
    popped = [[] for _ in range(T)]
    start = threading.Barrier(T)

    def work(t):
        rng = random.Random(t)
        start.wait()
        for i in range(per):
            q.push((t << 32) | i)
            if rng.random() < 0.6:
                v = q.pop()
                if v is not EMPTY:
                    popped[t].append(v)

    ts = [threading.Thread(target=work, args=(t,)) for t in range(T)]
    for th in ts:
        th.start()
    for th in ts:
        th.join()
    residual = q.drain()
    pushed = Counter((t << 32) | i for t in range(T) for i in range(per))
    assert Counter(v for p in popped for v in p) + Counter(residual) == pushed
    # each producer's values come out in its own push order
    for t in range(T):
        mine = [v for p in popped for v in p if v >> 32 == t]
        assert len(mine) == len(set(mine))


def test_queue_linearizability(fast_switch):
    rng = random.Random(11)
    with ConcurrentRecorder(4) as rec:
        for trial in range(300):
            q = LockFreeQueue(block_size=rng.choice([1, 2, 3]))
            threads = rng.randint(2, 4)
            ops = []
            for t in range(threads):
                ops.append([("push", (t << 8) | i) if rng.random() < 0.55 else ("pop", None) for i in range(rng.randint(1, 6))])
            h = rec.run(q, ops, apply_fifo_op)
            rest = q.drain()
            v = check_linearizable(h, "fifo")
            assert v.ok, (trial, h.events, rest)
