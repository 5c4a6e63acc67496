from __future__ import annotations

import bisect
import random
import threading

import pytest
from hypothesis import given, settings, strategies as st

from ordset.bench.lincheck import ConcurrentRecorder, apply_set_op, check_linearizable
from ordset.core import MASK64, MAX_KEY, DomainError, KeyReservedError, OpStatus
from ordset.skiplist import RebalanceLedger, Skiplist, rebalance_bound
from refmodel import Ref

ADDED = OpStatus.ADDED
REMOVED = OpStatus.REMOVED


def rows(s: Skiplist):
    """Key lists per level, top index level first, terminal level last."""
    out = []
    n = s._head
    while n.bottom != s.BOTTOM:
        n = s._deref(n.bottom)
        row = []
        m = n
        while True:
            row.append(m.kn >> 64)
            h = m.kn & MASK64
            if h == s.TAIL:
                break
            m = s._deref(h)
        out.append(row)
    return out


def splice_after(s: Skiplist, node, key: int):
    """Link a raw terminal node holding ``key`` right after ``node``."""
    new = s._new_node((key << 64) | (node.kn & MASK64), s.BOTTOM)
    node.kn = (node.kn >> 64 << 64) | new.handle
    return new


def terminal_node(s: Skiplist, key: int):
    n = s._head
    while n.bottom != s.BOTTOM:
        n = s._deref(n.bottom)
    while n.kn >> 64 != key:
        n = s._deref(n.kn & MASK64)
    return n


# basic examples


def test_empty():
    s = Skiplist()
    assert not s.find(5)
    assert s.remove(5) is OpStatus.NOT_FOUND
    assert s.range_scan(0, 100) == []
    assert s.validate().ok
    assert len(s) == 0


def test_insert_find_remove():
    s = Skiplist()
    assert s.insert(5) is ADDED
    assert s.keys() == [5]
    assert s.insert(5) is OpStatus.ALREADY_PRESENT
    assert s.find(5) and 5 in s
    assert s.remove(5) is REMOVED
    assert not s.find(5)
    assert s.validate().ok


def test_reserved_key():
    s = Skiplist()
    with pytest.raises(KeyReservedError):
        s.insert(MAX_KEY)
    with pytest.raises(KeyReservedError):
        s.remove(MAX_KEY)
    assert not s.find(MAX_KEY)


def test_satellite_value():
    s = Skiplist()
    s.insert(10, value="ten")
    s.insert(3)
    assert s.get(10) == "ten"
    assert s.get(3) is None
    assert s.get(4, "missing") == "missing"


def test_ascending_1_to_6():
    s = Skiplist()
    for k in range(1, 7):
        assert s.insert(k) is ADDED
    r = s.validate()
    assert r.ok and r.depth >= 2
    assert s.ledger.arity and all(2 <= a <= 5 for a in s.ledger.arity if a != 1)


@pytest.mark.parametrize(
    "keys",
    [
        list(range(1, 65)),
        list(range(200, 0, -1)),
        random.Random(1).sample(range(10_000), 500),
    ],
    ids=["ascending", "descending", "random"],
)
def test_shape_matches_reference(keys):
    ref = Ref()
    s = Skiplist()
    for k in keys:
        assert (s.insert(k) is ADDED) == ref.insert(k)
    assert rows(s) == ref.rows()
    assert s.validate().depth == ref.depth


def test_ascending_64_depth():
    s = Skiplist()
    for k in range(1, 65):
        s.insert(k)
    # frozen from the reference model
    assert s.validate().depth == 5
    assert s.levels == 5


def test_find_matches_oracle():
    rng = random.Random(2)
    s = Skiplist()
    keys = {rng.randrange(1 << 20) for _ in range(1000)}
    for k in keys:
        s.insert(k)
    for _ in range(1000):
        k = rng.randrange(1 << 20)
        assert s.find(k) == (k in keys)


def test_mixed_trace_vs_oracle_every_step():
    rng = random.Random(4)
    s = Skiplist(debug=True)
    ref = set()
    for _ in range(10_000):
        k = rng.randrange(300)
        if rng.random() < 0.5:
            assert (s.insert(k) is ADDED) == (k not in ref)
            ref.add(k)
        else:
            assert (s.remove(k) is REMOVED) == (k in ref)
            ref.discard(k)
        assert s.find(k) == (k in ref)
    assert s.keys() == sorted(ref)
    assert s.validate().ok


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 40)), max_size=300))
def test_structure_valid_after_any_trace(ops):
    s = Skiplist()
    ref = set()
    for add, k in ops:
        if add:
            s.insert(k)
            ref.add(k)
        else:
            s.remove(k)
            ref.discard(k)
    r = s.validate()
    assert r.ok, r.violations
    assert s.keys() == sorted(ref)
    assert r.size == len(ref)


# depth changes


def test_increase_depth_noop_on_sentinel_next():
    s = Skiplist()
    s.increase_depth()
    assert s.levels == 1
    assert s.validate().ok


def test_head_key_stays_max_after_root_splits():
    s = Skiplist()
    for k in range(1, 30):
        s.insert(k)
        assert s._head.kn >> 64 == MAX_KEY
    assert s.levels > 1


def test_decrease_depth_noop_cases():
    s = Skiplist()
    s.decrease_depth()
    assert s.levels == 1
    for k in (1, 2):
        s.insert(k)
    s.decrease_depth()  # head key != child key
    assert s.validate().ok and s.keys() == [1, 2]


def test_deleting_down_to_one_key_restores_minimum_depth():
    s = Skiplist()
    for k in range(1, 40):
        s.insert(k)
    assert s.validate().depth >= 3
    for k in range(1, 39):
        s.remove(k)
        assert s.validate().ok
    for _ in range(5):
        s.decrease_depth()
    r = s.validate()
    assert r.ok and r.depth == 1 and s.keys() == [39]


# validation negatives


def test_validate_reports_six_children():
    s = Skiplist()
    for k in range(1, 6):
        s.insert(k)
    assert s.validate().ok
    five = terminal_node(s, 5)
    splice_after(s, five, 6)
    splice_after(s, terminal_node(s, 6), 7)
    r = s.validate()
    assert not r.ok
    assert "ARITY" in r.kinds()


def test_validate_reports_order_and_duplicates():
    s = Skiplist()
    for k in (10, 20):
        s.insert(k)
    splice_after(s, terminal_node(s, 10), 10)
    r = s.validate()
    assert "DUPLICATE" in r.kinds()
    s = Skiplist()
    for k in (10, 20):
        s.insert(k)
    splice_after(s, terminal_node(s, 20), 15)
    assert "ORDER" in s.validate().kinds()


def test_validate_reports_marked_node():
    s = Skiplist()
    s.insert(1)
    terminal_node(s, 1).mark = True
    assert "MARKED" in s.validate().kinds()


# range scan


def test_range_scan_examples():
    s = Skiplist()
    for k in (1, 3, 5, 7):
        s.insert(k)
    assert s.range_scan(2, 6) == [3, 5]
    assert s.range_scan(1, 7) == [1, 3, 5, 7]
    assert s.range_scan(8, 9) == []
    with pytest.raises(DomainError):
        s.range_scan(6, 2)


def test_range_scan_vs_oracle():
    rng = random.Random(5)
    s = Skiplist()
    keys = sorted({rng.randrange(1 << 30) for _ in range(1000)})
    for k in keys:
        s.insert(k)
    for _ in range(100):
        lo = rng.randrange(1 << 30)
        hi = lo + rng.randrange(1 << 27)
        want = keys[bisect.bisect_left(keys, lo) : bisect.bisect_right(keys, hi)]
        assert s.range_scan(lo, hi) == want


# re-balancing bound and ledger


def test_rebalance_bound_examples():
    assert rebalance_bound(2, 6, 100, 1) == 300
    assert rebalance_bound(2, 6, 0, 1) == 0
    vals = [rebalance_bound(2, 6, 1000, h) for h in range(1, 12)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[0] > vals[-1]


@pytest.mark.parametrize("a,b", [(2, 5), (2, 4), (3, 7)])
def test_rebalance_bound_domain(a, b):
    with pytest.raises(DomainError):
        rebalance_bound(a, b, 10, 1)


def test_rebalance_bound_other_parameters():
    # c = min(min(5, 5) - 3, 9 - max(5, 5)) = 2, bound = ceil(2 * 4 * 50 / 3^2)
    assert rebalance_bound(3, 9, 50, 2) == 45


def test_ledger_is_monotone_and_linear():
    rng = random.Random(9)
    s = Skiplist()
    prev = 0
    xs, ys = [], []
    for i in range(20_000):
        k = rng.randrange(5_000)
        if rng.random() < 0.6:
            s.insert(k)
        else:
            s.remove(k)
        t = s.ledger.total()
        assert t >= prev
        prev = t
        if i % 500 == 499:
            xs.append(s.ledger.mutations)
            ys.append(t)
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)
    assert 0 < slope <= 3.0


def test_ledger_merge_from():
    a, b = RebalanceLedger(), RebalanceLedger()
    a.split(1)
    b.split(1)
    b.merge(2)
    a.merge_from(b)
    assert a.counts(1) == 2 and a.counts(2) == 1


# concurrency


def test_concurrent_disjoint_keys(fast_switch):
    s = Skiplist(block_capacity=256, debug=True)
    T = 6
    errors = []

    def work(t):
        rng = random.Random(t)
        mine = set()
        try:
            for _ in range(3000):
                k = rng.randrange(400) * T + t
                if rng.random() < 0.55:
                    assert (s.insert(k) is ADDED) == (k not in mine)
                    mine.add(k)
                else:
                    assert (s.remove(k) is REMOVED) == (k in mine)
                    mine.discard(k)
                assert s.find(k) == (k in mine)
        except BaseException as exc:  # noqa: BLE001
            errors.append(exc)
        finals[t] = mine

    finals = [None] * T
    ts = [threading.Thread(target=work, args=(t,)) for t in range(T)]
    for th in ts:
        th.start()
    for th in ts:
        th.join()
    assert errors == []
    assert s.keys() == sorted(set().union(*finals))
    r = s.validate()
    assert r.ok, r.violations
    tr = s.tracker
    assert tr.order_violations == 0
    assert tr.find_acquisitions == 0
    assert tr.peak["insert"] <= 6
    assert tr.peak["remove"] <= 12
    assert s.arena.double_frees == 0


def test_concurrent_shared_keys_then_valid(fast_switch):
    s = Skiplist(block_capacity=128)
    T = 4
    barrier = threading.Barrier(T)

    def work(t):
        rng = random.Random(100 + t)
        barrier.wait()
        for _ in range(3000):
            k = rng.randrange(64)
            r = rng.random()
            if r < 0.4:
                s.insert(k)
            elif r < 0.8:
                s.remove(k)
            else:
                s.find(k)
                s.range_scan(k, k + 10)

    ts = [threading.Thread(target=work, args=(t,)) for t in range(T)]
    for th in ts:
        th.start()
    for th in ts:
        th.join()
    r = s.validate()
    assert r.ok, r.violations
    assert all(s.find(k) for k in s.keys())


def test_skiplist_linearizability_sample(fast_switch):
    rng = random.Random(21)
    ops_kinds = ("insert", "remove", "find")
    with ConcurrentRecorder(6) as rec:
        for trial in range(400):
            s = Skiplist(block_capacity=32)
            init = rng.sample(range(8), rng.randint(0, 4))
            for k in init:
                s.insert(k)
            n_threads = rng.randint(2, 6)
            ops = [[(rng.choice(ops_kinds), rng.randrange(8)) for _ in range(rng.randint(1, 8))] for _ in range(n_threads)]
            h = rec.run(s, ops, apply_set_op)
            v = check_linearizable(h, "set", initial=init)
            assert v.ok, (trial, init, h.events)
            assert s.validate().ok
