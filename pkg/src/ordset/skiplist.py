"""Concurrent deterministic 1-2-3-4 skiplist.

Every level is a sorted singly linked list ending in a node whose key is
``MAX_KEY``; a node's children are the run of nodes on the level below that
starts at its ``bottom`` and ends at the first node whose key equals its own.
Non-head index nodes keep between 2 and 5 children.

Each node packs ``key << 64 | next`` into one int (``kn``) so a reader always
sees a consistent key/next pair.  ``find`` never locks.  Mutators lock top-down
with hand-over-hand coupling: holding a node's lock grants the right to change
the ``kn``/``bottom`` fields of its children.  Insertion splits any 5-child node
on the way down; deletion fattens any 2-child node by merging it with an
adjacent sibling (and re-splitting when the pair is too large), so the final
terminal update never needs to propagate upwards.
"""

from __future__ import annotations

import threading
from collections import Counter
from fractions import Fraction
from math import ceil
from typing import Any, Dict, List, Optional, Tuple

from .arena import Arena, ArenaConfig, EpochReclaimer, NodeHeader
from .core import (
    MASK64,
    MAX_KEY,
    SLOT_BITS,
    SLOT_MASK,
    DomainError,
    OpStatus,
    ValidationReport,
    check_key,
)

RETRY = OpStatus.RETRY
ADDED = OpStatus.ADDED
ALREADY_PRESENT = OpStatus.ALREADY_PRESENT
REMOVED = OpStatus.REMOVED
NOT_FOUND = OpStatus.NOT_FOUND

MIN_ARITY = 2
MAX_ARITY = 5

HEAD_LEVEL = 1 << 30  # the head outranks every level for lock-order checks

VIOLATION_KINDS = ("ARITY", "ORDER", "SUBSET", "SENTINEL", "KEY_BOUND", "DUPLICATE", "MARKED")


class SkipNode(NodeHeader):
    __slots__ = ("kn", "bottom", "kv", "lock")

    def __init__(self) -> None:
        super().__init__()
        self.kn = 0
        self.bottom = 0
        self.kv = None
        self.lock = threading.Lock()

    @property
    def key(self) -> int:
        return self.kn >> 64

    @property
    def next(self) -> int:
        return self.kn & MASK64


def rebalance_bound(a: int, b: int, n: int, h: int) -> int:
    """Upper bound on re-balancing operations at height ``h`` of an (a,b)-tree."""
    if a < 2 or b <= 2 * a + 1:
        raise DomainError("bound requires a >= 2 and b > 2a+1")
    if h < 1 or n < 0:
        raise DomainError("need h >= 1 and n >= 0")
    c = min(min(2 * a - 1, -(-(b + 1) // 2)) - a, b - max(2 * a - 1, (b + 1) // 2))
    return ceil(Fraction(2 * (c + 2) * n, (c + 1) ** h))


class RebalanceLedger:
    """Per-height counters of splits, merges and borrows."""

    def __init__(self, a: int = MIN_ARITY, b: int = MAX_ARITY) -> None:
        self.a = a
        self.b = b
        self.splits: Counter = Counter()
        self.merges: Counter = Counter()
        self.borrows: Counter = Counter()
        self.arity: Counter = Counter()  # filled by validate()
        self.additions = 0
        self.deletions = 0
        self._lock = threading.Lock()

    def split(self, h: int) -> None:
        with self._lock:
            self.splits[h] += 1

    def merge(self, h: int) -> None:
        with self._lock:
            self.merges[h] += 1

    def borrow(self, h: int) -> None:
        with self._lock:
            self.borrows[h] += 1

    def mutated(self, added: bool) -> None:
        with self._lock:
            if added:
                self.additions += 1
            else:
                self.deletions += 1

    @property
    def mutations(self) -> int:
        return self.additions + self.deletions

    def counts(self, h: int) -> int:
        return self.splits[h] + self.merges[h] + self.borrows[h]

    def heights(self) -> List[int]:
        return sorted(set(self.splits) | set(self.merges) | set(self.borrows))

    def total(self) -> int:
        return sum(self.splits.values()) + sum(self.merges.values()) + sum(self.borrows.values())

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            return {
                "splits": sum(self.splits.values()),
                "merges": sum(self.merges.values()),
                "borrows": sum(self.borrows.values()),
                "additions": self.additions,
                "deletions": self.deletions,
            }

    def merge_from(self, other: "RebalanceLedger") -> None:
        self.splits.update(other.splits)
        self.merges.update(other.merges)
        self.borrows.update(other.borrows)
        self.additions += other.additions
        self.deletions += other.deletions


class LockTracker:
    """Debug instrumentation: lock order, footprint and lock-free reads."""

    def __init__(self) -> None:
        self._tls = threading.local()
        self._lock = threading.Lock()
        self.order_violations = 0
        self.peak: Dict[str, int] = {"insert": 0, "remove": 0}
        self.find_acquisitions = 0

    def _state(self):
        st = self._tls
        if not hasattr(st, "held"):
            st.held = []
            st.acquired = 0
            st.peak = 0
            st.chain = 0
        return st

    def acquired(self, node: SkipNode, level: int) -> None:
        st = self._state()
        key = node.kn >> 64
        for lvl, _, other in st.held:
            if not (level < lvl or (level == lvl and key > other.kn >> 64)):
                with self._lock:
                    self.order_violations += 1
                break
        st.held.append((level, key, node))
        st.acquired += 1
        n = len(st.held) - st.chain
        if n > st.peak:
            st.peak = n

    def released(self, node: SkipNode) -> None:
        held = self._state().held
        for i in range(len(held) - 1, -1, -1):
            if held[i][2] is node:
                del held[i]
                return
        raise AssertionError("released a lock that was not held")

    def chain(self, delta: int) -> None:
        self._state().chain += delta

    def begin(self) -> int:
        st = self._state()
        st.peak = 0
        st.chain = 0
        return st.acquired

    def end(self, op: str) -> None:
        st = self._state()
        with self._lock:
            if st.peak > self.peak[op]:
                self.peak[op] = st.peak
        st.chain = 0

    def check_find(self, before: int) -> None:
        diff = self._state().acquired - before
        if diff:
            with self._lock:
                self.find_acquisitions += diff


class Skiplist:
    def __init__(self, block_capacity: int = 10_000, debug: bool = False) -> None:
        self.arena = Arena(ArenaConfig(block_capacity=block_capacity, node_kind=SkipNode, debug=debug))
        self._reclaim = EpochReclaimer(self.arena)
        self.ledger = RebalanceLedger()
        self.tracker: Optional[LockTracker] = LockTracker() if debug else None
        self._blocks = self.arena.blocks
        a = self.arena
        tail = a.new()
        self.TAIL = tail.handle
        tail.kn = (MAX_KEY << 64) | self.TAIL
        tail.bottom = self.TAIL
        bot = a.new()
        self.BOTTOM = bot.handle
        bot.kn = (MAX_KEY << 64) | self.BOTTOM
        bot.bottom = self.BOTTOM
        self._tail = tail
        self._bottom = bot
        end = self._new_node((MAX_KEY << 64) | self.TAIL, self.BOTTOM)
        head = self._new_node((MAX_KEY << 64) | self.TAIL, end.handle)
        self._head = head
        self.head = head.handle
        self.levels = 1

    # node helpers
    def _deref(self, h: int) -> SkipNode:
        return self._blocks[h >> SLOT_BITS][h & SLOT_MASK]

    def _new_node(self, kn: int, bottom: int, kv: Any = None) -> SkipNode:
        n = self.arena.new()
        n.kn = kn
        n.bottom = bottom
        n.kv = kv
        return n

    def _children(self, node: SkipNode) -> List[SkipNode]:
        key = node.kn >> 64
        blocks = self._blocks
        tail = self.TAIL
        out = []
        h = node.bottom
        while h != tail:
            c = blocks[h >> SLOT_BITS][h & SLOT_MASK]
            kn = c.kn
            ck = kn >> 64
            if ck > key:
                break
            out.append(c)
            if ck == key:
                break
            h = kn & MASK64
        return out

    def _acquire(self, node: SkipNode, level: int, held: list) -> None:
        node.lock.acquire()
        held.append(node)
        if self.tracker is not None:
            self.tracker.acquired(node, level)

    def _release(self, node: SkipNode, held: list) -> None:
        held.remove(node)
        if self.tracker is not None:
            self.tracker.released(node)
        node.lock.release()

    def _release_all(self, held: list) -> None:
        tr = self.tracker
        while held:
            n = held.pop()
            if tr is not None:
                tr.released(n)
            n.lock.release()

    def _retire(self, node: SkipNode) -> None:
        self._reclaim.retire(node.handle)

    # public API
    def insert(self, key: int, value: Any = None) -> OpStatus:
        check_key(key)
        tr = self.tracker
        if tr is not None:
            tr.begin()
        tid = self._reclaim.pin()
        try:
            while True:
                r = self._addition(key, value)
                if r is not RETRY:
                    break
        finally:
            self._reclaim.unpin(tid)
            if tr is not None:
                tr.end("insert")
        if r is ADDED:
            self.ledger.mutated(True)
        return r

    def remove(self, key: int) -> OpStatus:
        check_key(key)
        tr = self.tracker
        if tr is not None:
            tr.begin()
        tid = self._reclaim.pin()
        try:
            while True:
                r = self._deletion(key)
                if r is not RETRY:
                    break
        finally:
            self._reclaim.unpin(tid)
            if tr is not None:
                tr.end("remove")
        if r is REMOVED:
            self.ledger.mutated(False)
            if self._root_is_thin():
                self.decrease_depth()
        return r

    def find(self, key: int) -> bool:
        if not 0 <= key < MAX_KEY:
            return False
        tr = self.tracker
        before = tr.begin() if tr is not None else 0
        tid = self._reclaim.pin()
        try:
            while True:
                r = self._locate(key)
                if r is not None:
                    break
        finally:
            self._reclaim.unpin(tid)
            if tr is not None:
                tr.check_find(before)
        return r[1] >> 64 == key

    __contains__ = find

    def get(self, key: int, default: Any = None) -> Any:
        """Satellite value stored with ``key``, or ``default`` when absent."""
        if not 0 <= key < MAX_KEY:
            return default
        tid = self._reclaim.pin()
        try:
            while True:
                r = self._locate(key)
                if r is None:
                    continue
                node, kn = r
                if kn >> 64 != key:
                    return default
                kv = node.kv
                if kv is None or kv[0] != key or node.kn != kn:
                    continue  # writer has not published the value yet
                return kv[1]
        finally:
            self._reclaim.unpin(tid)

    def range_scan(self, lo: int, hi: int) -> List[int]:
        if lo > hi:
            raise DomainError("range_scan needs lo <= hi")
        out: List[int] = []
        cur = lo
        blocks = self._blocks
        tid = self._reclaim.pin()
        try:
            while cur < MAX_KEY:
                r = self._locate(cur)
                if r is None:
                    continue
                node, kn = r
                while True:
                    k = kn >> 64
                    if k > hi or k == MAX_KEY:
                        return out
                    if not out or k > out[-1]:
                        out.append(k)
                    h = kn & MASK64
                    node = blocks[h >> SLOT_BITS][h & SLOT_MASK]
                    if node.mark:
                        if out:
                            cur = out[-1] + 1
                        break
                    kn = node.kn
            return out
        finally:
            self._reclaim.unpin(tid)

    def __iter__(self):
        return iter(self.range_scan(0, MAX_KEY - 1))

    def __len__(self) -> int:
        return len(self.range_scan(0, MAX_KEY - 1))

    # lock-free descent
    def _locate(self, key: int) -> Optional[Tuple[SkipNode, int]]:
        """First terminal node whose key is >= ``key`` with the word read from it.

        Returns None when the caller must restart from the head.
        """
        blocks = self._blocks
        TAIL = self.TAIL
        BOTTOM = self.BOTTOM
        head = self._head
        n = head
        while True:
            if n.mark:
                return None
            kn = n.kn
            if n is head and kn & MASK64 != TAIL:
                return None
            h = n.bottom
            if h == BOTTOM:
                if kn >> 64 >= key:
                    return n, kn
                h = kn & MASK64
                if h == TAIL:
                    return None
                n = blocks[h >> SLOT_BITS][h & SLOT_MASK]
                continue
            if kn >> 64 < key:
                # key moved below the target: continue to the right
                h = kn & MASK64
                if h == TAIL:
                    return None
                n = blocks[h >> SLOT_BITS][h & SLOT_MASK]
                continue
            while True:
                if h == TAIL:
                    return None
                d = blocks[h >> SLOT_BITS][h & SLOT_MASK]
                if d.mark or n.mark:
                    return None
                dkn = d.kn
                if dkn >> 64 >= key:
                    break
                h = dkn & MASK64
            n = d

    # insertion
    def _split(self, node: SkipNode, ch: List[SkipNode], level: int, held: list, lock_new: bool) -> SkipNode:
        nn = self._new_node(node.kn, ch[2].handle)
        node.kn = ((ch[1].kn >> 64) << 64) | nn.handle
        if lock_new:
            # only a holder of the parent lock can reach nn, so locking after publishing is safe
            self._acquire(nn, level, held)
        self.ledger.split(level)
        return nn

    def _grow_root(self) -> bool:
        """Caller holds the head lock."""
        head = self._head
        kn = head.kn
        nxt = kn & MASK64
        if nxt == self.TAIL or nxt == self.BOTTOM:
            return False
        d = self._new_node(kn, head.bottom)
        head.bottom = d.handle
        head.kn = (MAX_KEY << 64) | self.TAIL
        self.levels += 1
        return True

    def increase_depth(self) -> None:
        held: list = []
        try:
            self._acquire(self._head, HEAD_LEVEL, held)
            self._grow_root()
        finally:
            self._release_all(held)

    def _addition(self, key: int, value: Any) -> OpStatus:
        held: list = []
        try:
            head = self._head
            self._acquire(head, HEAD_LEVEL, held)
            if head.kn & MASK64 != self.TAIL:
                return RETRY
            level = self.levels
            P = head
            ch = self._children(P)
            if len(ch) >= MAX_ARITY:
                self._split(P, ch, level, held, lock_new=False)
                self._grow_root()
                level = self.levels
                ch = self._children(P)
            while True:
                if ch[0].bottom == self.BOTTOM:
                    return self._add_node(ch, key, value)
                for c in ch:
                    if c.kn >> 64 >= key:
                        break
                self._acquire(c, level - 1, held)
                cch = self._children(c)
                self._check_node_key(c, cch)
                if len(cch) >= MAX_ARITY:
                    nn = self._split(c, cch, level - 1, held, lock_new=True)
                    if key <= cch[1].kn >> 64:
                        self._release(nn, held)
                        cch = cch[:2]
                    else:
                        self._release(c, held)
                        c, cch = nn, cch[2:]
                self._release(P, held)
                P, ch, level = c, cch, level - 1
        finally:
            self._release_all(held)

    def _add_node(self, ch: List[SkipNode], key: int, value: Any) -> OpStatus:
        for c in ch:
            kn = c.kn
            ck = kn >> 64
            if ck >= key:
                break
        if ck == key:
            return ALREADY_PRESENT
        # c takes the new key in place; its old contents move to a fresh node
        nn = self._new_node(kn, self.BOTTOM, c.kv)
        c.kn = (key << 64) | nn.handle
        c.kv = (key, value)
        return ADDED

    @staticmethod
    def _check_node_key(node: SkipNode, ch: List[SkipNode]) -> None:
        """Lower a stale key to the node's largest child key (caller holds the parent)."""
        if ch:
            top = ch[-1].kn >> 64
            kn = node.kn
            if top < kn >> 64:
                node.kn = (top << 64) | (kn & MASK64)

    # deletion
    def _root_is_thin(self) -> bool:
        b = self._deref(self._head.bottom)
        return b.kn >> 64 == MAX_KEY and b.bottom != self.BOTTOM and b is not self._tail

    def _shrink_root(self, held: list) -> bool:
        """Caller holds the head lock; drops one level when the head has a single index child."""
        head = self._head
        b = self._deref(head.bottom)
        if b is self._tail or b is self._bottom or b.bottom == self.BOTTOM:
            return False
        if b.kn >> 64 != head.kn >> 64:
            return False
        self._acquire(b, self.levels - 1, held)
        head.bottom = b.bottom
        b.mark = True
        self._release(b, held)
        self._retire(b)
        self.levels -= 1
        return True

    def decrease_depth(self) -> None:
        held: list = []
        tid = self._reclaim.pin()
        try:
            self._acquire(self._head, HEAD_LEVEL, held)
            while self._shrink_root(held):
                pass
        finally:
            self._release_all(held)
            self._reclaim.unpin(tid)

    def _deletion(self, key: int) -> OpStatus:
        held: list = []
        keep: List[SkipNode] = []
        tr = self.tracker
        try:
            head = self._head
            self._acquire(head, HEAD_LEVEL, held)
            if head.kn & MASK64 != self.TAIL:
                return RETRY
            while self._shrink_root(held):
                pass
            level = self.levels
            P = head
            ch = self._children(P)
            while True:
                if ch[0].bottom == self.BOTTOM:
                    return self._drop_key(P, ch, key, keep)
                for i, c in enumerate(ch):
                    if c.kn >> 64 >= key:
                        break
                if i > 0:
                    left, right = ch[i - 1], c
                elif len(ch) > 1:
                    left, right = c, ch[1]
                else:
                    left = right = None
                if left is None:
                    self._acquire(c, level - 1, held)
                    x, xch = c, self._children(c)
                else:
                    self._acquire(left, level - 1, held)
                    self._acquire(right, level - 1, held)
                    x, xch = self._merge_borrow(left, right, key, level - 1, held)
                self._check_node_key(x, xch)
                if x.kn >> 64 == key:
                    # x may lose its largest key below; keep P so x's key can be repaired
                    keep.append(P)
                    if tr is not None:
                        tr.chain(1)
                else:
                    for k in keep:
                        self._release(k, held)
                    if tr is not None:
                        tr.chain(-len(keep))
                    keep.clear()
                    self._release(P, held)
                P, ch, level = x, xch, level - 1
        finally:
            self._release_all(held)

    def _merge_borrow(self, left: SkipNode, right: SkipNode, key: int, level: int, held: list):
        lch = self._children(left)
        rch = self._children(right)
        fn = key <= left.kn >> 64
        thin_left = fn and len(lch) == MIN_ARITY
        thin_right = (not fn) and len(rch) == MIN_ARITY
        if not (thin_left or thin_right):
            if fn:
                self._release(right, held)
                return left, lch
            self._release(left, held)
            return right, rch
        r_kn = right.kn
        left.kn = r_kn  # left absorbs right's children
        right.mark = True
        # right is unreachable for other writers: they would need our lock on the parent
        self._release(right, held)
        if thin_left and len(rch) > MIN_ARITY:
            nn = self._new_node(r_kn, rch[1].handle)
            left.kn = ((rch[0].kn >> 64) << 64) | nn.handle
            self.ledger.borrow(level)
            x, xch = left, lch + rch[:1]
        elif thin_right and len(lch) > MIN_ARITY:
            nn = self._new_node(r_kn, lch[-1].handle)
            left.kn = ((lch[-2].kn >> 64) << 64) | nn.handle
            self._acquire(nn, level, held)
            self.ledger.borrow(level)
            x, xch = nn, lch[-1:] + rch
            self._release(left, held)
        else:
            self.ledger.merge(level)
            x, xch = left, lch + rch
        self._retire(right)
        return x, xch

    def _drop_key(self, P: SkipNode, ch: List[SkipNode], key: int, keep: List[SkipNode]) -> OpStatus:
        for j, c in enumerate(ch):
            ck = c.kn >> 64
            if ck >= key:
                break
        if ck != key:
            return NOT_FOUND
        if j > 0:
            pred = ch[j - 1]
            pkn = pred.kn
            pred.kn = ((pkn >> 64) << 64) | (c.kn & MASK64)
            c.mark = True
            self._retire(c)
            if j == len(ch) - 1:
                self._lower_chain(P, keep, key, pkn >> 64)
        else:
            # first child: take over the successor's contents instead of unlinking
            nx = ch[1]
            c.kn = nx.kn
            c.kv = nx.kv
            nx.mark = True
            self._retire(nx)
        return REMOVED

    @staticmethod
    def _lower_chain(P: SkipNode, keep: List[SkipNode], key: int, new_key: int) -> None:
        P.kn = (new_key << 64) | (P.kn & MASK64)
        for A in reversed(keep):
            kn = A.kn
            if kn >> 64 != key:
                break
            A.kn = (new_key << 64) | (kn & MASK64)

    # quiescent checks
    def validate(self) -> ValidationReport:
        rep = ValidationReport()
        TAIL, BOTTOM = self.TAIL, self.BOTTOM
        for name, node, h in (("TAIL", self._tail, TAIL), ("BOTTOM", self._bottom, BOTTOM)):
            if node.kn & MASK64 != h or node.bottom != h:
                rep.add("SENTINEL", f"{name} sentinel does not reference itself")
        head = self._head
        if head.kn >> 64 != MAX_KEY or head.kn & MASK64 != TAIL:
            rep.add("SENTINEL", "head is not (MAX, TAIL)")
        if head.mark:
            rep.add("MARKED", "head is marked")
        limit = self.arena.blocks_in_use() * self.arena.block_capacity + 4
        arity = self.ledger.arity
        arity.clear()
        parents = [head]
        level = 0
        while True:
            level += 1
            start = parents[0].bottom
            if start == BOTTOM:
                break
            row: List[SkipNode] = []
            h = start
            while h != TAIL and len(row) <= limit:
                n = self._deref(h)
                row.append(n)
                h = n.kn & MASK64
            if h != TAIL:
                rep.add("ORDER", f"level {level}: list does not terminate")
                return rep
            terminal = row[0].bottom == BOTTOM
            where = f"level {level}"
            prev = None
            for n in row:
                k = n.kn >> 64
                if n.mark:
                    rep.add("MARKED", f"{where}: reachable marked node key={k}")
                if (n.bottom == BOTTOM) != terminal:
                    rep.add("SENTINEL", f"{where}: mixed terminal and index nodes")
                if prev is not None:
                    if k == prev:
                        rep.add("DUPLICATE", f"{where}: key {k} repeated")
                    elif k < prev:
                        rep.add("ORDER", f"{where}: {k} after {prev}")
                prev = k
            if row[-1].kn >> 64 != MAX_KEY:
                rep.add("SENTINEL", f"{where}: list does not end with the MAX node")
            for n in row[:-1]:
                if n.kn >> 64 == MAX_KEY:
                    rep.add("KEY_BOUND", f"{where}: reserved key stored in an inner node")
            # each parent must own a contiguous run of the row ending at its own key
            i = 0
            for p in parents:
                pk = p.kn >> 64
                if i >= len(row) or row[i].handle != p.bottom:
                    rep.add("ORDER", f"{where}: children of {pk} are not contiguous")
                    break
                j = i
                while j < len(row) and row[j].kn >> 64 < pk:
                    j += 1
                if j == len(row) or row[j].kn >> 64 != pk:
                    rep.add("SUBSET", f"{where}: parent key {pk} missing below")
                    n_ch = j - i
                    i = j
                else:
                    n_ch = j - i + 1
                    i = j + 1
                arity[n_ch] += 1
                is_head = p is head
                if n_ch > MAX_ARITY or n_ch < (1 if is_head else MIN_ARITY):
                    rep.add("ARITY", f"{where}: node {pk} has {n_ch} children")
            if i < len(row):
                rep.add("KEY_BOUND", f"{where}: {len(row) - i} nodes exceed every parent key")
            if terminal:
                rep.size = len(row) - 1
                rep.depth = level
                break
            parents = row
        return rep

    def keys(self) -> List[int]:
        """Terminal keys by direct traversal (quiescent use)."""
        out = []
        n = self._head
        while n.bottom != self.BOTTOM:
            n = self._deref(n.bottom)
        while True:
            k = n.kn >> 64
            if k == MAX_KEY:
                return out
            out.append(k)
            n = self._deref(n.kn & MASK64)

    def flush_retired(self) -> None:
        self._reclaim.flush()
