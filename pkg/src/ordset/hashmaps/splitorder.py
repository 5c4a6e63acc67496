"""Split-ordered hash table with reader/writer locks.

All entries live in one singly linked list sorted by bit-reversed hash.  A
directory maps bucket ``b`` to a dummy node placed at ``reverse(b)``; because
refining a bucket only ever inserts a new dummy inside its parent's run of the
list, doubling the directory moves no data.  New directory entries are filled
lazily, recursively creating the parent bucket's dummy first.

Each dummy carries a reader/writer lock protecting the list segment that
follows it up to the next dummy.  The table-wide lock is taken shared by every
operation and exclusively only to double the directory.
"""

from __future__ import annotations

from typing import List, Optional

from .._sync import RWLock
from ..arena import Arena, ArenaConfig, NodeHeader
from ..core import AtomicInt, DomainError, OpStatus, ValidationReport, check_key
from .hashing import hash64, is_power_of_two, parent_bucket, reverse_bits, so_order_key


class SoNode(NodeHeader):
    __slots__ = ("okey", "key", "dummy", "next", "rw")

    def __init__(self) -> None:
        super().__init__()
        self.okey = 0
        self.key = 0
        self.dummy = False
        self.next: Optional[SoNode] = None
        self.rw: Optional[RWLock] = None


class SplitOrderTable:
    def __init__(
        self,
        seed: int = 8192,
        max_collisions: int = 16,
        max_slots: int = 1 << 22,
        block_capacity: int = 4096,
    ) -> None:
        if not is_power_of_two(seed) or not is_power_of_two(max_slots) or max_slots < seed:
            raise DomainError("seed and max_slots must be powers of two with seed <= max_slots")
        if max_collisions < 1:
            raise DomainError("max_collisions must be >= 1")
        self._m = max_collisions
        self._max = max_slots
        self.seed = seed
        self.arena = Arena(ArenaConfig(block_capacity=block_capacity, node_kind=SoNode))
        self._table = RWLock()
        self._count = AtomicInt(0)
        self._n = seed
        self._dir: List[Optional[SoNode]] = [None] * seed
        self.resizes = 0
        prev = None
        for okey, b in sorted((so_order_key(b, True), b) for b in range(seed)):
            d = self._new_dummy(okey, b)
            if prev is not None:
                prev.next = d
            prev = d
            self._dir[b] = d
        self._head = self._dir[0]

    def _new_dummy(self, okey: int, bucket: int) -> SoNode:
        d = self.arena.new()
        d.okey = okey
        d.key = bucket
        d.dummy = True
        d.next = None
        if d.rw is None:
            d.rw = RWLock()
        return d

    @property
    def size(self) -> int:
        """Current directory length."""
        return self._n

    def __len__(self) -> int:
        return self._count.value

    # bucket initialisation
    def spo_ensure_slot(self, bucket: int) -> SoNode:
        with self._table.read():
            if not 0 <= bucket < self._n:
                raise DomainError(f"bucket {bucket} outside directory of {self._n}")
            return self._ensure(bucket)

    def _ensure(self, b: int) -> SoNode:
        d = self._dir[b]
        if d is not None:
            return d
        pd = self._ensure(parent_bucket(b))
        okd = so_order_key(b, True)
        owner = pd
        owner.rw.acquire_write()
        try:
            cur = pd
            while True:
                nx = cur.next
                if nx is None or nx.okey >= okd:
                    break
                if nx.dummy:
                    nx.rw.acquire_write()
                    owner.rw.release_write()
                    owner = nx
                cur = nx
            if nx is not None and nx.dummy and nx.okey == okd:
                d = nx  # another thread got here first
            else:
                d = self._new_dummy(okd, b)
                d.next = nx
                cur.next = d
            self._dir[b] = d
        finally:
            owner.rw.release_write()
        return d

    # list walk shared by all operations: returns (owner, pred, succ)
    def _seek(self, start: SoNode, okey: int, key: int, write: bool):
        owner = start
        cur = start
        while True:
            nx = cur.next
            if nx is None:
                break
            if nx.dummy:
                if nx.okey > okey:
                    break
                if write:
                    nx.rw.acquire_write()
                    owner.rw.release_write()
                else:
                    nx.rw.acquire_read()
                    owner.rw.release_read()
                owner = nx
            elif nx.okey > okey or (nx.okey == okey and nx.key >= key):
                break
            cur = nx
        return owner, cur, nx

    def insert(self, key: int) -> OpStatus:
        check_key(key)
        h = hash64(key)
        okey = reverse_bits(h) | 1
        added = False
        self._table.acquire_read()
        try:
            d = self._ensure(h & (self._n - 1))
            d.rw.acquire_write()
            owner = d
            try:
                owner, pred, nx = self._seek(d, okey, key, True)
                if nx is None or nx.dummy or nx.key != key:
                    node = self.arena.new()
                    node.okey = okey
                    node.key = key
                    node.dummy = False
                    node.next = nx
                    pred.next = node
                    added = True
            finally:
                owner.rw.release_write()
            if added:
                count = self._count.fetch_add(1) + 1
                grow = count > self._n * self._m
        finally:
            self._table.release_read()
        if not added:
            return OpStatus.ALREADY_PRESENT
        if grow:
            self.spo_resize()
        return OpStatus.ADDED

    def find(self, key: int) -> bool:
        h = hash64(key)
        okey = reverse_bits(h) | 1
        with self._table.read():
            d = self._ensure(h & (self._n - 1))
            d.rw.acquire_read()
            owner = d
            try:
                owner, _, nx = self._seek(d, okey, key, False)
                return nx is not None and not nx.dummy and nx.key == key
            finally:
                owner.rw.release_read()

    def erase(self, key: int) -> OpStatus:
        h = hash64(key)
        okey = reverse_bits(h) | 1
        with self._table.read():
            d = self._ensure(h & (self._n - 1))
            d.rw.acquire_write()
            owner = d
            try:
                owner, pred, nx = self._seek(d, okey, key, True)
                if nx is None or nx.dummy or nx.key != key:
                    return OpStatus.NOT_FOUND
                pred.next = nx.next
                nx.next = None
                # every reader of nx holds this segment's lock, so it can be recycled now
                self.arena.free(nx.handle)
            finally:
                owner.rw.release_write()
            self._count.fetch_add(-1)
        return OpStatus.REMOVED

    remove = erase
    __contains__ = find

    def spo_resize(self) -> bool:
        with self._table.write():
            n = self._n
            if self._count.value <= n * self._m or 2 * n > self._max:
                return False
            self._dir.extend([None] * n)
            self._n = 2 * n
            self.resizes += 1
            return True

    # inspection (quiescent)
    def order_scan(self) -> List[SoNode]:
        out = []
        n = self._head
        while n is not None:
            out.append(n)
            n = n.next
        return out

    def initialized_buckets(self) -> int:
        return sum(d is not None for d in self._dir)

    def keys(self) -> List[int]:
        return [n.key for n in self.order_scan() if not n.dummy]

    def validate(self) -> ValidationReport:
        rep = ValidationReport()
        nodes = self.order_scan()
        mask = self._n - 1
        prev = None
        seen_dummies: set = set()
        dummies = items = 0
        for n in nodes:
            pos = (n.okey, n.key)
            if prev is not None and pos <= prev:
                rep.add("ORDER", f"order key {n.okey:#x} not increasing")
            prev = pos
            if n.dummy:
                dummies += 1
                if n.okey & 1:
                    rep.add("PARITY", f"dummy for bucket {n.key} has odd order key")
                if n.key >= self._n or self._dir[n.key] is not n:
                    rep.add("DIRECTORY", f"dummy {n.key} not referenced by the directory")
                seen_dummies.add(n.key)
                continue
            items += 1
            if not n.okey & 1:
                rep.add("PARITY", f"item {n.key} has even order key")
            # a lookup starts at the nearest initialised ancestor bucket, so that
            # dummy must already be behind us
            b = hash64(n.key) & mask
            while self._dir[b] is None:
                b = parent_bucket(b)
            if b not in seen_dummies:
                rep.add("SPLIT", f"item {n.key} precedes the dummy of its bucket {b}")
        if dummies != self.initialized_buckets():
            rep.add("DIRECTORY", f"{dummies} dummies for {self.initialized_buckets()} initialized buckets")
        for b, d in enumerate(self._dir):
            if d is not None and d.okey != so_order_key(b, True):
                rep.add("DIRECTORY", f"bucket {b} points at dummy {d.key}")
        if items != self._count.value:
            rep.add("COUNT", f"count {self._count.value} but {items} items listed")
        if not is_power_of_two(self._n // self.seed) or self._n % self.seed:
            rep.add("DIRECTORY", f"directory size {self._n} is not seed * 2^k")
        rep.size = items
        return rep


class TwoLevelSpoTable:
    """A fixed first level of independent split-order tables."""

    def __init__(
        self,
        tables: int = 256,
        seed: int = 64,
        max_collisions: int = 16,
        max_slots: int = 1 << 16,
        block_capacity: int = 256,
    ) -> None:
        if not is_power_of_two(tables) or tables > 256:
            raise DomainError("first level must be a power of two no larger than 256")
        self._shift = 64 - (tables.bit_length() - 1)
        self._tables = [
            SplitOrderTable(seed=seed, max_collisions=max_collisions, max_slots=max_slots, block_capacity=block_capacity)
            for _ in range(tables)
        ]

    def _pick(self, key: int) -> SplitOrderTable:
        if len(self._tables) == 1:
            return self._tables[0]
        return self._tables[hash64(key) >> self._shift]

    def insert(self, key: int) -> OpStatus:
        check_key(key)
        return self._pick(key).insert(key)

    def find(self, key: int) -> bool:
        return self._pick(key).find(key)

    def erase(self, key: int) -> OpStatus:
        return self._pick(key).erase(key)

    remove = erase
    __contains__ = find

    @property
    def tables(self) -> List[SplitOrderTable]:
        return self._tables

    def __len__(self) -> int:
        return sum(len(t) for t in self._tables)

    def keys(self) -> List[int]:
        return [k for t in self._tables for k in t.keys()]

    def validate(self) -> ValidationReport:
        rep = ValidationReport()
        for i, t in enumerate(self._tables):
            sub = t.validate()
            for kind, where in sub.violations:
                rep.add(kind, f"table {i}: {where}")
            rep.size += sub.size
            for k in t.keys():
                if self._pick(k) is not t:
                    rep.add("SLOT", f"key {k} stored in table {i}")
        return rep
