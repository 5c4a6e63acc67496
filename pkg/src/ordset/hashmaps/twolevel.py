"""Two-level table: a slot grows a second level once it holds too many keys.

The low ``log2(M1)`` hash bits pick the first-level slot and the next
``log2(M2)`` bits pick the second-level slot.  Operations on an expanded slot
hold the first-level lock shared and the second-level lock in the mode they
need, so different second-level trees of one slot are updated concurrently.
Expansion and collapse take the first-level lock exclusively.

Second-level slots are created on first use, so an expanded slot costs memory
in proportion to the keys it holds rather than to ``M2``.
"""

from __future__ import annotations

import threading
from typing import Callable, Dict, List, Optional

from .._sync import RWLock
from ..arena import Arena, ArenaConfig
from ..core import AtomicInt, DomainError, OpStatus, ValidationReport, check_key
from .bst import TreeNode, bst_build, bst_erase, bst_find, bst_insert, bst_keys, bst_nodes
from .hashing import hash64, is_power_of_two


class _Leaf:
    __slots__ = ("rw", "root")

    def __init__(self) -> None:
        self.rw = RWLock()
        self.root = None


class _Slot:
    __slots__ = ("rw", "root", "second", "count", "arena", "mk")

    def __init__(self) -> None:
        self.rw = RWLock()
        self.root = None
        self.second: Optional[Dict[int, _Leaf]] = None
        self.count = AtomicInt(0)
        self.arena: Optional[Arena] = None
        self.mk = threading.Lock()


class TwoLevelTable:
    def __init__(
        self,
        slots: int = 8192,
        second_slots: int = 2048,
        expand_threshold: int = 10,
        block_capacity: int = 64,
        on_expand: Optional[Callable[[int, List[int], List[int]], None]] = None,
    ) -> None:
        if not is_power_of_two(slots) or not is_power_of_two(second_slots):
            raise DomainError("slot counts must be powers of two")
        self._M1 = slots
        self._m1 = slots - 1
        self._bits1 = slots.bit_length() - 1
        self._m2 = second_slots - 1
        self._threshold = expand_threshold
        self._block = block_capacity
        self._slots = [_Slot() for _ in range(slots)]
        self._count = AtomicInt(0)
        self.on_expand = on_expand
        self.expansions = 0
        self.collapses = 0

    def _leaf(self, s: _Slot, h: int) -> _Leaf:
        idx = (h >> self._bits1) & self._m2
        sec = s.second
        e = sec.get(idx)
        if e is None:
            with s.mk:
                e = sec.get(idx)
                if e is None:
                    e = sec[idx] = _Leaf()
        return e

    def _arena(self, s: _Slot) -> Arena:
        if s.arena is None:
            s.arena = Arena(ArenaConfig(block_capacity=self._block, node_kind=TreeNode))
        return s.arena

    def insert(self, key: int) -> OpStatus:
        check_key(key)
        h = hash64(key)
        s = self._slots[h & self._m1]
        s.rw.acquire_read()
        try:
            if s.second is not None:
                e = self._leaf(s, h)
                with e.rw.write():
                    added = bst_insert(e, key, s.arena)
                if added:
                    s.count.fetch_add(1)
                return self._added(added)
        finally:
            s.rw.release_read()
        with s.rw.write():
            if s.second is not None:
                added = bst_insert(self._leaf(s, h), key, s.arena)
                if added:
                    s.count.fetch_add(1)
            else:
                added = bst_insert(s, key, self._arena(s))
                if added:
                    s.count.fetch_add(1)
                    if s.count.value > self._threshold:
                        self._expand(s, h & self._m1)
        return self._added(added)

    def _added(self, added: bool) -> OpStatus:
        if added:
            self._count.fetch_add(1)
            return OpStatus.ADDED
        return OpStatus.ALREADY_PRESENT

    def find(self, key: int) -> bool:
        h = hash64(key)
        s = self._slots[h & self._m1]
        with s.rw.read():
            if s.second is None:
                return bst_find(s.root, key)
            e = s.second.get((h >> self._bits1) & self._m2)
            if e is None:
                return False
            with e.rw.read():
                return bst_find(e.root, key)

    def erase(self, key: int) -> OpStatus:
        h = hash64(key)
        s = self._slots[h & self._m1]
        gone = False
        s.rw.acquire_read()
        try:
            if s.second is not None:
                e = s.second.get((h >> self._bits1) & self._m2)
                if e is not None:
                    with e.rw.write():
                        gone = bst_erase(e, key, s.arena)
                if gone:
                    s.count.fetch_add(-1)
                expanded = True
            else:
                expanded = False
        finally:
            s.rw.release_read()
        if not expanded:
            with s.rw.write():
                if s.second is None:
                    gone = s.arena is not None and bst_erase(s, key, s.arena)
                else:
                    e = s.second.get((h >> self._bits1) & self._m2)
                    gone = e is not None and bst_erase(e, key, s.arena)
                if gone:
                    s.count.fetch_add(-1)
        if not gone:
            return OpStatus.NOT_FOUND
        self._count.fetch_add(-1)
        if s.second is not None and s.count.value < self._threshold:
            with s.rw.write():
                if s.second is not None and s.count.value < self._threshold:
                    self._collapse(s)
        return OpStatus.REMOVED

    remove = erase
    __contains__ = find

    def expand_second_level(self, slot: int) -> None:
        s = self._slots[slot]
        with s.rw.write():
            if s.second is not None:
                return
            if s.count.value <= self._threshold:
                raise DomainError(f"slot {slot} holds {s.count.value} keys, not above {self._threshold}")
            self._expand(s, slot)

    def _expand(self, s: _Slot, slot: int) -> None:
        """Caller holds the slot's first-level lock exclusively."""
        nodes = bst_nodes(s.root)
        before = [n.key for n in nodes]
        groups: Dict[int, list] = {}
        for n in nodes:
            groups.setdefault((hash64(n.key) >> self._bits1) & self._m2, []).append(n)
        sec: Dict[int, _Leaf] = {}
        for idx, grp in groups.items():
            leaf = _Leaf()
            leaf.root = bst_build(grp)
            sec[idx] = leaf
        s.root = None
        s.second = sec
        self.expansions += 1
        if self.on_expand is not None:
            after = sorted(k for leaf in sec.values() for k in bst_keys(leaf.root))
            self.on_expand(slot, before, after)

    def _collapse(self, s: _Slot) -> None:
        nodes = []
        for leaf in s.second.values():
            nodes.extend(bst_nodes(leaf.root))
        nodes.sort(key=lambda n: n.key)
        s.root = bst_build(nodes)
        s.second = None
        self.collapses += 1

    def __len__(self) -> int:
        return self._count.value

    def is_expanded(self, slot: int) -> bool:
        return self._slots[slot].second is not None

    def slot_entries(self, slot: int) -> int:
        return self._slots[slot].count.value

    def slot_keys(self, slot: int) -> List[int]:
        s = self._slots[slot]
        if s.second is None:
            return bst_keys(s.root)
        return sorted(k for leaf in s.second.values() for k in bst_keys(leaf.root))

    def keys(self) -> List[int]:
        out: List[int] = []
        for i in range(self._M1):
            out.extend(self.slot_keys(i))
        return out

    def validate(self) -> ValidationReport:
        rep = ValidationReport()
        total = 0
        for i, s in enumerate(self._slots):
            if s.second is None:
                ks = bst_keys(s.root)
                places = [(k, i, None) for k in ks]
            else:
                places = []
                for idx, leaf in s.second.items():
                    places.extend((k, i, idx) for k in bst_keys(leaf.root))
                if s.count.value < self._threshold:
                    rep.add("SECOND_LEVEL", f"slot {i} expanded with only {s.count.value} keys")
            if len(places) != s.count.value:
                rep.add("COUNT", f"slot {i}: count {s.count.value} but {len(places)} keys")
            for k, si, idx in places:
                h = hash64(k)
                if h & self._m1 != si or (idx is not None and (h >> self._bits1) & self._m2 != idx):
                    rep.add("SLOT", f"key {k} misplaced in slot {si}/{idx}")
            total += len(places)
        if total != self._count.value:
            rep.add("COUNT", f"table count {self._count.value} but {total} keys")
        rep.size = total
        return rep
