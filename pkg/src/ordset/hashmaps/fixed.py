from __future__ import annotations

from typing import List

from .._sync import RWLock
from ..arena import Arena, ArenaConfig
from ..core import AtomicInt, DomainError, OpStatus, ValidationReport, check_key
from .bst import TreeNode, bst_erase, bst_find, bst_insert, bst_keys
from .hashing import hash64, is_power_of_two


class _Slot:
    __slots__ = ("rw", "root")

    def __init__(self) -> None:
        self.rw = RWLock()
        self.root = None


class FixedTable:
    """M slots, each a reader/writer-locked binary tree."""

    def __init__(self, slots: int = 8192, block_capacity: int = 1024) -> None:
        if not is_power_of_two(slots):
            raise DomainError(f"slot count {slots} is not a power of two")
        self._M = slots
        self._mask = slots - 1
        self._slots = [_Slot() for _ in range(slots)]
        self.arena = Arena(ArenaConfig(block_capacity=block_capacity, node_kind=TreeNode))
        self._count = AtomicInt(0)

    def insert(self, key: int) -> OpStatus:
        check_key(key)
        s = self._slots[hash64(key) & self._mask]
        with s.rw.write():
            added = bst_insert(s, key, self.arena)
        if added:
            self._count.fetch_add(1)
            return OpStatus.ADDED
        return OpStatus.ALREADY_PRESENT

    def find(self, key: int) -> bool:
        s = self._slots[hash64(key) & self._mask]
        with s.rw.read():
            return bst_find(s.root, key)

    def erase(self, key: int) -> OpStatus:
        s = self._slots[hash64(key) & self._mask]
        with s.rw.write():
            gone = bst_erase(s, key, self.arena)
        if gone:
            self._count.fetch_add(-1)
            return OpStatus.REMOVED
        return OpStatus.NOT_FOUND

    remove = erase
    __contains__ = find

    def __len__(self) -> int:
        return self._count.value

    @property
    def slot_count(self) -> int:
        return self._M

    def slot_keys(self, i: int) -> List[int]:
        return bst_keys(self._slots[i].root)

    def keys(self) -> List[int]:
        out: List[int] = []
        for s in self._slots:
            out.extend(bst_keys(s.root))
        return out

    def validate(self) -> ValidationReport:
        rep = ValidationReport()
        total = 0
        for i, s in enumerate(self._slots):
            ks = bst_keys(s.root)
            total += len(ks)
            if any(a >= b for a, b in zip(ks, ks[1:])):
                rep.add("ORDER", f"slot {i}: tree not a search tree")
            for k in ks:
                if hash64(k) & self._mask != i:
                    rep.add("SLOT", f"key {k} stored in slot {i}")
        if total != self._count.value:
            rep.add("COUNT", f"count {self._count.value} but {total} keys stored")
        rep.size = total
        return rep
