"""Shared primitives: keys, node handles, packed key/next words, status codes.

CPython has no 128-bit hardware atomics, so the atomic cells here lean on two
facts: rebinding an attribute to an immutable ``int`` is a single atomic store
under the interpreter lock, and read-modify-write steps are serialised through
a tiny per-cell mutex.  ``SeqLockWord`` is the portable fallback that splits a
word into two halves guarded by a sequence counter.
"""

from __future__ import annotations

import enum
import threading
import time
from dataclasses import dataclass, field
from typing import List, Tuple

MASK64 = (1 << 64) - 1
MAX_KEY = MASK64  # reserved for the head and tail sentinels

BLOCK_BITS = 24
SLOT_BITS = 40
SLOT_MASK = (1 << SLOT_BITS) - 1
MAX_BLOCKS = 1 << BLOCK_BITS


class OpStatus(enum.Enum):
    TRUE = "TRUE"
    FALSE = "FALSE"
    RETRY = "RETRY"
    ADDED = "ADDED"
    ALREADY_PRESENT = "ALREADY_PRESENT"
    REMOVED = "REMOVED"
    NOT_FOUND = "NOT_FOUND"
    EMPTY = "EMPTY"

    def __repr__(self) -> str:
        return f"OpStatus.{self.name}"


class OrdsetError(Exception):
    """Base class for every error raised by this package."""


class DomainError(OrdsetError, ValueError):
    """An argument lies outside the domain of an operation."""


class KeyReservedError(OrdsetError, ValueError):
    """The key 2**64 - 1 is reserved for sentinels."""


class ValueReservedError(OrdsetError, ValueError):
    """The payload collides with the queue's EMPTY marker."""


class AllocFailure(OrdsetError, MemoryError):
    """The arena could not obtain a new block."""


class HistoryTooLarge(OrdsetError, ValueError):
    """History exceeds the exhaustive-search bound of the checker."""


class WatchdogTimeout(OrdsetError, TimeoutError):
    """A run exceeded its watchdog; treated as deadlock or livelock."""


@dataclass
class ValidationReport:
    ok: bool = True
    violations: List[Tuple[str, str]] = field(default_factory=list)
    depth: int = 0
    size: int = 0  # number of stored keys

    def add(self, kind: str, where: str) -> None:
        self.violations.append((kind, where))
        self.ok = False

    def kinds(self) -> set:
        return {k for k, _ in self.violations}


def check_key(key: int) -> int:
    if key == MAX_KEY:
        raise KeyReservedError("key 2**64-1 is reserved")
    if not 0 <= key < MAX_KEY:
        raise DomainError(f"key {key!r} is not a 64-bit unsigned integer")
    return key


def pack_key_next(key: int, nxt: int) -> int:
    return (key << 64) | nxt


def unpack(word: int) -> Tuple[int, int]:
    return word >> 64, word & MASK64


def make_handle(block: int, slot: int) -> int:
    if not 0 <= block < MAX_BLOCKS or not 0 <= slot <= SLOT_MASK:
        raise DomainError(f"handle out of range: block={block} slot={slot}")
    return (block << SLOT_BITS) | slot


def handle_parts(h: int) -> Tuple[int, int]:
    return h >> SLOT_BITS, h & SLOT_MASK


class Backoff:
    """Exponential backoff: a few busy spins, then yield the interpreter."""

    __slots__ = ("_spins", "_cap")

    def __init__(self, cap: int = 64) -> None:
        self._spins = 1
        self._cap = cap

    def pause(self) -> None:
        if self._spins < self._cap:
            for _ in range(self._spins):
                pass
            self._spins <<= 1
        else:
            time.sleep(0)


class AtomicInt:
    """Integer cell with load/store/compare-exchange/fetch-add."""

    __slots__ = ("value", "_lock")

    def __init__(self, value: int = 0) -> None:
        self.value = value
        self._lock = threading.Lock()

    def load(self) -> int:
        return self.value

    def store(self, value: int) -> None:
        self.value = value

    def compare_exchange(self, expected: int, new: int) -> bool:
        with self._lock:
            if self.value != expected:
                return False
            self.value = new
            return True

    def fetch_add(self, delta: int) -> int:
        with self._lock:
            old = self.value
            self.value = old + delta
            return old

    def __repr__(self) -> str:
        return f"AtomicInt({self.value})"


class PackedCell:
    """128-bit key/next word stored as one Python int (atomic load/store)."""

    __slots__ = ("word", "_lock")

    def __init__(self, key: int = 0, nxt: int = 0) -> None:
        self.word = pack_key_next(key, nxt)
        self._lock = threading.Lock()

    def load(self) -> Tuple[int, int]:
        w = self.word
        return w >> 64, w & MASK64

    def store(self, key: int, nxt: int) -> None:
        self.word = (key << 64) | nxt

    def compare_exchange(self, expected: Tuple[int, int], new: Tuple[int, int]) -> bool:
        exp = pack_key_next(*expected)
        with self._lock:
            if self.word != exp:
                return False
            self.word = pack_key_next(*new)
            return True


class SeqLockWord:
    """Fallback for hosts without a double-width CAS.

    The two halves live in separate fields.  Writers bump the sequence to odd,
    write both halves, then bump it back to even; readers retry whenever the
    sequence was odd or moved underneath them.
    """

    __slots__ = ("_seq", "_key", "_next", "_wlock")

    def __init__(self, key: int = 0, nxt: int = 0) -> None:
        self._seq = 0
        self._key = key
        self._next = nxt
        self._wlock = threading.Lock()

    def load(self) -> Tuple[int, int]:
        while True:
            s0 = self._seq
            if s0 & 1:
                time.sleep(0)
                continue
            key, nxt = self._key, self._next
            if self._seq == s0:
                return key, nxt

    def store(self, key: int, nxt: int) -> None:
        with self._wlock:
            self._seq += 1
            self._key = key
            self._next = nxt
            self._seq += 1

    def compare_exchange(self, expected: Tuple[int, int], new: Tuple[int, int]) -> bool:
        with self._wlock:
            if (self._key, self._next) != expected:
                return False
            self._seq += 1
            self._key, self._next = new
            self._seq += 1
            return True


def make_cell(key: int = 0, nxt: int = 0, native: bool = True):
    return PackedCell(key, nxt) if native else SeqLockWord(key, nxt)
