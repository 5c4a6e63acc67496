from __future__ import annotations

import numpy as np

from ..core import MASK64, DomainError

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# byte-wise bit reversal table
_REV8 = [int(f"{i:08b}"[::-1], 2) for i in range(256)]


def hash64(k: int) -> int:
    """splitmix64 finalizer; a bijection on 64-bit values with hash64(0) == 0."""
    h = k & MASK64
    h ^= h >> 30
    h = (h * _M1) & MASK64
    h ^= h >> 27
    h = (h * _M2) & MASK64
    h ^= h >> 31
    return h


def hash64_array(keys: np.ndarray) -> np.ndarray:
    h = np.asarray(keys, dtype=np.uint64).copy()
    with np.errstate(over="ignore"):
        h ^= h >> np.uint64(30)
        h *= np.uint64(_M1)
        h ^= h >> np.uint64(27)
        h *= np.uint64(_M2)
        h ^= h >> np.uint64(31)
    return h


def is_power_of_two(m: int) -> bool:
    return m >= 1 and m & (m - 1) == 0


def slot_of(h: int, M: int) -> int:
    if not is_power_of_two(M):
        raise DomainError(f"slot count {M} is not a power of two")
    return h & (M - 1)


def reverse_bits(x: int) -> int:
    r = _REV8
    return (
        r[x & 0xFF] << 56
        | r[(x >> 8) & 0xFF] << 48
        | r[(x >> 16) & 0xFF] << 40
        | r[(x >> 24) & 0xFF] << 32
        | r[(x >> 32) & 0xFF] << 24
        | r[(x >> 40) & 0xFF] << 16
        | r[(x >> 48) & 0xFF] << 8
        | r[(x >> 56) & 0xFF]
    )


def so_order_key(x: int, dummy: bool) -> int:
    """Split-order sort key: even for bucket dummies, odd for items."""
    r = reverse_bits(x & MASK64)
    return r & ~1 if dummy else r | 1


def parent_bucket(b: int) -> int:
    """Bucket with its most significant set bit cleared."""
    if b <= 0:
        return 0
    return b & ~(1 << (b.bit_length() - 1))
