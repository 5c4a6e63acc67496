"""Multi-writer/multi-reader hash sets sharing one interface.

``insert`` / ``find`` / ``erase`` behave like the skiplist's insert / find /
remove; ``make_table`` builds any variant from a :class:`HashConfig`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

from ..core import DomainError, OpStatus
from .fixed import FixedTable
from .hashing import hash64, hash64_array, is_power_of_two, parent_bucket, reverse_bits, slot_of, so_order_key
from .splitorder import SoNode, SplitOrderTable, TwoLevelSpoTable
from .twolevel import TwoLevelTable


class Variant(enum.Enum):
    FIXED = "fixed"
    TWO_LEVEL = "twolevel"
    SPO = "spo"
    TWO_LEVEL_SPO = "twolevel-spo"


@dataclass(frozen=True)
class HashConfig:
    variant: Variant = Variant.FIXED
    slots: int = 8192  # M for FIXED, M1 for TWO_LEVEL
    second_slots: int = 2048
    expand_threshold: int = 10
    seed_slots: int = 8192
    max_collisions: int = 16
    max_slots: int = 1 << 22
    first_level_tables: int = 256
    first_level_seed: int = 64

    def __post_init__(self) -> None:
        for name in ("slots", "second_slots", "seed_slots", "max_slots", "first_level_tables", "first_level_seed"):
            if not is_power_of_two(getattr(self, name)):
                raise DomainError(f"{name}={getattr(self, name)} is not a power of two")


Table = Union[FixedTable, TwoLevelTable, SplitOrderTable, TwoLevelSpoTable]


def make_table(cfg: Union[HashConfig, Variant, str]) -> Table:
    """Build a table from a config, or from a variant with default settings."""
    if not isinstance(cfg, HashConfig):
        cfg = HashConfig(variant=Variant(cfg))
    v = Variant(cfg.variant)
    if v is Variant.FIXED:
        return FixedTable(slots=cfg.slots)
    if v is Variant.TWO_LEVEL:
        return TwoLevelTable(slots=cfg.slots, second_slots=cfg.second_slots, expand_threshold=cfg.expand_threshold)
    if v is Variant.SPO:
        return SplitOrderTable(seed=cfg.seed_slots, max_collisions=cfg.max_collisions, max_slots=cfg.max_slots)
    return TwoLevelSpoTable(
        tables=cfg.first_level_tables,
        seed=cfg.first_level_seed,
        max_collisions=cfg.max_collisions,
        max_slots=max(cfg.first_level_seed, min(cfg.max_slots, 1 << 16)),
    )


def map_insert(t: Table, key: int) -> OpStatus:
    return t.insert(key)


def map_find(t: Table, key: int) -> bool:
    return t.find(key)


def map_erase(t: Table, key: int) -> OpStatus:
    return t.erase(key)


def expand_second_level(t: TwoLevelTable, slot: int) -> None:
    t.expand_second_level(slot)


def spo_resize(t: SplitOrderTable) -> bool:
    return t.spo_resize()


def spo_ensure_slot(t: SplitOrderTable, bucket: int) -> SoNode:
    return t.spo_ensure_slot(bucket)


__all__ = [
    "FixedTable",
    "HashConfig",
    "SoNode",
    "SplitOrderTable",
    "Table",
    "TwoLevelSpoTable",
    "TwoLevelTable",
    "Variant",
    "expand_second_level",
    "hash64",
    "hash64_array",
    "make_table",
    "map_erase",
    "map_find",
    "map_insert",
    "parent_bucket",
    "reverse_bits",
    "slot_of",
    "so_order_key",
    "spo_ensure_slot",
    "spo_resize",
]
