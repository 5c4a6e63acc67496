"""Concurrent ordered sets, queues and hash sets with a benchmark harness."""

from __future__ import annotations

from .arena import Arena, ArenaConfig, EpochReclaimer, expected_average_blocks
from .core import (
    MAX_KEY,
    AllocFailure,
    DomainError,
    HistoryTooLarge,
    KeyReservedError,
    OpStatus,
    ValidationReport,
    ValueReservedError,
    WatchdogTimeout,
    pack_key_next,
    unpack,
)
from .hashmaps import (
    FixedTable,
    HashConfig,
    SplitOrderTable,
    TwoLevelSpoTable,
    TwoLevelTable,
    Variant,
    hash64,
    make_table,
)
from .queue import EMPTY, LockFreeQueue, allocation_bounds
from .shard import Metrics, OpKind, ShardPlan, plan_shards, route, run_pipeline
from .skiplist import RebalanceLedger, Skiplist, rebalance_bound

__version__ = "0.1.0"

__all__ = [
    "AllocFailure",
    "Arena",
    "ArenaConfig",
    "DomainError",
    "EMPTY",
    "EpochReclaimer",
    "FixedTable",
    "HashConfig",
    "HistoryTooLarge",
    "KeyReservedError",
    "LockFreeQueue",
    "MAX_KEY",
    "Metrics",
    "OpKind",
    "OpStatus",
    "RebalanceLedger",
    "ShardPlan",
    "Skiplist",
    "SplitOrderTable",
    "TwoLevelSpoTable",
    "TwoLevelTable",
    "ValidationReport",
    "ValueReservedError",
    "Variant",
    "WatchdogTimeout",
    "allocation_bounds",
    "expected_average_blocks",
    "hash64",
    "make_table",
    "pack_key_next",
    "plan_shards",
    "rebalance_bound",
    "route",
    "run_pipeline",
    "unpack",
]
