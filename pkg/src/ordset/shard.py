"""Logical NUMA-style partitioning.

Keys are routed to one of ``shard_count`` structures by their top bits.  Threads
are grouped ``n_cpu`` at a time; shard ``i`` belongs to group ``i mod n_u``.
A run has two phases: every thread routes its slice of the workload into the
per-thread queues of the owning group (fill), then every thread drains its own
queue into the shard structures (drain).
"""

from __future__ import annotations

import enum
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import DomainError, OpStatus, WatchdogTimeout
from .hashmaps.hashing import is_power_of_two
from .queue import EMPTY, LockFreeQueue

ENV_CPUS = "ORDSET_CPUS_PER_GROUP"
DEFAULT_CPUS_PER_GROUP = 16


class OpKind(enum.IntEnum):
    ADD = 0
    FIND = 1
    DEL = 2
    PUSH = 3
    POP = 4


@dataclass(frozen=True)
class ShardPlan:
    T: int
    n_cpu: int
    n_u: int
    shard_count: int
    assignment: Tuple[int, ...]  # shard -> group
    pinning: Tuple[int, ...]  # thread -> cpu

    @property
    def shard_bits(self) -> int:
        return self.shard_count.bit_length() - 1

    def group_of_thread(self, t: int) -> int:
        return t // self.n_cpu

    def threads_of_group(self, g: int) -> range:
        return range(g * self.n_cpu, min(self.T, (g + 1) * self.n_cpu))


@dataclass(frozen=True)
class RoutedOp:
    kind: OpKind
    key: int
    shard: int
    target_queue: int


def cpus_per_group(default: int = DEFAULT_CPUS_PER_GROUP) -> int:
    raw = os.environ.get(ENV_CPUS)
    if raw is None or raw == "":
        return default
    try:
        v = int(raw)
    except ValueError as exc:
        raise DomainError(f"{ENV_CPUS}={raw!r} is not an integer") from exc
    if v < 1:
        raise DomainError(f"{ENV_CPUS} must be >= 1")
    return v


def plan_shards(T: int, n_cpu: Optional[int] = None, shard_count: int = 8) -> ShardPlan:
    if n_cpu is None:
        n_cpu = cpus_per_group()
    if T < 1 or n_cpu < 1:
        raise DomainError("need T >= 1 and n_cpu >= 1")
    if not is_power_of_two(shard_count):
        raise DomainError(f"shard_count {shard_count} is not a power of two")
    n_u = -(-T // n_cpu)
    assignment = tuple(i % n_u for i in range(shard_count))
    ncores = os.cpu_count() or 1
    pinning = tuple(t % ncores for t in range(T))
    return ShardPlan(T, n_cpu, n_u, shard_count, assignment, pinning)


def shard_of(key: int, plan: ShardPlan) -> int:
    bits = plan.shard_bits
    return key >> (64 - bits) if bits else 0


def route(key: int, plan: ShardPlan, rng: random.Random, kind: OpKind = OpKind.ADD) -> RoutedOp:
    s = shard_of(key, plan)
    threads = plan.threads_of_group(plan.assignment[s])
    target = threads[rng.randrange(len(threads))]
    return RoutedOp(OpKind(kind), key, s, target)


def thread_rng(seed: int, thread: int) -> random.Random:
    return random.Random((seed << 16) ^ (thread * 0x9E3779B1) ^ 0x5EED)


def try_pin(cpu: int) -> bool:
    """Best-effort affinity for the calling thread."""
    if not hasattr(os, "sched_setaffinity"):
        return False
    try:
        allowed = os.sched_getaffinity(0)
        if cpu not in allowed:
            return False
        os.sched_setaffinity(threading.get_native_id(), {cpu})
        return True
    except OSError:
        return False


@dataclass
class Metrics:
    threads: int = 1
    structure: str = ""
    ops: int = 0
    mix: str = ""
    fill_seconds: float = 0.0
    drain_seconds: float = 0.0
    total_seconds: float = 0.0
    ops_per_sec: float = 0.0
    counts: Dict[str, int] = field(default_factory=dict)
    results: Dict[str, int] = field(default_factory=dict)
    ledger: Dict[str, int] = field(default_factory=dict)
    peak_blocks: int = 0
    validation_ok: Optional[bool] = None
    violations: List[str] = field(default_factory=list)


def apply_op(structure: Any, kind: int, key: int) -> Any:
    if kind == OpKind.ADD:
        return structure.insert(key)
    if kind == OpKind.FIND:
        return structure.find(key)
    if kind == OpKind.DEL:
        return structure.remove(key)
    raise DomainError(f"op kind {kind} does not apply to a set")


def _classify(kind: int, r: Any) -> str:
    if kind == OpKind.FIND:
        return "found" if r else "missed"
    return r.name.lower() if isinstance(r, OpStatus) else str(r)


def run_pipeline(
    plan: ShardPlan,
    kinds: Sequence[int],
    keys: Sequence[int],
    structures: Sequence[Any],
    seed: int = 0,
    timeout: float = 120.0,
    queue_block: int = 10_000,
    pin: bool = True,
    debug: bool = False,
) -> Metrics:
    """Route ``(kinds[i], keys[i])`` through per-thread queues into ``structures``."""
    if len(structures) != plan.shard_count:
        raise DomainError("need exactly one structure per shard")
    kinds_l = np.asarray(kinds).tolist()
    keys_l = np.asarray(keys, dtype=np.uint64).tolist()
    n = len(keys_l)
    if len(kinds_l) != n:
        raise DomainError("kinds and keys differ in length")
    T = plan.T
    queues = [LockFreeQueue(block_size=queue_block) for _ in range(T)]
    barrier = threading.Barrier(T + 1)
    bits = plan.shard_bits
    shift = 64 - bits
    assignment = plan.assignment
    groups = [list(plan.threads_of_group(g)) for g in range(plan.n_u)]
    per_thread: List[Dict[str, int]] = [dict() for _ in range(T)]
    errors: List[BaseException] = []
    isolation_errors = [0]
    stop = threading.Event()

    def worker(t: int) -> None:
        try:
            if pin:
                try_pin(plan.pinning[t])
            rng = thread_rng(seed, t)
            lo, hi = t * n // T, (t + 1) * n // T
            barrier.wait()
            for i in range(lo, hi):
                k = keys_l[i]
                s = k >> shift if bits else 0
                grp = groups[assignment[s]]
                queues[grp[rng.randrange(len(grp))]].push(i)
            barrier.wait()
            barrier.wait()
            q = queues[t]
            tally = per_thread[t]
            while not stop.is_set():
                i = q.pop()
                if i is EMPTY:
                    break
                k = keys_l[i]
                kind = kinds_l[i]
                s = k >> shift if bits else 0
                if debug and assignment[s] != plan.group_of_thread(t):
                    isolation_errors[0] += 1
                r = apply_op(structures[s], kind, k)
                label = _classify(kind, r)
                tally[label] = tally.get(label, 0) + 1
                tally[OpKind(kind).name] = tally.get(OpKind(kind).name, 0) + 1
            barrier.wait()
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:  # noqa: BLE001 - reported to the caller
            errors.append(exc)
            barrier.abort()

    threads = [threading.Thread(target=worker, args=(t,), daemon=True, name=f"shard-worker-{t}") for t in range(T)]
    for th in threads:
        th.start()
    deadline = time.monotonic() + timeout

    def phase() -> float:
        try:
            barrier.wait(timeout=max(0.0, deadline - time.monotonic()))
        except threading.BrokenBarrierError:
            if errors:
                raise errors[0]
            stop.set()
            raise WatchdogTimeout(f"pipeline exceeded {timeout:.1f}s") from None
        return time.perf_counter()

    t0 = phase()
    t1 = phase()
    t2 = phase()
    t3 = phase()
    for th in threads:
        th.join(timeout=max(0.0, deadline - time.monotonic()))
    if errors:
        raise errors[0]
    m = Metrics(threads=T, ops=n)
    m.fill_seconds = t1 - t0
    m.drain_seconds = t3 - t2
    m.total_seconds = m.fill_seconds + m.drain_seconds
    m.ops_per_sec = n / m.total_seconds if m.total_seconds > 0 else float("inf")
    applied: Dict[str, int] = {}
    for tally in per_thread:
        for k, v in tally.items():
            applied[k] = applied.get(k, 0) + v
    m.results = {k: v for k, v in applied.items() if k not in OpKind.__members__}
    m.counts = {k: v for k, v in applied.items() if k in OpKind.__members__}
    m.peak_blocks = max(q.peak_blocks for q in queues)
    if isolation_errors[0]:
        m.violations.append(f"{isolation_errors[0]} ops applied outside their shard group")
    return m


def direct_apply(structure: Any, kinds: Sequence[int], keys: Sequence[int]) -> List[Any]:
    """Sequential reference used to check the degenerate pipeline."""
    return [apply_op(structure, int(k), int(x)) for k, x in zip(kinds, keys)]


StructureFactory = Callable[[], Any]
