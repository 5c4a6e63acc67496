from __future__ import annotations

import threading
import time
from collections import Counter
from statistics import fmean
from typing import Any, Callable, List

from ..core import DomainError, WatchdogTimeout
from ..hashmaps import FixedTable, SplitOrderTable, TwoLevelSpoTable, TwoLevelTable
from ..queue import EMPTY, LockFreeQueue
from ..shard import Metrics, OpKind, plan_shards, run_pipeline, thread_rng, try_pin
from ..skiplist import Skiplist
from .workload import WorkloadSpec, check_mix, gen_workload


def structure_factory(spec: WorkloadSpec) -> Callable[[], Any]:
    s = spec.structure
    per_shard = spec.slots if spec.full_slots_per_shard else max(1, spec.slots // spec.shards)
    if s == "skiplist":
        return lambda: Skiplist(block_capacity=spec.block_size)
    if s == "fixed":
        return lambda: FixedTable(slots=per_shard)
    if s == "twolevel":
        return lambda: TwoLevelTable(slots=per_shard, second_slots=spec.second_slots)
    if s == "spo":
        return lambda: SplitOrderTable(seed=spec.spo_seed, max_collisions=spec.max_collisions)
    if s == "twolevel-spo":
        return lambda: TwoLevelSpoTable(max_collisions=spec.max_collisions)
    raise DomainError(f"no set structure named {s!r}")


def _arena_blocks(structure: Any) -> int:
    if isinstance(structure, TwoLevelSpoTable):
        return sum(t.arena.blocks_in_use() for t in structure.tables)
    arena = getattr(structure, "arena", None)
    return arena.blocks_in_use() if arena is not None else 0


def run_once(spec: WorkloadSpec, workload=None) -> Metrics:
    check_mix(spec.structure, spec.mix)
    wl = workload if workload is not None else gen_workload(spec)
    if spec.structure == "queue":
        m = run_queue(spec, wl)
    else:
        make = structure_factory(spec)
        plan = plan_shards(spec.threads, shard_count=spec.shards)
        structures = [make() for _ in range(plan.shard_count)]
        m = run_pipeline(plan, wl.kinds, wl.keys, structures, seed=spec.seed, timeout=spec.timeout)
        ledger: Counter = Counter()
        for st in structures:
            if isinstance(st, Skiplist):
                snap = st.ledger.snapshot()
                ledger.update({k: snap[k] for k in ("splits", "merges", "borrows")})
        m.ledger = dict(ledger)
        m.peak_blocks = sum(_arena_blocks(st) for st in structures)
        if spec.validate:
            m.validation_ok = True
            for i, st in enumerate(structures):
                rep = st.validate()
                if not rep.ok:
                    m.validation_ok = False
                    m.violations.extend(f"shard {i}: {k} {w}" for k, w in rep.violations[:20])
            expected = sum(m.counts.get(k, 0) for k in ("ADD", "FIND", "DEL"))
            if expected != len(wl):
                m.validation_ok = False
                m.violations.append(f"applied {expected} of {len(wl)} ops")
    m.structure = spec.structure
    m.mix = spec.mix_label()
    m.threads = spec.threads
    m.ops = len(wl)
    return m


def run_queue(spec: WorkloadSpec, wl) -> Metrics:
    """Per-thread queues; pushes go to a random queue of the pusher's group, pops are local."""
    T = spec.threads
    plan = plan_shards(T, shard_count=spec.shards)
    queues = [LockFreeQueue(block_size=spec.block_size) for _ in range(T)]
    kinds = wl.kinds.tolist()
    keys = wl.keys.tolist()
    n = len(kinds)
    pushed: List[List[int]] = [[] for _ in range(T)]
    popped: List[List[int]] = [[] for _ in range(T)]
    errors: List[BaseException] = []
    start = threading.Barrier(T + 1)
    done = threading.Barrier(T + 1)
    stop = threading.Event()

    def worker(t: int) -> None:
        try:
            try_pin(plan.pinning[t])
            rng = thread_rng(spec.seed, t)
            group = list(plan.threads_of_group(plan.group_of_thread(t)))
            mine = queues[t]
            push_log, pop_log = pushed[t], popped[t]
            lo, hi = t * n // T, (t + 1) * n // T
            start.wait()
            for i in range(lo, hi):
                if stop.is_set():
                    break
                if kinds[i] == OpKind.PUSH:
                    v = keys[i]
                    queues[group[rng.randrange(len(group))]].push(v)
                    push_log.append(v)
                else:
                    v = mine.pop()
                    if v is not EMPTY:
                        pop_log.append(v)
            done.wait()
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:  # noqa: BLE001
            errors.append(exc)
            done.abort()

    threads = [threading.Thread(target=worker, args=(t,), daemon=True) for t in range(T)]
    for th in threads:
        th.start()
    start.wait()
    t0 = time.perf_counter()
    try:
        done.wait(timeout=spec.timeout)
    except threading.BrokenBarrierError:
        if errors:
            raise errors[0]
        stop.set()
        raise WatchdogTimeout(f"queue run exceeded {spec.timeout:.1f}s") from None
    t1 = time.perf_counter()
    m = Metrics()
    m.drain_seconds = m.total_seconds = t1 - t0
    m.ops_per_sec = n / m.total_seconds if m.total_seconds > 0 else float("inf")
    m.counts = {"PUSH": sum(map(len, pushed)), "POP": sum(map(len, popped))}
    m.peak_blocks = max(q.peak_blocks for q in queues)
    if spec.validate:
        residual = [v for q in queues for v in q.drain()]
        ok = Counter(v for lst in pushed for v in lst) == Counter(v for lst in popped for v in lst) + Counter(residual)
        m.validation_ok = ok
        if not ok:
            m.violations.append("queue conservation failed")
    return m


def run(spec: WorkloadSpec) -> Metrics:
    """Repeat ``spec.reps`` times and average the timings."""
    if spec.reps < 1:
        raise DomainError("reps must be >= 1")
    wl = gen_workload(spec)
    runs = [run_once(spec, wl) for _ in range(spec.reps)]
    m = Metrics(threads=spec.threads, structure=spec.structure, ops=len(wl), mix=spec.mix_label())
    m.fill_seconds = fmean(r.fill_seconds for r in runs)
    m.drain_seconds = fmean(r.drain_seconds for r in runs)
    m.total_seconds = fmean(r.total_seconds for r in runs)
    m.ops_per_sec = fmean(r.ops_per_sec for r in runs)
    m.counts = runs[0].counts
    m.results = runs[0].results
    m.ledger = {k: round(fmean(r.ledger.get(k, 0) for r in runs)) for k in ("splits", "merges", "borrows")}
    m.peak_blocks = max(r.peak_blocks for r in runs)
    if spec.validate:
        m.validation_ok = all(r.validation_ok for r in runs)
        m.violations = [v for r in runs for v in r.violations]
    return m
