"""Exhaustive linearizability checking for small histories.

The search repeatedly picks an operation that may come next in real time
(every operation that responded before its invocation is already placed),
applies it to a sequential model, and backtracks when the recorded result
disagrees.  Visited ``(placed set, model state)`` pairs are memoised, which
keeps histories of a few dozen events tractable.
"""

from __future__ import annotations

import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from ..core import HistoryTooLarge, OpStatus

MAX_EVENTS = 48

_TRUTHY = {OpStatus.ADDED: True, OpStatus.REMOVED: True, OpStatus.TRUE: True,
           OpStatus.ALREADY_PRESENT: False, OpStatus.NOT_FOUND: False, OpStatus.FALSE: False}


@dataclass(frozen=True)
class Event:
    thread: int
    op: str  # insert | find | remove | push | pop
    arg: Any
    inv: int
    res: Optional[int]  # None while pending
    result: Any = None


@dataclass
class History:
    events: List[Event] = field(default_factory=list)

    def add(self, *args, **kw) -> None:
        self.events.append(Event(*args, **kw))

    def __len__(self) -> int:
        return len(self.events)

    def well_formed(self) -> bool:
        by_thread: Dict[int, List[Event]] = {}
        for e in self.events:
            by_thread.setdefault(e.thread, []).append(e)
        for evs in by_thread.values():
            evs.sort(key=lambda e: e.inv)
            for a, b in zip(evs, evs[1:]):
                if a.res is None or a.res > b.inv:
                    return False
        return True


@dataclass
class Verdict:
    ok: bool
    order: Optional[List[int]] = None  # indices into the event list
    explored: int = 0

    def __bool__(self) -> bool:
        return self.ok


def _norm(result: Any) -> Any:
    if isinstance(result, OpStatus):
        if result is OpStatus.EMPTY:
            return None
        return _TRUTHY[result]
    return result


def _step_set(state: frozenset, op: str, arg: Any) -> Tuple[frozenset, Any]:
    present = arg in state
    if op == "insert":
        return (state if present else state | {arg}), not present
    if op == "remove":
        return (state - {arg} if present else state), present
    if op == "find":
        return state, present
    raise ValueError(f"unknown set op {op!r}")


def _step_fifo(state: tuple, op: str, arg: Any) -> Tuple[tuple, Any]:
    if op == "push":
        return state + (arg,), None
    if op == "pop":
        if not state:
            return state, None
        return state[1:], state[0]
    raise ValueError(f"unknown fifo op {op!r}")


def check_linearizable(h: History | Sequence[Event], semantics: str = "set", initial: Any = None) -> Verdict:
    events = list(h.events if isinstance(h, History) else h)
    n = len(events)
    if n > MAX_EVENTS:
        raise HistoryTooLarge(f"{n} events exceeds the exhaustive bound of {MAX_EVENTS}")
    if semantics == "set":
        step = _step_set
        state0: Any = frozenset(initial or ())
    elif semantics == "fifo":
        step = _step_fifo
        state0 = tuple(initial or ())
    else:
        raise ValueError(f"unknown semantics {semantics!r}")

    inf = float("inf")
    res = [e.res if e.res is not None else inf for e in events]
    # preds[i]: events that completed before event i was invoked
    preds = [0] * n
    for i, e in enumerate(events):
        m = 0
        for j in range(n):
            if res[j] < e.inv:
                m |= 1 << j
        preds[i] = m
    required = 0
    for i, e in enumerate(events):
        if e.res is not None:
            required |= 1 << i
    expected = [_norm(e.result) for e in events]
    ops = [(e.op, e.arg) for e in events]
    pending = [e.res is None for e in events]

    seen = set()
    order: List[int] = []
    explored = 0
    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10 * n + 100))

    def dfs(done: int, state: Any) -> bool:
        nonlocal explored
        if done & required == required:
            return True
        key = (done, state)
        if key in seen:
            return False
        seen.add(key)
        explored += 1
        for i in range(n):
            bit = 1 << i
            if done & bit or preds[i] & ~done:
                continue
            op, arg = ops[i]
            nstate, out = step(state, op, arg)
            if not pending[i] and out != expected[i]:
                continue
            order.append(i)
            if dfs(done | bit, nstate):
                return True
            order.pop()
        return False

    try:
        ok = dfs(0, state0)
    finally:
        sys.setrecursionlimit(old_limit)
    return Verdict(ok, list(order) if ok else None, explored)


class ConcurrentRecorder:
    """Persistent worker threads that replay per-thread op lists and timestamp them."""

    def __init__(self, max_threads: int, switch_interval: Optional[float] = 1e-5) -> None:
        self._n = max_threads
        self._start = threading.Barrier(max_threads + 1)
        self._end = threading.Barrier(max_threads + 1)
        self._jobs: List[List[Tuple[str, Any]]] = [[] for _ in range(max_threads)]
        self._out: List[List[Event]] = [[] for _ in range(max_threads)]
        self._errors: List[BaseException] = []
        self._target: Any = None
        self._apply: Optional[Callable[[Any, str, Any], Any]] = None
        self._closed = False
        self._old_switch = sys.getswitchinterval()
        if switch_interval is not None:
            sys.setswitchinterval(switch_interval)
        self._threads = [threading.Thread(target=self._worker, args=(t,), daemon=True) for t in range(max_threads)]
        for th in self._threads:
            th.start()

    def _worker(self, t: int) -> None:
        clock = time.perf_counter_ns
        while True:
            self._start.wait()
            if self._closed:
                return
            out = self._out[t]
            apply = self._apply
            target = self._target
            try:
                for op, arg in self._jobs[t]:
                    inv = clock()
                    r = apply(target, op, arg)
                    out.append(Event(t, op, arg, inv, clock(), r))
            except BaseException as exc:  # noqa: BLE001 - surfaced by run()
                self._errors.append(exc)
            self._end.wait()

    def run(self, target: Any, thread_ops: Sequence[Sequence[Tuple[str, Any]]], apply: Callable[[Any, str, Any], Any]) -> History:
        if len(thread_ops) > self._n:
            raise ValueError("more op lists than recorder threads")
        for t in range(self._n):
            self._jobs[t] = list(thread_ops[t]) if t < len(thread_ops) else []
            self._out[t] = []
        self._target = target
        self._apply = apply
        self._start.wait()
        self._end.wait()
        if self._errors:
            raise self._errors.pop()
        events = [e for evs in self._out for e in evs]
        events.sort(key=lambda e: e.inv)
        return History(events)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._start.wait()
            for th in self._threads:
                th.join()
            sys.setswitchinterval(self._old_switch)

    def __enter__(self) -> "ConcurrentRecorder":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def apply_set_op(target: Any, op: str, arg: Any) -> Any:
    if op == "insert":
        return target.insert(arg)
    if op == "remove":
        return target.remove(arg)
    if op == "find":
        return target.find(arg)
    raise ValueError(op)


def apply_fifo_op(target: Any, op: str, arg: Any) -> Any:
    if op == "push":
        target.push(arg)
        return None
    if op == "pop":
        return target.pop()
    raise ValueError(op)
