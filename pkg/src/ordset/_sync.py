from __future__ import annotations

import threading


class _ReadGuard:
    __slots__ = ("_rw",)

    def __init__(self, rw: "RWLock") -> None:
        self._rw = rw

    def __enter__(self) -> None:
        self._rw.acquire_read()

    def __exit__(self, *exc) -> None:
        self._rw.release_read()


class _WriteGuard:
    __slots__ = ("_rw",)

    def __init__(self, rw: "RWLock") -> None:
        self._rw = rw

    def __enter__(self) -> None:
        self._rw.acquire_write()

    def __exit__(self, *exc) -> None:
        self._rw.release_write()


class RWLock:
    """Writer-preferring reader/writer lock. Not re-entrant."""

    __slots__ = ("_cond", "_readers", "_writer", "_waiting", "_rg", "_wg")

    def __init__(self) -> None:
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer = False
        self._waiting = 0
        self._rg = _ReadGuard(self)
        self._wg = _WriteGuard(self)

    def acquire_read(self) -> None:
        with self._cond:
            while self._writer or self._waiting:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0 and self._waiting:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        with self._cond:
            self._waiting += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting -= 1
            self._writer = True

    def release_write(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()

    def read(self) -> _ReadGuard:
        return self._rg

    def write(self) -> _WriteGuard:
        return self._wg

    @property
    def readers(self) -> int:
        return self._readers

    @property
    def write_locked(self) -> bool:
        return self._writer
