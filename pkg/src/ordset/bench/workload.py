from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..core import MAX_KEY, DomainError
from ..hashmaps.hashing import hash64_array
from ..shard import OpKind

STRUCTURES = ("skiplist", "fixed", "twolevel", "spo", "twolevel-spo", "queue")


@dataclass(frozen=True)
class WorkloadSpec:
    structure: str = "skiplist"
    total_ops: int = 10_000
    mix: Tuple[float, ...] = (50.0, 50.0, 0.0)
    threads: int = 1
    seed: int = 0
    key_space: Optional[int] = None  # distinct pre-hash indices; defaults to total_ops
    block_size: int = 10_000
    slots: int = 8192
    second_slots: int = 2048
    spo_seed: int = 8192
    max_collisions: int = 16
    shards: int = 8
    full_slots_per_shard: bool = False
    reps: int = 5
    validate: bool = False
    timeout: float = 600.0

    def mix_label(self) -> str:
        return ":".join(f"{p:g}" for p in self.mix)


@dataclass
class Workload:
    kinds: np.ndarray  # uint8 OpKind values
    keys: np.ndarray  # uint64

    def __len__(self) -> int:
        return len(self.kinds)

    def tobytes(self) -> bytes:
        return self.kinds.tobytes() + self.keys.tobytes()


def parse_mix(text: str) -> Tuple[float, ...]:
    try:
        parts = tuple(float(p) for p in text.split(":"))
    except ValueError as exc:
        raise DomainError(f"cannot parse mix {text!r}") from exc
    return parts


def check_mix(structure: str, mix: Tuple[float, ...]) -> Tuple[float, ...]:
    if structure not in STRUCTURES:
        raise DomainError(f"unknown structure {structure!r}")
    mix = tuple(float(p) for p in mix)
    if structure == "queue":
        if len(mix) == 3 and mix[2] == 0:
            mix = mix[:2]
        if len(mix) != 2:
            raise DomainError("queue mix is push:pop")
    elif len(mix) != 3:
        raise DomainError("set mix is add:find:del")
    if any(p < 0 for p in mix) or abs(sum(mix) - 100.0) > 1e-9:
        raise DomainError(f"mix {mix} must be non-negative and sum to 100")
    return mix


def exact_counts(n: int, mix: Tuple[float, ...]) -> list:
    """Largest-remainder rounding of ``mix`` percentages of ``n``."""
    raw = [n * p / 100.0 for p in mix]
    counts = [int(np.floor(r)) for r in raw]
    short = n - sum(counts)
    order = sorted(range(len(mix)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def gen_workload(spec: WorkloadSpec) -> Workload:
    mix = check_mix(spec.structure, spec.mix)
    n = spec.total_ops
    if n < 0:
        raise DomainError("total_ops must be >= 0")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.structure == "queue":
        labels = (OpKind.PUSH, OpKind.POP)
    else:
        labels = (OpKind.ADD, OpKind.FIND, OpKind.DEL)
    counts = exact_counts(n, mix)
    kinds = np.concatenate([np.full(c, int(k), dtype=np.uint8) for k, c in zip(labels, counts)])
    kinds = kinds[rng.permutation(n)]
    space = spec.key_space or max(n, 1)
    idx = rng.integers(0, space, size=n, dtype=np.uint64)
    keys = hash64_array(idx)
    keys[keys == np.uint64(MAX_KEY)] = np.uint64(MAX_KEY - 1)
    return Workload(kinds=kinds, keys=keys)
