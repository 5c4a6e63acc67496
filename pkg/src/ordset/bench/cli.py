from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from ..core import DomainError, WatchdogTimeout
from .report import emit_report
from .runner import run
from .workload import STRUCTURES, WorkloadSpec, check_mix, parse_mix

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_TIMEOUT = 2


def _threads(text: str) -> List[int]:
    try:
        out = [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad thread list {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("thread counts must be >= 1")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Concurrent ordered-set and queue benchmarks.")
    p.add_argument("--structure", choices=STRUCTURES, default="skiplist")
    p.add_argument("--ops", type=int, default=100_000, help="operations per repetition")
    p.add_argument("--threads", type=_threads, default=[1], help="thread count, or a comma list such as 1,2,4,8")
    p.add_argument("--mix", default=None, help="add:find:del percentages (push:pop for the queue)")
    p.add_argument("--block-size", type=int, default=10_000)
    p.add_argument("--slots", type=int, default=8192)
    p.add_argument("--second-slots", type=int, default=2048)
    p.add_argument("--spo-seed", type=int, default=8192)
    p.add_argument("--max-collisions", type=int, default=16)
    p.add_argument("--shards", type=int, default=8)
    p.add_argument("--full-slots", action="store_true", help="give every shard the full slot count")
    p.add_argument("--key-space", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--timeout", type=float, default=600.0, help="watchdog per repetition, seconds")
    p.add_argument("--csv", default=None, help="write results to this CSV file")
    p.add_argument("--validate", action="store_true")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    default_mix = "50:50" if args.structure == "queue" else "50:50:0"
    try:
        mix = check_mix(args.structure, parse_mix(args.mix or default_mix))
    except DomainError as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rows = []
    status = EXIT_OK
    for T in args.threads:
        spec = WorkloadSpec(
            structure=args.structure,
            total_ops=args.ops,
            mix=mix,
            threads=T,
            seed=args.seed,
            key_space=args.key_space,
            block_size=args.block_size,
            slots=args.slots,
            second_slots=args.second_slots,
            spo_seed=args.spo_seed,
            max_collisions=args.max_collisions,
            shards=args.shards,
            full_slots_per_shard=args.full_slots,
            reps=args.reps,
            validate=args.validate,
            timeout=args.timeout,
        )
        try:
            m = run(spec)
        except WatchdogTimeout as exc:
            print(f"bench: timeout: {exc}", file=sys.stderr)
            return EXIT_TIMEOUT
        except DomainError as exc:
            print(f"bench: {exc}", file=sys.stderr)
            return EXIT_INVALID
        rows.append(m)
        line = (
            f"threads={T} structure={spec.structure} ops={m.ops} mix={m.mix} "
            f"fill={m.fill_seconds:.3f}s drain={m.drain_seconds:.3f}s total={m.total_seconds:.3f}s "
            f"ops/s={m.ops_per_sec:,.0f}"
        )
        if args.validate:
            line += " valid=" + ("yes" if m.validation_ok else "NO")
            if not m.validation_ok:
                status = EXIT_INVALID
                for v in m.violations[:10]:
                    print(f"  violation: {v}", file=sys.stderr)
        print(line)
    if args.csv:
        emit_report(rows, args.csv)
    return status


if __name__ == "__main__":
    sys.exit(main())
