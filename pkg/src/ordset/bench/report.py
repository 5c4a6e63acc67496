from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, List, Union

from ..shard import Metrics

HEADER = [
    "threads",
    "structure",
    "ops",
    "mix",
    "fill_s",
    "drain_s",
    "total_s",
    "ops_per_s",
    "splits",
    "merges",
    "borrows",
    "peak_blocks",
]

_INT = {"threads", "ops", "splits", "merges", "borrows", "peak_blocks"}
_FLOAT = {"fill_s", "drain_s", "total_s", "ops_per_s"}


def metrics_row(m: Metrics) -> dict:
    return {
        "threads": m.threads,
        "structure": m.structure,
        "ops": m.ops,
        "mix": m.mix,
        "fill_s": f"{m.fill_seconds:.6f}",
        "drain_s": f"{m.drain_seconds:.6f}",
        "total_s": f"{m.total_seconds:.6f}",
        "ops_per_s": f"{m.ops_per_sec:.1f}",
        "splits": m.ledger.get("splits", 0),
        "merges": m.ledger.get("merges", 0),
        "borrows": m.ledger.get("borrows", 0),
        "peak_blocks": m.peak_blocks,
    }


def emit_report(m: Union[Metrics, Iterable[Metrics], None], path: Union[str, Path]) -> None:
    if m is None:
        rows: List[Metrics] = []
    elif isinstance(m, Metrics):
        rows = [m]
    else:
        rows = list(m)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HEADER)
        w.writeheader()
        for r in rows:
            w.writerow(metrics_row(r))


def read_report(path: Union[str, Path]) -> List[dict]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for row in reader:
            parsed = {}
            for k, v in row.items():
                if k in _INT:
                    parsed[k] = int(v)
                elif k in _FLOAT:
                    parsed[k] = float(v)
                else:
                    parsed[k] = v
            out.append(parsed)
    return out
