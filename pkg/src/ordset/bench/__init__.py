"""Workload generation, benchmark runs, CSV reports and linearizability checks."""

from __future__ import annotations

from .lincheck import ConcurrentRecorder, Event, History, Verdict, check_linearizable
from .report import HEADER, emit_report, read_report
from .runner import run, run_once
from .workload import Workload, WorkloadSpec, exact_counts, gen_workload

__all__ = [
    "ConcurrentRecorder",
    "Event",
    "HEADER",
    "History",
    "Verdict",
    "Workload",
    "WorkloadSpec",
    "check_linearizable",
    "emit_report",
    "exact_counts",
    "gen_workload",
    "read_report",
    "run",
    "run_once",
]
