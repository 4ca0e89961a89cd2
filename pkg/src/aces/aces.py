"""The anytime outer loop: solve fixed-cycle-length plans for growing cycle lengths."""
from __future__ import annotations

import csv
import io
import logging
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .conversion import convert_to_sfep
from .milp import build_flat_milp, extract_flat_embedding, initialize_buffers
from .model import FactoryInstance, FlatEmbedding, FullEmbedding, InvalidInstanceError, validate_factory
from .solvers import SolveBudget, get_backend

log = logging.getLogger(__name__)

#: Defaults matching a 30 minute overall limit and a 2.5 minute limit per cycle length.
DEFAULT_TOTAL_BUDGET = 1800.0
DEFAULT_FLAT_BUDGET = 150.0
DEFAULT_MIN_CYCLE_LENGTH = 5


@dataclass(frozen=True)
class AcesConfig:
    total_budget: float = DEFAULT_TOTAL_BUDGET
    flat_budget: float = DEFAULT_FLAT_BUDGET
    min_cycle_length: int = DEFAULT_MIN_CYCLE_LENGTH
    max_cycle_length: Optional[int] = None

    def __post_init__(self):
        if not self.flat_budget > 0:
            raise ValueError("flat_budget must be positive")
        if self.total_budget < 0:
            raise ValueError("total_budget must be non-negative")
        if self.min_cycle_length < 1:
            raise ValueError("min_cycle_length must be >= 1")
        if self.max_cycle_length is not None and self.max_cycle_length < self.min_cycle_length:
            raise ValueError("max_cycle_length is below min_cycle_length")


@dataclass(frozen=True)
class TraceRecord:
    T: int
    status: str
    throughput: Optional[Fraction]
    solve_seconds: float


@dataclass
class AcesTrace:
    """Append-only log of attempted cycle lengths."""

    records: list[TraceRecord] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def append(self, record: TraceRecord) -> None:
        with self._lock:
            self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        with self._lock:
            return iter(list(self.records))

    @property
    def best_so_far(self) -> list[Fraction]:
        best, out = Fraction(0), []
        for r in self:
            if r.throughput is not None and r.throughput > best:
                best = r.throughput
            out.append(best)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_trace_csv(self, buf)
        return buf.getvalue()


TRACE_COLUMNS = ("T", "status", "throughput", "solve_seconds")


def write_trace_csv(trace: AcesTrace, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace:
        w.writerow([r.T, r.status, "" if r.throughput is None else str(r.throughput), f"{r.solve_seconds:.6f}"])


def read_trace_csv(fh) -> AcesTrace:
    rows = csv.DictReader(fh)
    if rows.fieldnames is None or tuple(rows.fieldnames) != TRACE_COLUMNS:
        raise ValueError(f"trace CSV must have columns {', '.join(TRACE_COLUMNS)}")
    trace = AcesTrace()
    for row in rows:
        tp = row["throughput"]
        trace.append(TraceRecord(int(row["T"]), row["status"], Fraction(tp) if tp else None, float(row["solve_seconds"])))
    return trace


@dataclass
class AcesResult:
    embedding: Optional[FullEmbedding]
    trace: AcesTrace
    flat: Optional[FlatEmbedding] = None

    def __iter__(self):
        # Allows ``embedding, trace = aces_solve(...)``.
        yield self.embedding
        yield self.trace

    @property
    def throughput(self) -> Fraction:
        return Fraction(0) if self.embedding is None else self.embedding.throughput


def solve_flat(instance: FactoryInstance, T: int, budget: SolveBudget, backend=None):
    """Build, solve and extract one fixed-cycle-length plan; returns ``(flat or None, solution)``."""
    model = build_flat_milp(instance, T)
    sol = (backend if backend is not None and not isinstance(backend, str) else get_backend(backend)).solve(
        model, budget
    )
    if not sol.has_assignment:
        return None, sol
    flat = initialize_buffers(extract_flat_embedding(model, sol, instance, T), instance)
    return flat, sol


def aces_solve(instance: FactoryInstance, config: AcesConfig = AcesConfig(), backend=None, trace=None) -> AcesResult:
    """Try cycle lengths ``min_cycle_length, +1, ...`` until the overall budget runs out.

    Keeps the plan with strictly greatest throughput (ties keep the shorter
    cycle) and converts it to a full embedding at the end. ``trace`` may be
    passed in to observe progress from another thread.
    """
    report = validate_factory(instance)
    if not report.ok:
        raise InvalidInstanceError(report)
    if backend is None or isinstance(backend, str):
        backend = get_backend(backend)
    trace = AcesTrace() if trace is None else trace
    start = time.monotonic()
    deadline = start + config.total_budget
    best: Optional[FlatEmbedding] = None
    best_tp = Fraction(0)
    T = config.min_cycle_length
    while time.monotonic() < deadline:
        if config.max_cycle_length is not None and T > config.max_cycle_length:
            break
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        budget = SolveBudget(min(config.flat_budget, remaining))
        t0 = time.monotonic()
        flat, sol = solve_flat(instance, T, budget, backend)
        elapsed = time.monotonic() - t0
        tp = None if flat is None else flat.throughput
        trace.append(TraceRecord(T, sol.status, tp, elapsed))
        log.info("T=%d %s throughput=%s (%.2fs)", T, sol.status, tp, elapsed)
        if tp is not None and tp > best_tp:
            best, best_tp = flat, tp
        T += 1
    if best is None:
        return AcesResult(None, trace)
    return AcesResult(convert_to_sfep(best, instance), trace, best)
