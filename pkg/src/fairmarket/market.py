"""Workers, batches, assignments and the period-to-period accumulation of utility."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Hashable, Sequence

import numpy as np

from .errors import InfeasibleAssignment, MarketError, ShapeMismatch

__all__ = [
    "WorkerState",
    "Batch",
    "Assignment",
    "PeriodRecord",
    "MarketState",
    "worker_utility",
    "worker_utilities",
    "customer_care",
    "check_assignment",
    "step",
]


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class WorkerState:
    id: int
    subgroup: Hashable = "m"
    available: bool = True
    acc_utility: float = 0.0
    acc_workload: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.acc_utility) and self.acc_utility >= 0):
            raise MarketError(f"worker {self.id}: accumulated utility must be finite and >= 0")
        if self.acc_workload < 0:
            raise MarketError(f"worker {self.id}: accumulated workload must be >= 0")
        if self.acc_workload == 0 and self.acc_utility != 0:
            raise MarketError(f"worker {self.id}: utility accrued without any workload")


@dataclass(frozen=True, eq=False)
class Batch:
    """One period's jobs.

    ``suitability[i, j]`` is the distance (or waiting time) between job ``i``
    and worker ``j``. Columns of unavailable workers are unused and may hold NaN.
    """

    payments: np.ndarray
    suitability: np.ndarray
    period: int = 1

    def __post_init__(self):
        p = _frozen(self.payments)
        d = _frozen(self.suitability)
        if p.ndim != 1:
            raise ShapeMismatch("payments must be a vector")
        if d.ndim != 2 or d.shape[0] != p.shape[0]:
            raise ShapeMismatch(f"suitability shape {d.shape} does not match {p.shape[0]} jobs")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise MarketError("payments must be finite and >= 0")
        known = d[~np.isnan(d)]
        if not np.all(np.isfinite(known)) or np.any(known < 0):
            raise MarketError("suitability entries must be finite and >= 0")
        if self.period < 0:
            raise MarketError("period must be non-negative")
        object.__setattr__(self, "payments", p)
        object.__setattr__(self, "suitability", d)

    @property
    def n_jobs(self) -> int:
        return self.payments.shape[0]

    @property
    def n_workers(self) -> int:
        return self.suitability.shape[1]

    def net_payments(self) -> np.ndarray:
        """p_i - d_ij, the utility worker j would earn from job i."""
        return self.payments[:, None] - self.suitability


@dataclass(frozen=True, eq=False)
class Assignment:
    matching: np.ndarray
    utilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matching", _frozen(self.matching, np.int8))
        object.__setattr__(self, "utilities", _frozen(self.utilities))

    @classmethod
    def from_matching(cls, state: "MarketState", batch: Batch, matching) -> "Assignment":
        m = np.asarray(matching)
        return cls(m, worker_utilities(state, batch, m))

    @classmethod
    def from_workers(cls, state: "MarketState", batch: Batch, chosen: Sequence[int]) -> "Assignment":
        """Build from the worker index chosen for each job."""
        m = np.zeros((batch.n_jobs, len(state.workers)), dtype=np.int8)
        m[np.arange(batch.n_jobs), list(chosen)] = 1
        return cls.from_matching(state, batch, m)

    def chosen_workers(self) -> tuple[int, ...]:
        return tuple(int(j) for j in self.matching.argmax(axis=1))


@dataclass(frozen=True, eq=False)
class PeriodRecord:
    period: int
    batch: Batch
    assignment: Assignment


@dataclass(frozen=True)
class MarketState:
    workers: tuple[WorkerState, ...]
    history: tuple[PeriodRecord, ...] = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "workers", tuple(self.workers))
        ids = [w.id for w in self.workers]
        if ids != list(range(len(ids))):
            raise MarketError("worker ids must be 0..n-1 in order")

    @classmethod
    def new(cls, labels: Sequence[Hashable], available: Sequence[bool] | None = None) -> "MarketState":
        """Fresh market: nobody has worked or earned yet."""
        if available is None:
            available = [True] * len(labels)
        return cls(tuple(WorkerState(j, s, bool(a)) for j, (s, a) in enumerate(zip(labels, available))))

    @property
    def n_workers(self) -> int:
        return len(self.workers)

    @property
    def availability(self) -> np.ndarray:
        return np.array([w.available for w in self.workers], dtype=bool)

    @property
    def acc_utility(self) -> np.ndarray:
        return np.array([w.acc_utility for w in self.workers], dtype=float)

    @property
    def acc_workload(self) -> np.ndarray:
        return np.array([w.acc_workload for w in self.workers], dtype=float)

    @property
    def labels(self) -> tuple:
        return tuple(w.subgroup for w in self.workers)

    @property
    def subgroups(self) -> tuple:
        return tuple(dict.fromkeys(self.labels))

    def with_availability(self, available: Sequence[bool]) -> "MarketState":
        if len(available) != self.n_workers:
            raise ShapeMismatch("availability vector length differs from worker count")
        ws = tuple(replace(w, available=bool(a)) for w, a in zip(self.workers, available))
        return MarketState(ws, self.history)

    def check_batch(self, batch: Batch) -> None:
        if batch.n_workers != self.n_workers:
            raise ShapeMismatch(f"batch has {batch.n_workers} worker columns, market has {self.n_workers}")
        cols = batch.suitability[:, self.availability]
        if np.any(np.isnan(cols)):
            raise MarketError("suitability is missing for an available worker")


def _check_matching(batch: Batch, matching: np.ndarray) -> None:
    if matching.shape != batch.suitability.shape:
        raise ShapeMismatch(f"matching shape {matching.shape} != batch shape {batch.suitability.shape}")


def worker_utility(batch: Batch, matching, worker: int, available: bool = True) -> float:
    """Net utility of one worker this period: sum of assigned (p - d); 0 if offline."""
    m = np.asarray(matching)
    _check_matching(batch, m)
    if not available:
        return 0.0
    jobs = np.flatnonzero(m[:, worker])
    return math.fsum(float(batch.payments[i] - batch.suitability[i, worker]) for i in jobs)


def worker_utilities(state: MarketState, batch: Batch, matching) -> np.ndarray:
    m = np.asarray(matching)
    _check_matching(batch, m)
    return np.array([worker_utility(batch, m, w.id, w.available) for w in state.workers])


def customer_care(batch: Batch, matching, available=None) -> float:
    """Negated total suitability of the assigned pairs (higher is better for customers)."""
    m = np.asarray(matching)
    _check_matching(batch, m)
    if available is None:
        available = np.ones(batch.n_workers, dtype=bool)
    rows, cols = np.nonzero(m)
    return -math.fsum(float(batch.suitability[i, j]) for i, j in zip(rows, cols) if available[j])


def check_assignment(state: MarketState, batch: Batch, assignment: Assignment) -> None:
    """Raise :class:`InfeasibleAssignment` unless every market-clearing constraint holds."""
    m = assignment.matching
    if m.shape != (batch.n_jobs, state.n_workers):
        raise InfeasibleAssignment(f"matching shape {m.shape} does not fit the batch")
    if np.any((m != 0) & (m != 1)):
        raise InfeasibleAssignment("matching must be binary")
    if np.any(m.sum(axis=1) != 1):
        raise InfeasibleAssignment("each job must be matched with exactly one worker")
    if np.any(m.sum(axis=0) > state.availability.astype(int)):
        raise InfeasibleAssignment("a worker got more jobs than availability allows")
    expected = worker_utilities(state, batch, m)
    if assignment.utilities.shape != expected.shape or not np.allclose(
        assignment.utilities, expected, rtol=0, atol=1e-9
    ):
        raise InfeasibleAssignment("utilities do not match the matching")
    if np.any(expected < 0):
        raise InfeasibleAssignment("a worker would earn negative utility")


def step(state: MarketState, batch: Batch, assignment: Assignment) -> MarketState:
    """Advance one period: U += u and Λ += A for every worker. ``state`` is left untouched."""
    check_assignment(state, batch, assignment)
    workers = tuple(
        replace(
            w,
            acc_utility=w.acc_utility + float(assignment.utilities[w.id]) if w.available else w.acc_utility,
            acc_workload=w.acc_workload + int(w.available),
        )
        for w in state.workers
    )
    return MarketState(workers, state.history + (PeriodRecord(batch.period, batch, assignment),))
