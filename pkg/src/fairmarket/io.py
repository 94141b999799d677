"""Trip-data ingestion and batch sampling."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetTooSmall, EmptyDataset, InvalidRange, MissingColumn

__all__ = [
    "TripRecord",
    "TripDataset",
    "load_trips",
    "sample_batch",
    "sample_suitability",
    "write_synthetic_trips",
]

DEFAULT_COLUMN = "trip_distance"


@dataclass(frozen=True)
class TripRecord:
    trip_distance: float  # miles


@dataclass(frozen=True, eq=False)
class TripDataset:
    records: tuple[TripRecord, ...]
    skipped: int = 0
    source: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def distances(self) -> np.ndarray:
        return np.array([r.trip_distance for r in self.records], dtype=float)

    def filter(self, min_distance: float) -> "TripDataset":
        """Keep trips strictly longer than ``min_distance``."""
        kept = tuple(r for r in self.records if r.trip_distance > min_distance)
        return TripDataset(kept, self.skipped + len(self.records) - len(kept), self.source)


def load_trips(path, column: str | int = DEFAULT_COLUMN) -> TripDataset:
    """Read trip distances from a headed CSV file, in file order.

    ``column`` is a header name (matched case-insensitively) or a 0-based
    index. Rows whose distance is missing, non-numeric, negative or
    non-finite are skipped and counted.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"trip file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyDataset(f"{path} is empty")
        if isinstance(column, int):
            if not 0 <= column < len(header):
                raise MissingColumn(f"column index {column} out of range for {len(header)} columns")
            col = column
        else:
            names = [h.strip().lower() for h in header]
            try:
                col = names.index(column.strip().lower())
            except ValueError:
                raise MissingColumn(f"no column named {column!r} in {path}") from None
        records, skipped = [], 0
        for row in reader:
            if not row:
                continue
            try:
                v = float(row[col])
            except (IndexError, ValueError):
                skipped += 1
                continue
            if not math.isfinite(v) or v < 0:
                skipped += 1
                continue
            records.append(TripRecord(v))
    if not records:
        raise EmptyDataset(f"no usable trip distances in {path}")
    return TripDataset(tuple(records), skipped, str(path))


def sample_batch(trips: TripDataset, size: int, rng: np.random.Generator) -> np.ndarray:
    """Payments of one batch: ``size`` trip distances drawn without replacement."""
    if size > len(trips):
        raise DatasetTooSmall(f"cannot draw {size} trips from {len(trips)}")
    idx = rng.choice(len(trips), size=size, replace=False)
    return trips.distances[idx]


def sample_suitability(jobs: int, workers: int, rng: np.random.Generator, low: float = 0.0, high: float = 0.5):
    """I.i.d. uniform job/worker suitability values on ``[low, high]``."""
    if not (math.isfinite(low) and math.isfinite(high)) or low < 0 or low > high:
        raise InvalidRange(f"invalid suitability range [{low}, {high}]")
    if low == high:
        return np.full((jobs, workers), float(low))
    return rng.uniform(low, high, size=(jobs, workers))


def write_synthetic_trips(path, n: int = 5000, seed: int = 0) -> Path:
    """Write a stand-in trip file shaped like the TLC yellow-taxi export.

    Distances are log-normal (median about 1.7 miles) with a small share of
    zero-length trips, as in the public data.
    """
    rng = np.random.default_rng(seed)
    dist = np.round(np.exp(rng.normal(math.log(1.7), 0.8, n)), 2)
    dist[rng.random(n) < 0.01] = 0.0
    passengers = rng.integers(1, 5, n)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["VendorID", "passenger_count", "trip_distance", "RatecodeID", "payment_type"])
        for k in range(n):
            w.writerow([1 + k % 2, int(passengers[k]), f"{dist[k]:.2f}", 1, 1])
    return path
