"""Seeded experiment drivers: formulation comparison, Intra/Inter trade-off sweep and cross-validation.

Every run clears one batch in a fresh market (nobody has worked or earned
before), so each worker's post-step return rate is simply the net payment of
the job it receives. Measures are then evaluated post hoc with the exact
formulas, whatever the solver optimised.

Seeding: a run's generator is ``np.random.default_rng(SeedSequence(master,
spawn_key=(stream, index)))``. ``stream`` names what is drawn (batch payments,
suitability, solver restarts) and ``index`` counts runs or trials, so any run
can be reproduced on its own from the master seed.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .errors import DegenerateVariance, MarketError, RunFailed
from .io import TripDataset, sample_batch, sample_suitability
from .market import Batch, MarketState, step
from .metrics import InterKind, IntraKind
from .objective import ObjectiveConfig, PenaltyConfig
from .solvers import AugLagSettings, SolveResult, solve_auglag, solve_exact
from .stats import TestResult, one_way_anova, welch_t_test

__all__ = [
    "STREAMS",
    "derive_seed",
    "run_rng",
    "Formulation",
    "COMPARISON_FORMULATIONS",
    "BASELINE",
    "combined",
    "TrialSpec",
    "FairnessReport",
    "INTRA_MEASURES",
    "INTER_MEASURES",
    "MEASURES",
    "MEASURE_PAIRS",
    "RunRecord",
    "ParetoPoint",
    "pareto_front",
    "dominated_by",
    "clear_batch",
    "ComparisonResult",
    "run_comparison",
    "SweepResult",
    "trade_off_sweep",
    "CrossValidationResult",
    "cross_validate",
    "write_runs_csv",
    "write_timings_csv",
    "write_json",
]

STREAMS = {"payments": 0, "suitability": 1, "solver": 2}


def derive_seed(master: int, stream: str, index: int) -> int:
    """64-bit seed of run ``index`` in ``stream``; a pure function of its arguments."""
    ss = np.random.SeedSequence(int(master), spawn_key=(STREAMS[stream], int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_rng(master: int, stream: str, index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, stream, index))


@dataclass(frozen=True)
class Formulation:
    name: str
    objective: ObjectiveConfig


def combined(gamma1: float, inter: InterKind = InterKind.INTER3, name: str | None = None) -> Formulation:
    """Linearised Intra plus one Inter measure, weighted ``(gamma1, 1 - gamma1)``."""
    cfg = ObjectiveConfig(gamma1, 1.0 - gamma1, 0.0, IntraKind.LINEARISED, inter)
    return Formulation(name or f"intra5+inter{int(inter)}@{gamma1:g}", cfg)


BASELINE = Formulation("intra5-only", ObjectiveConfig(1.0, 0.0, 0.0, IntraKind.LINEARISED, InterKind.INTER3))
COMPARISON_FORMULATIONS = (
    combined(0.5, InterKind.INTER1, "intra5+inter1"),
    combined(0.5, InterKind.INTER2, "intra5+inter2"),
    combined(0.5, InterKind.INTER3, "intra5+inter3"),
    BASELINE,
)


@dataclass(frozen=True)
class TrialSpec:
    """Market shape and sampling ranges shared by every run of an experiment."""

    batch_size: int = 5
    workers: int = 5
    female_ids: tuple[int, ...] = (2, 4)
    d_range: tuple[float, float] = (0.0, 0.5)
    solver: str = "exact"
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    auglag: AugLagSettings = field(default_factory=AugLagSettings)

    def __post_init__(self):
        object.__setattr__(self, "female_ids", tuple(self.female_ids))
        if self.batch_size < 1 or self.workers < self.batch_size:
            raise MarketError("need 1 <= batch_size <= workers")
        if any(not 0 <= f < self.workers for f in self.female_ids):
            raise MarketError(f"female_ids {self.female_ids} must be worker ids 0..{self.workers - 1}")
        lo, hi = self.d_range
        if lo < 0 or lo > hi:
            raise MarketError(f"invalid suitability range {self.d_range}")
        if self.solver not in ("exact", "auglag"):
            raise MarketError(f"unknown solver {self.solver!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple("f" if j in self.female_ids else "m" for j in range(self.workers))

    @classmethod
    def from_config(cls, config) -> "TrialSpec":
        return cls(
            config.batch_size,
            config.workers,
            config.female_ids,
            config.d_range,
            config.solver,
            config.penalty,
            config.auglag,
        )

    def usable_trips(self, trips: TripDataset) -> TripDataset:
        """Trips long enough that every pairing pays the worker something.

        With payments above the largest possible suitability value every
        return rate is positive, so the entropy measures are always defined.
        """
        return trips.filter(self.d_range[1])


INTRA_MEASURES = ("intra2", "intra3", "intra4")
INTER_MEASURES = ("inter1", "inter2", "inter3")
MEASURES = INTRA_MEASURES + INTER_MEASURES
MEASURE_PAIRS = tuple((a, b) for a in INTRA_MEASURES for b in INTER_MEASURES)


@dataclass(frozen=True)
class FairnessReport:
    """Post-hoc inequality of one cleared batch: GE(1), GE(0), Gini and the three Inter measures."""

    intra2: float
    intra3: float
    intra4: float
    inter1: float
    inter2: float
    inter3: float

    @classmethod
    def from_state(cls, state: MarketState) -> "FairnessReport":
        profile = metrics.return_rates(state.workers)
        labels = tuple(state.labels[j] for j in profile.worker_ids)
        part = metrics.SubgroupPartition(profile, labels)
        return cls(
            metrics.intra(profile, IntraKind.GE1),
            metrics.intra(profile, IntraKind.GE0),
            metrics.intra(profile, IntraKind.GINI),
            metrics.inter(part, InterKind.INTER1),
            metrics.inter(part, InterKind.INTER2),
            metrics.inter(part, InterKind.INTER3),
        )

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RunRecord:
    formulation: str
    run: int
    seed: int
    gamma1: float
    gamma2: float
    objective: float
    chosen: tuple[int, ...]
    report: FairnessReport
    wall_time: float = field(default=0.0, compare=False)

    def row(self) -> dict:
        return {
            "formulation": self.formulation,
            "run": self.run,
            "seed": self.seed,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "objective": self.objective,
            "chosen": " ".join(map(str, self.chosen)),
            **self.report.as_dict(),
        }


@dataclass(frozen=True)
class ParetoPoint:
    intra: float
    inter: float
    source: str
    run: int

    def __post_init__(self):
        if not (math.isfinite(self.intra) and math.isfinite(self.inter)):
            raise MarketError(f"Pareto point ({self.intra}, {self.inter}) is not finite")


def _dominates(q: ParetoPoint, p: ParetoPoint) -> bool:
    return q.intra <= p.intra and q.inter <= p.inter and (q.intra < p.intra or q.inter < p.inter)


def pareto_front(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated points (both coordinates minimised), in input order.

    Sorting by ``intra`` lets one sweep decide each point: it survives iff it
    has the smallest ``inter`` among points with the same ``intra`` and a
    strictly smaller ``inter`` than every point with a smaller ``intra``.
    Identical points do not dominate each other, so duplicates all survive.
    """
    order = sorted(range(len(points)), key=lambda k: (points[k].intra, points[k].inter))
    keep = [False] * len(points)
    best_before = math.inf
    pos = 0
    while pos < len(order):
        end = pos
        x = points[order[pos]].intra
        while end < len(order) and points[order[end]].intra == x:
            end += 1
        group_min = points[order[pos]].inter
        for k in order[pos:end]:
            y = points[k].inter
            keep[k] = y == group_min and y < best_before
        best_before = min(best_before, group_min)
        pos = end
    return [p for p, k in zip(points, keep) if k]


def dominated_by(points: Sequence[ParetoPoint], others: Sequence[ParetoPoint]) -> list[bool]:
    """For each of ``points``, whether some point of ``others`` dominates it."""
    if not others:
        return [False] * len(points)
    front = pareto_front(others)
    return [any(_dominates(q, p) for q in front) for p in points]


def clear_batch(
    spec: TrialSpec,
    formulation: Formulation,
    payments,
    suitability,
    solver_seed: int = 0,
) -> tuple[SolveResult, FairnessReport]:
    """Clear one batch in a fresh market and measure the outcome."""
    state = MarketState.new(spec.labels)
    batch = Batch(payments, suitability)
    if spec.solver == "exact":
        res = solve_exact(state, batch, formulation.objective)
    else:
        settings = AugLagSettings(**{**asdict(spec.auglag), "seed": solver_seed})
        res = solve_auglag(state, batch, formulation.objective, spec.penalty, settings)
    return res, FairnessReport.from_state(step(state, batch, res.assignment))


def _run(spec, formulation, payments, master, index, label=None) -> RunRecord:
    d = sample_suitability(spec.batch_size, spec.workers, run_rng(master, "suitability", index), *spec.d_range)
    t0 = time.perf_counter()
    try:
        res, report = clear_batch(spec, formulation, payments, d, derive_seed(master, "solver", index))
    except MarketError as exc:
        raise RunFailed(f"{label or formulation.name} run {index} (seed {master})", exc) from exc
    cfg = formulation.objective
    return RunRecord(
        formulation.name,
        index,
        master,
        cfg.gamma1,
        cfg.gamma2,
        res.objective,
        res.assignment.chosen_workers(),
        report,
        time.perf_counter() - t0,
    )


def _summary(records: Sequence[RunRecord]) -> dict:
    out = {}
    for m in MEASURES:
        xs = [getattr(r.report, m) for r in records]
        mean = math.fsum(xs) / len(xs)
        std = math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / (len(xs) - 1)) if len(xs) > 1 else 0.0
        out[m] = {"mean": mean, "std": std}
    return out


def _test_dict(res: TestResult | None, reason: str | None = None):
    if res is None:
        return {"skipped": reason}
    return {"statistic": res.statistic, "pvalue": res.pvalue, "df": list(res.df)}


def _progress(callback, done, total):
    if callback is not None:
        callback(done, total)


@dataclass(frozen=True, eq=False)
class ComparisonResult:
    payments: np.ndarray
    records: tuple[RunRecord, ...]
    summary: dict  # formulation -> measure -> {"mean", "std"}
    anova: TestResult | None
    welch: TestResult | None
    notes: tuple[str, ...] = ()

    def to_json(self) -> dict:
        anova_reason = welch_reason = "not enough runs or formulations"
        for n in self.notes:
            if n.startswith("anova"):
                anova_reason = n
            elif n.startswith("welch"):
                welch_reason = n
        return {
            "payments": self.payments.tolist(),
            "summary": self.summary,
            "anova_inter3": _test_dict(self.anova, anova_reason),
            "welch_inter3": _test_dict(self.welch, welch_reason),
        }


def run_comparison(
    spec: TrialSpec,
    trips: TripDataset,
    *,
    runs: int = 30,
    seed: int = 0,
    formulations: Sequence[Formulation] = COMPARISON_FORMULATIONS,
    treated: str = "intra5+inter3",
    control: str = BASELINE.name,
    progress: Callable[[int, int], None] | None = None,
) -> ComparisonResult:
    """Clear one sampled batch ``runs`` times per formulation with fresh suitability draws.

    Run ``k`` uses the same suitability matrix under every formulation. The
    Inter3 values are compared across formulations by one-way ANOVA, and
    ``treated`` against ``control`` by Welch's t test (negative t means the
    treated formulation has the lower mean).
    """
    if runs < 1:
        raise MarketError("runs must be >= 1")
    payments = sample_batch(spec.usable_trips(trips), spec.batch_size, run_rng(seed, "payments", 0))
    records, total = [], runs * len(formulations)
    for f in formulations:
        for k in range(runs):
            records.append(_run(spec, f, payments, seed, k))
            _progress(progress, len(records), total)
    by_name = {f.name: [r for r in records if r.formulation == f.name] for f in formulations}
    summary = {name: _summary(rs) for name, rs in by_name.items()}
    anova = welch = None
    notes = []
    inter3 = {name: [r.report.inter3 for r in rs] for name, rs in by_name.items()}
    if runs >= 2 and len(formulations) >= 2:
        try:
            anova = one_way_anova(list(inter3.values()))
        except DegenerateVariance as exc:
            notes.append(f"anova skipped: {exc}")
    if runs >= 2 and treated in inter3 and control in inter3:
        try:
            welch = welch_t_test(inter3[treated], inter3[control])
        except DegenerateVariance as exc:
            notes.append(f"welch skipped: {exc}")
    return ComparisonResult(payments, tuple(records), summary, anova, welch, tuple(notes))


@dataclass(frozen=True, eq=False)
class SweepResult:
    payments: np.ndarray
    combined: tuple[RunRecord, ...]
    baseline: tuple[RunRecord, ...]
    fronts: dict  # (intra measure, inter measure) -> list[ParetoPoint]
    dominated_fraction: dict  # (intra measure, inter measure) -> float

    def points(self, pair) -> list[ParetoPoint]:
        a, b = pair
        return [
            ParetoPoint(getattr(r.report, a), getattr(r.report, b), r.formulation, r.run)
            for r in self.combined + self.baseline
        ]

    def to_json(self) -> dict:
        return {
            "payments": self.payments.tolist(),
            "n_combined": len(self.combined),
            "n_baseline": len(self.baseline),
            "pairs": {
                f"{a}-{b}": {
                    "baseline_dominated_fraction": self.dominated_fraction[(a, b)],
                    "front": [asdict(p) for p in self.fronts[(a, b)]],
                }
                for a, b in MEASURE_PAIRS
            },
        }


def trade_off_sweep(
    spec: TrialSpec,
    trips: TripDataset,
    *,
    gamma1_values: Sequence[float] = (0.5, 0.6, 0.7, 0.8, 0.9),
    runs_per_gamma: int = 50,
    baseline_runs: int = 250,
    seed: int = 0,
    inter: InterKind = InterKind.INTER3,
    progress: Callable[[int, int], None] | None = None,
) -> SweepResult:
    """Trace Intra/Inter trade-offs of the combined formulation against the Intra-only baseline.

    Combined run ``g * runs_per_gamma + r`` (the ``r``-th run at the ``g``-th
    weight) and baseline run of the same index share one suitability draw;
    all runs share one batch of payments. For each of the nine post-hoc
    (Intra, Inter) pairs the joint Pareto front is returned together with
    the fraction of baseline points dominated by some combined point.
    """
    payments = sample_batch(spec.usable_trips(trips), spec.batch_size, run_rng(seed, "payments", 0))
    total = len(gamma1_values) * runs_per_gamma + baseline_runs
    comb, base = [], []
    for g, gamma1 in enumerate(gamma1_values):
        f = combined(gamma1, inter)
        for r in range(runs_per_gamma):
            comb.append(_run(spec, f, payments, seed, g * runs_per_gamma + r))
            _progress(progress, len(comb), total)
    for k in range(baseline_runs):
        base.append(_run(spec, BASELINE, payments, seed, k))
        _progress(progress, len(comb) + len(base), total)
    result = SweepResult(payments, tuple(comb), tuple(base), {}, {})
    for pair in MEASURE_PAIRS:
        pts = result.points(pair)
        result.fronts[pair] = pareto_front(pts)
        cpts, bpts = pts[: len(comb)], pts[len(comb) :]
        flags = dominated_by(bpts, cpts)
        result.dominated_fraction[pair] = sum(flags) / len(flags) if flags else math.nan
    return result


@dataclass(frozen=True, eq=False)
class CrossValidationResult:
    records: tuple[RunRecord, ...]
    payments: tuple[tuple[float, ...], ...]
    histograms: dict  # measure -> {"edges": [...], "counts": [...]}

    def to_json(self) -> dict:
        return {
            "trials": len(self.records),
            "summary": _summary(self.records),
            "pairs": [f"{a}-{b}" for a, b in MEASURE_PAIRS],
            "histograms": self.histograms,
        }


def cross_validate(
    spec: TrialSpec,
    trips: TripDataset,
    *,
    trials: int = 100,
    seed: int = 0,
    formulation: Formulation | None = None,
    bins: int = 10,
    progress: Callable[[int, int], None] | None = None,
) -> CrossValidationResult:
    """One run per trial, each trial on a freshly sampled batch; returns per-trial measures and histograms."""
    if trials < 1:
        raise MarketError("trials must be >= 1")
    formulation = formulation or combined(0.5, InterKind.INTER3, "intra5+inter3")
    usable = spec.usable_trips(trips)
    records, pays = [], []
    for t in range(trials):
        payments = sample_batch(usable, spec.batch_size, run_rng(seed, "payments", t))
        records.append(_run(spec, formulation, payments, seed, t, f"trial {t}"))
        pays.append(tuple(float(p) for p in payments))
        _progress(progress, t + 1, trials)
    hist = {}
    for m in MEASURES:
        counts, edges = np.histogram([getattr(r.report, m) for r in records], bins=bins)
        hist[m] = {"edges": edges.tolist(), "counts": counts.tolist()}
    return CrossValidationResult(tuple(records), tuple(pays), hist)


def write_runs_csv(path, records: Sequence[RunRecord]) -> Path:
    """One row per run: formulation, run index, master seed, weights, objective, matching and the six measures."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["formulation", "run", "seed", "gamma1", "gamma2", "objective", "chosen", *MEASURES]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return path


def write_timings_csv(path, records: Sequence[RunRecord]) -> Path:
    """Wall-clock seconds per run, kept apart so the result files stay deterministic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["formulation", "run", "wall_time"])
        for r in records:
            w.writerow([r.formulation, r.run, f"{r.wall_time:.6f}"])
    return path


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
