"""Experiment configuration read from TOML.

Recognised keys (all optional; missing keys take the defaults below)::

    dataset = "data/trips.csv"      # trip CSV, resolved relative to the config file
    column = "trip_distance"        # header name or 0-based index
    output = "out"                  # output directory, relative to the config file
    seed = 0

    [market]
    batch_size = 5
    workers = 5
    female_ids = [2, 4]             # 0-based worker ids labelled "f"; others are "m"
    d_range = [0.0, 0.5]

    [objective]
    gamma1 = 0.5
    gamma2 = 0.5
    gamma3 = 0.0
    intra = "linearised"            # ge-alpha | ge1 | ge0 | gini | linearised
    inter = 3                       # 1 | 2 | 3
    alpha = 2.0                     # only for ge-alpha

    [penalty]
    phi = 10.0                      # or phi1 .. phi4 individually

    [multipliers]
    lambda1 = 0.0                   # .. lambda4; used by the full Lagrangian only

    [solver]
    method = "exact"                # exact | auglag
    restarts = 16
    max_iters = 2000
    tol = 1e-8
    rounding = "candidates"         # or "inner-product"

    [experiment]
    runs = 30
    runs_per_gamma = 50
    baseline_runs = 250
    trials = 100
    gamma1_values = [0.5, 0.6, 0.7, 0.8, 0.9]
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, MarketError
from .metrics import InterKind, IntraKind
from .objective import MultiplierConfig, ObjectiveConfig, PenaltyConfig
from .solvers import AugLagSettings

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ExperimentConfig", "load_config", "SOLVERS"]

SOLVERS = ("exact", "auglag")
DEFAULT_GAMMA1_VALUES = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Path | None = None
    column: str | int = "trip_distance"
    output: Path = Path("out")
    seed: int = 0
    batch_size: int = 5
    workers: int = 5
    female_ids: tuple[int, ...] = (2, 4)
    d_range: tuple[float, float] = (0.0, 0.5)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    multipliers: MultiplierConfig = field(default_factory=MultiplierConfig)
    solver: str = "exact"
    auglag: AugLagSettings = field(default_factory=AugLagSettings)
    runs: int = 30
    runs_per_gamma: int = 50
    baseline_runs: int = 250
    trials: int = 100
    gamma1_values: tuple[float, ...] = DEFAULT_GAMMA1_VALUES

    def __post_init__(self):
        for name in ("batch_size", "workers", "runs", "runs_per_gamma", "trials"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.baseline_runs < 0:
            raise ConfigError("baseline_runs must be >= 0")
        if self.batch_size > self.workers:
            raise ConfigError("batch_size cannot exceed the number of workers")
        bad = [f for f in self.female_ids if not 0 <= f < self.workers]
        if bad:
            raise ConfigError(f"female_ids {bad} are not worker ids 0..{self.workers - 1}")
        lo, hi = self.d_range
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or lo > hi:
            raise ConfigError(f"d_range must satisfy 0 <= low <= high, got {self.d_range}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not self.gamma1_values or any(not 0 <= g <= 1 for g in self.gamma1_values):
            raise ConfigError("gamma1_values must be a non-empty list within [0, 1]")
        if self.dataset is not None and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset not found: {self.dataset}")

    @property
    def labels(self) -> tuple[str, ...]:
        females = set(self.female_ids)
        return tuple("f" if j in females else "m" for j in range(self.workers))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with the given non-None fields replaced."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _table(doc, name):
    t = doc.get(name, {})
    if not isinstance(t, dict):
        raise ConfigError(f"[{name}] must be a table")
    return t


def _check_keys(table, allowed, where):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"unknown keys in {where}: {extra}")


def load_config(path) -> ExperimentConfig:
    """Parse a TOML experiment file. Relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent
    _check_keys(
        doc,
        ("dataset", "column", "output", "seed", "market", "objective", "penalty", "multipliers", "solver", "experiment"),
        "top level",
    )
    kw = {}
    if "dataset" in doc:
        kw["dataset"] = base / doc["dataset"]
    if "output" in doc:
        kw["output"] = base / doc["output"]
    for key in ("column", "seed"):
        if key in doc:
            kw[key] = doc[key]

    market = _table(doc, "market")
    _check_keys(market, ("batch_size", "workers", "female_ids", "d_range"), "[market]")
    for key in ("batch_size", "workers"):
        if key in market:
            kw[key] = int(market[key])
    if "female_ids" in market:
        kw["female_ids"] = tuple(int(f) for f in market["female_ids"])
    if "d_range" in market:
        lo, hi = market["d_range"]
        kw["d_range"] = (float(lo), float(hi))

    obj = _table(doc, "objective")
    _check_keys(obj, ("gamma1", "gamma2", "gamma3", "intra", "inter", "alpha"), "[objective]")
    try:
        if obj:
            kw["objective"] = ObjectiveConfig(
                gamma1=float(obj.get("gamma1", 0.5)),
                gamma2=float(obj.get("gamma2", 0.5)),
                gamma3=float(obj.get("gamma3", 0.0)),
                intra=IntraKind(obj.get("intra", "linearised")),
                inter=InterKind(int(obj.get("inter", 3))),
                alpha=obj.get("alpha"),
            )
        pen = _table(doc, "penalty")
        _check_keys(pen, ("phi", "phi1", "phi2", "phi3", "phi4"), "[penalty]")
        if pen:
            phi = float(pen.get("phi", 10.0))
            kw["penalty"] = PenaltyConfig(*(float(pen.get(f"phi{k}", phi)) for k in range(1, 5)))
        mult = _table(doc, "multipliers")
        _check_keys(mult, ("lambda1", "lambda2", "lambda3", "lambda4"), "[multipliers]")
        if mult:
            kw["multipliers"] = MultiplierConfig(**{k: float(v) for k, v in mult.items()})
        solver = dict(_table(doc, "solver"))
        if "method" in solver:
            kw["solver"] = solver.pop("method")
        if solver:
            allowed = AugLagSettings.__dataclass_fields__.keys() - {"record_trace"}
            _check_keys(solver, allowed, "[solver]")
            kw["auglag"] = AugLagSettings(**solver)
    except ConfigError:
        raise
    except (TypeError, ValueError, MarketError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    exp = _table(doc, "experiment")
    _check_keys(exp, ("runs", "runs_per_gamma", "baseline_runs", "trials", "gamma1_values"), "[experiment]")
    for key in ("runs", "runs_per_gamma", "baseline_runs", "trials"):
        if key in exp:
            kw[key] = int(exp[key])
    if "gamma1_values" in exp:
        kw["gamma1_values"] = tuple(float(g) for g in exp["gamma1_values"])
    return ExperimentConfig(**kw)
