"""Inequality measures over worker return rates.

Intra-fairness indices (generalised entropy family, Gini, linearised
deviation from the previous maximum) measure dispersion over all workers;
Inter-fairness indices measure the gap between subgroup mean return rates.
Lower values are fairer for every measure.

All sums go through :func:`math.fsum`, which is correctly rounded and so
independent of worker order: reports are bit-reproducible under
permutation of the workers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Hashable, Iterable, Sequence

from .errors import (
    AllWorkersExcluded,
    DegenerateMean,
    EmptyProfile,
    MetricError,
    NonPositiveGroupMean,
    NonPositiveRate,
    UnknownSubgroup,
)

__all__ = [
    "IntraKind",
    "InterKind",
    "ReturnRateProfile",
    "SubgroupPartition",
    "intra",
    "inter",
    "ge_decomposition",
    "return_rates",
]


class IntraKind(str, enum.Enum):
    GE_ALPHA = "ge-alpha"  # Intra 1
    GE1 = "ge1"  # Intra 2
    GE0 = "ge0"  # Intra 3
    GINI = "gini"  # Intra 4
    LINEARISED = "linearised"  # Intra 5

    @property
    def is_entropy(self) -> bool:
        return self in (IntraKind.GE_ALPHA, IntraKind.GE1, IntraKind.GE0)


class InterKind(int, enum.Enum):
    INTER1 = 1  # between-group term of GE(1)
    INTER2 = 2  # between-group term of GE(0)
    INTER3 = 3  # absolute gap of group means


@dataclass(frozen=True)
class ReturnRateProfile:
    """Per-worker return rates U/Λ, with the ids of the workers they belong to."""

    rates: tuple[float, ...]
    worker_ids: tuple[int, ...] = ()
    mean: float = field(init=False)

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if not rates:
            raise EmptyProfile("return-rate profile is empty")
        for r in rates:
            if not math.isfinite(r) or r < 0:
                raise MetricError(f"return rates must be finite and >= 0, got {r!r}")
        ids = tuple(self.worker_ids) or tuple(range(len(rates)))
        if len(ids) != len(rates):
            raise MetricError("worker_ids and rates differ in length")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "worker_ids", ids)
        object.__setattr__(self, "mean", math.fsum(rates) / len(rates))

    def __len__(self):
        return len(self.rates)

    def scaled(self, c: float) -> "ReturnRateProfile":
        return ReturnRateProfile(tuple(c * r for r in self.rates), self.worker_ids)


@dataclass(frozen=True)
class SubgroupPartition:
    """Subgroup membership of the workers of a profile and the derived group statistics.

    ``shares[s]`` is |D^(s)|/|D|, ``group_means[s]`` the mean return rate of
    subgroup ``s`` and ``relative_means[s]`` that mean over the overall mean.
    Groups are kept in first-appearance order unless ``groups`` is given.
    """

    profile: ReturnRateProfile
    labels: tuple[Hashable, ...]
    groups: tuple[Hashable, ...] = ()
    shares: dict = field(init=False, repr=False)
    group_means: dict = field(init=False, repr=False)
    relative_means: dict = field(init=False, repr=False)
    members: dict = field(init=False, repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        n = len(self.profile)
        if len(labels) != n:
            raise MetricError(f"{len(labels)} labels for {n} workers")
        seen = tuple(dict.fromkeys(labels))
        if self.groups:
            groups = tuple(self.groups)
            unknown = [s for s in seen if s not in groups]
            if unknown:
                raise UnknownSubgroup(f"labels {unknown} not in configured subgroups {list(groups)}")
            empty = [s for s in groups if s not in seen]
            if empty:
                raise UnknownSubgroup(f"configured subgroups {empty} have no workers")
        else:
            groups = seen
        members = {s: tuple(k for k, lab in enumerate(labels) if lab == s) for s in groups}
        rates = self.profile.rates
        mu = self.profile.mean
        shares = {s: len(idx) / n for s, idx in members.items()}
        means = {s: math.fsum(rates[k] for k in idx) / len(idx) for s, idx in members.items()}
        rel = {s: (m / mu if mu > 0 else math.nan) for s, m in means.items()}
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "shares", shares)
        object.__setattr__(self, "group_means", means)
        object.__setattr__(self, "relative_means", rel)

    def subprofile(self, s) -> ReturnRateProfile:
        idx = self.members[s]
        return ReturnRateProfile(
            tuple(self.profile.rates[k] for k in idx),
            tuple(self.profile.worker_ids[k] for k in idx),
        )


def _as_profile(profile) -> ReturnRateProfile:
    if isinstance(profile, ReturnRateProfile):
        return profile
    return ReturnRateProfile(tuple(profile))


def _ratios(p: ReturnRateProfile) -> list[float]:
    for r in p.rates:
        if r <= 0:
            raise NonPositiveRate(f"entropy measures need positive rates, got {r!r}")
    return [r / p.mean for r in p.rates]


def intra(profile, kind: IntraKind | str, prev_max: float = 0.0, alpha: float | None = None) -> float:
    """Intra-fairness index of a return-rate profile.

    ``prev_max`` is the largest return rate at the end of the previous
    period and is used only by the linearised measure. ``alpha`` is
    required for ``GE_ALPHA`` and must not be 0 or 1.
    """
    p = _as_profile(profile)
    kind = IntraKind(kind)
    n = len(p)

    if kind is IntraKind.LINEARISED:
        return math.fsum(abs(prev_max - r) for r in p.rates)

    if p.mean <= 0:
        raise DegenerateMean("mean return rate is zero")

    if kind is IntraKind.GINI:
        total = math.fsum(abs(a - b) for a in p.rates for b in p.rates)
        return total / (2.0 * p.mean * n * n)

    x = _ratios(p)
    if kind is IntraKind.GE1:
        return math.fsum(v * math.log(v) for v in x) / n
    if kind is IntraKind.GE0:
        return math.fsum(-math.log(v) for v in x) / n
    if alpha is None or not math.isfinite(alpha) or alpha in (0.0, 1.0):
        raise MetricError(f"GE(alpha) needs a finite alpha outside {{0, 1}}, got {alpha!r}")
    return math.fsum(v**alpha - 1.0 for v in x) / (alpha * (alpha - 1.0) * n)


def inter(partition: SubgroupPartition, kind: InterKind | int) -> float:
    """Inter-fairness index: between-subgroup inequality of mean return rates.

    With more than two subgroups the absolute-gap measure takes the largest
    pairwise gap.
    """
    kind = InterKind(kind)
    if kind is InterKind.INTER3:
        means = [partition.group_means[s] for s in partition.groups]
        if len(means) < 2:
            return 0.0
        return max(abs(a - b) for a, b in combinations(means, 2))

    for s in partition.groups:
        if not partition.relative_means[s] > 0:
            raise NonPositiveGroupMean(f"subgroup {s!r} has non-positive mean return rate")
    nu, om = partition.shares, partition.relative_means
    if kind is InterKind.INTER1:
        return math.fsum(nu[s] * om[s] * math.log(om[s]) for s in partition.groups)
    return math.fsum(-nu[s] * math.log(om[s]) for s in partition.groups)


def ge_decomposition(profile, partition: SubgroupPartition, which: IntraKind | str):
    """Split GE(1) or GE(0) into ``(total, within, between)`` subgroup terms."""
    p = _as_profile(profile)
    which = IntraKind(which)
    if which not in (IntraKind.GE1, IntraKind.GE0):
        raise MetricError(f"decomposition is defined for GE(1) and GE(0), not {which.value}")
    total = intra(p, which)
    nu, om = partition.shares, partition.relative_means
    if which is IntraKind.GE1:
        within = math.fsum(nu[s] * om[s] * intra(partition.subprofile(s), which) for s in partition.groups)
        between = inter(partition, InterKind.INTER1)
    else:
        within = math.fsum(nu[s] * intra(partition.subprofile(s), which) for s in partition.groups)
        between = inter(partition, InterKind.INTER2)
    return total, within, between


def return_rates(workers: Iterable) -> ReturnRateProfile:
    """Return rates U/Λ of every worker with positive accumulated workload.

    Workers are anything exposing ``id``, ``acc_utility`` and ``acc_workload``.
    """
    rates, ids = [], []
    for k, w in enumerate(workers):
        if w.acc_workload > 0:
            rates.append(w.acc_utility / w.acc_workload)
            ids.append(getattr(w, "id", k))
    if not rates:
        raise AllWorkersExcluded("no worker has positive accumulated workload")
    return ReturnRateProfile(tuple(rates), tuple(ids))


def previous_max(workers: Sequence) -> float:
    """Largest return rate among workers with history; 0 when nobody has any."""
    rates = [w.acc_utility / w.acc_workload for w in workers if w.acc_workload > 0]
    return max(rates, default=0.0)
