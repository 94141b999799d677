"""Acceptance gate: criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are printed
outside pytest's capture so they appear in the normal output.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from fairmarket.errors import InfeasibleAssignment
from fairmarket.experiments import ParetoPoint, TrialSpec, pareto_front, run_comparison, trade_off_sweep
from fairmarket.io import load_trips
from fairmarket.market import Assignment
from fairmarket.metrics import InterKind, IntraKind, ReturnRateProfile, SubgroupPartition, ge_decomposition
from fairmarket.objective import (
    ContinuousPoint,
    ObjectiveConfig,
    PenaltyConfig,
    RelaxedObjective,
    augmented_lagrangian,
    gradient,
    natural_objective,
)
from fairmarket.sdp import export_shor_sdp, read_sdpa, stack
from fairmarket.solvers import AugLagSettings, solve_auglag, solve_exact
from fairmarket.stats import one_way_anova, pooled_t_test, welch_t_test

import oracles
from conftest import as_lists, five_worker_instance, random_instance
from test_objective import fd_gradient
from test_stats import (
    ANOVA_F,
    ANOVA_GROUPS,
    ANOVA_P,
    POOLED_P,
    POOLED_T2,
    T_A,
    T_B,
    WELCH_P,
    WELCH_T,
)

DATA = Path(__file__).resolve().parents[1] / "data" / "trips.csv"
COMBINED_CFG = ObjectiveConfig(0.5, 0.5, 0.0, IntraKind.LINEARISED, InterKind.INTER3)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return emit


def test_criterion_01_augmented_equals_natural_at_feasible_points(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    pen = PenaltyConfig()
    for seed in range(100):
        state, b = five_worker_instance(seed)
        chosen = np.random.default_rng(seed).permutation(5)
        a = Assignment.from_workers(state, b, chosen)
        nat = natural_objective(state, b, a, COMBINED_CFG)
        aug = augmented_lagrangian(state, b, ContinuousPoint.from_assignment(a), COMBINED_CFG, pen)
        worst = max(worst, abs(aug - nat))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 5
    assert verdict(1, ok, f"max |augmented - natural| = {worst:.3g} over 100 assignments in {dt:.2f}s")


def test_criterion_02_entropy_decomposition(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(4, 21))
        k = int(rng.integers(2, 5))
        labels = list(range(k)) + rng.integers(0, k, n - k).tolist()
        rng.shuffle(labels)
        rates = rng.lognormal(0.0, 0.8, n)
        prof = ReturnRateProfile(tuple(rates))
        part = SubgroupPartition(prof, tuple(labels))
        for which in (IntraKind.GE1, IntraKind.GE0):
            total, within, between = ge_decomposition(prof, part, which)
            worst = max(worst, abs(total - (within + between)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 5
    assert verdict(2, ok, f"max |total - within - between| = {worst:.3g} over 1000 profiles x 2 indices in {dt:.2f}s")


def test_criterion_03_exact_solver_optimality(verdict):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(50):
        state, b = five_worker_instance(300 + seed)
        res = solve_exact(state, b, COMBINED_CFG)
        p, d, A, U, L, labels = as_lists(state, b)
        want_value, want_chosen = oracles.brute_force_min(p, d, A, U, L, labels, (0.5, 0.5, 0.0), "linearised", 3)
        # the oracle's own value at our matching must be its minimum, bit for bit
        ours = oracles.natural_value(p, d, A, U, L, labels, res.assignment.chosen_workers(), (0.5, 0.5, 0.0), "linearised", 3)
        if ours != want_value or res.assignment.chosen_workers() != tuple(want_chosen):
            mismatches += 1
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 30
    assert verdict(3, ok, f"{50 - mismatches}/50 instances match the brute-force minimiser in {dt:.2f}s")


def test_criterion_04_auglag_quality(verdict):
    t0 = time.perf_counter()
    gaps, inner_gaps, feasible = [], [], 0
    pen = PenaltyConfig.uniform(10.0)
    for seed in range(100):
        state, b = five_worker_instance(10_000 + seed)
        opt = solve_exact(state, b, COMBINED_CFG).objective
        res = solve_auglag(state, b, COMBINED_CFG, pen, AugLagSettings(restarts=16, seed=seed))
        try:
            natural_objective(state, b, res.assignment, COMBINED_CFG)  # raises unless feasible
            feasible += 1
        except InfeasibleAssignment:
            pass
        gaps.append((res.objective - opt) / abs(opt))
    dt = time.perf_counter() - t0
    # best-restart inner-product rounding, reported for comparison only
    for seed in range(100):
        state, b = five_worker_instance(10_000 + seed)
        opt = solve_exact(state, b, COMBINED_CFG).objective
        res = solve_auglag(state, b, COMBINED_CFG, pen, AugLagSettings(restarts=16, seed=seed, rounding="inner-product"))
        inner_gaps.append((res.objective - opt) / abs(opt))
    g, gi = np.array(gaps), np.array(inner_gaps)
    q = np.percentile(g, [0, 10, 25, 50, 75, 90, 100])
    qi = np.percentile(gi, [0, 10, 25, 50, 75, 90, 100])
    ok = feasible == 100 and np.median(g) <= 0.10 and dt < 300
    detail = (
        f"feasible {feasible}/100, median gap {np.median(g):.2%} (target <= 10%), {dt:.1f}s\n"
        f"  gap percentiles 0/10/25/50/75/90/100: {' '.join(f'{v:.4f}' for v in q)}; at optimum {np.mean(g < 1e-12):.0%}\n"
        f"  all gaps (sorted): {' '.join(f'{v:.4f}' for v in np.sort(g))}\n"
        f"  inner-product rounding only: median {np.median(gi):.2%}; percentiles {' '.join(f'{v:.4f}' for v in qi)}"
    )
    assert verdict(4, ok, detail)


def test_criterion_05_inter3_comparison(verdict):
    t0 = time.perf_counter()
    res = run_comparison(TrialSpec(), load_trips(DATA), runs=30, seed=0)
    dt = time.perf_counter() - t0
    treated = res.summary["intra5+inter3"]["inter3"]["mean"]
    control = res.summary["intra5-only"]["inter3"]["mean"]
    t, p = res.welch
    ok = treated < control and t < 0 and p < 0.05 and dt < 120
    detail = (
        f"mean Inter3 {treated:.4f} (intra5+inter3) vs {control:.4f} (intra5-only); "
        f"Welch t = {t:.3f}, p = {p:.3g}; ANOVA F = {res.anova.statistic:.3f}, p = {res.anova.pvalue:.3g}; {dt:.2f}s"
    )
    assert verdict(5, ok, detail)


def test_criterion_06_baseline_dominated(verdict):
    trips = load_trips(DATA)
    t0 = time.perf_counter()
    res = trade_off_sweep(TrialSpec(), trips, runs_per_gamma=50, baseline_runs=250, seed=0)
    dt = time.perf_counter() - t0
    frac = res.dominated_fraction[("intra2", "inter3")]
    t1 = time.perf_counter()
    aug = trade_off_sweep(TrialSpec(solver="auglag"), trips, runs_per_gamma=50, baseline_runs=250, seed=0)
    dt_aug = time.perf_counter() - t1
    frac_aug = aug.dominated_fraction[("intra2", "inter3")]
    ok = frac >= 0.60 and dt < 600
    detail = (
        f"{frac:.1%} of 250 baseline points dominated in (Intra2, Inter3), exact solver, {dt:.1f}s "
        f"(augmented-Lagrangian solver: {frac_aug:.1%}, {dt_aug:.1f}s)"
    )
    assert verdict(6, ok, detail)


def test_criterion_07_gradient(verdict):
    t0 = time.perf_counter()
    configs = [
        COMBINED_CFG,
        ObjectiveConfig(0.3, 0.6, 0.1, IntraKind.GE1, InterKind.INTER1),
        ObjectiveConfig(0.6, 0.3, 0.2, IntraKind.GE0, InterKind.INTER2),
        ObjectiveConfig(0.5, 0.5, 0.5, IntraKind.GINI, InterKind.INTER3),
        ObjectiveConfig(0.7, 0.2, 0.0, IntraKind.GE_ALPHA, InterKind.INTER1, alpha=2.0),
    ]
    worst = 0.0
    for seed in range(100):
        cfg = configs[seed % len(configs)]
        state, b = random_instance(seed, p_unavailable=0.2)
        rng = np.random.default_rng(seed)
        point = ContinuousPoint(rng.uniform(0, 1, (b.n_jobs, state.n_workers)), rng.uniform(0.2, 4.0, state.n_workers))
        pen = PenaltyConfig(*rng.uniform(0, 20, 4))
        obj = RelaxedObjective(state, b, cfg, pen)
        gM, gu = gradient(state, b, point, cfg, pen)
        fM, fu = fd_gradient(lambda M, u: float(obj.value(M, u)), point.M, point.u, h=1e-6)
        g = np.concatenate([gM.ravel(), gu])
        fd = np.concatenate([fM.ravel(), fu])
        worst = max(worst, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and dt < 10
    assert verdict(7, ok, f"max relative gradient error {worst:.3g} over 100 points in {dt:.2f}s")


def test_criterion_08_sdp_round_trip(verdict, tmp_path):
    t0 = time.perf_counter()
    state, b = five_worker_instance(8)
    cfg = ObjectiveConfig(1.0, 0.0, 0.3, IntraKind.LINEARISED, InterKind.INTER3)
    pen = PenaltyConfig(1.0, 2.0, 3.0, 4.0)
    path, _ = export_shor_sdp(state, b, cfg, pen, tmp_path / "shor.dat-s")
    prob = read_sdpa(path)
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        pt = ContinuousPoint(rng.uniform(0, 1, (5, 5)), rng.uniform(0, 4, 5))
        worst = max(worst, abs(prob.evaluate(stack(pt.M, pt.u)) - augmented_lagrangian(state, b, pt, cfg, pen)))
    dt = time.perf_counter() - t0
    dim = prob.block_struct[0]
    ok = worst <= 1e-9 and dim == 31 and dt < 5
    assert verdict(8, ok, f"max round-trip error {worst:.3g} at 100 points, block dimension {dim}, {dt:.2f}s")


def dominance_oracle(xy):
    x, y = xy[:, 0], xy[:, 1]
    le = (x[:, None] <= x[None, :]) & (y[:, None] <= y[None, :])
    lt = (x[:, None] < x[None, :]) | (y[:, None] < y[None, :])
    dominated = (le & lt).any(axis=0)  # [q, p]: q dominates p
    return np.flatnonzero(~dominated).tolist()


def test_criterion_09_pareto_filter(verdict):
    rng = np.random.default_rng(9)
    elapsed, mismatches = 0.0, 0
    for k in range(100):
        n = int(rng.integers(0, 501))
        xy = rng.uniform(0, 1, (n, 2))
        if k % 2:
            xy = np.round(xy * 10) / 10  # coarse grid: many ties and duplicates
        pts = [ParetoPoint(float(a), float(c), "s", i) for i, (a, c) in enumerate(xy)]
        t0 = time.perf_counter()
        front = pareto_front(pts)
        elapsed += time.perf_counter() - t0
        if [p.run for p in front] != dominance_oracle(xy.reshape(-1, 2)):
            mismatches += 1
    ok = mismatches == 0 and elapsed < 5
    assert verdict(9, ok, f"{100 - mismatches}/100 point sets match the quadratic oracle; filter time {elapsed:.2f}s")


def test_criterion_10_statistics(verdict):
    anova = one_way_anova(ANOVA_GROUPS)
    welch = welch_t_test(T_A, T_B)
    pooled = pooled_t_test(T_A, T_B)
    two = one_way_anova([T_A, T_B])
    errs = {
        "anova F": abs(anova.statistic - ANOVA_F),
        "welch t": abs(welch.statistic - WELCH_T),
        "pooled t^2": abs(pooled.statistic**2 - POOLED_T2),
        "F - t^2": abs(two.statistic - pooled.statistic**2),
    }
    perrs = {
        "anova p": abs(anova.pvalue - ANOVA_P),
        "welch p": abs(welch.pvalue - WELCH_P),
        "pooled p": abs(pooled.pvalue - POOLED_P),
    }
    ok = max(errs.values()) <= 1e-9 and max(perrs.values()) <= 1e-6
    detail = "; ".join(f"{k} err {v:.2g}" for k, v in {**errs, **perrs}.items())
    assert verdict(10, ok, detail)
