import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairmarket.errors import (
    InstanceTooLarge,
    MarketError,
    NoFeasibleAssignment,
    NoFeasibleRounding,
)
from fairmarket.market import Assignment, Batch, MarketState, check_assignment
from fairmarket.metrics import InterKind, IntraKind
from fairmarket.objective import (
    ContinuousPoint,
    MarketContext,
    ObjectiveConfig,
    PenaltyConfig,
    gradient,
    natural_objective,
)
from fairmarket.solvers import (
    AugLagSettings,
    feasible_matchings,
    round_to_matching,
    solve_auglag,
    solve_exact,
)

import oracles
from conftest import as_lists, five_worker_instance, random_instance

# Oracle optimum of five_worker_instance(0) under 0.5 Intra5 + 0.5 Inter3.
FIVE0_OPTIMUM = 4.875171461188446
FIVE0_OPTIMUM_WORKERS = (4, 0, 1, 2, 3)

COMBINED_CFG = ObjectiveConfig(0.5, 0.5, 0.0, IntraKind.LINEARISED, InterKind.INTER3)

CONFIGS = [
    COMBINED_CFG,
    ObjectiveConfig(0.3, 0.6, 0.1, IntraKind.GE1, InterKind.INTER1),
    ObjectiveConfig(0.6, 0.3, 0.2, IntraKind.GE0, InterKind.INTER2),
    ObjectiveConfig(0.5, 0.5, 0.5, IntraKind.GINI, InterKind.INTER3),
    ObjectiveConfig(0.7, 0.2, 0.0, IntraKind.GE_ALPHA, InterKind.INTER1, alpha=2.0),
]


def brute(state, batch, cfg):
    p, d, A, U, L, labels = as_lists(state, batch)
    return oracles.brute_force_min(
        p, d, A, U, L, labels, (cfg.gamma1, cfg.gamma2, cfg.gamma3), cfg.intra.value, int(cfg.inter), cfg.alpha
    )


def is_feasible(state, batch, assignment):
    check_assignment(state, batch, assignment)
    return True


# ---------------------------------------------------------------- exact


def test_exact_five_worker_frozen_optimum():
    state, b = five_worker_instance(0)
    res = solve_exact(state, b, COMBINED_CFG)
    assert res.assignment.chosen_workers() == FIVE0_OPTIMUM_WORKERS
    assert res.objective == pytest.approx(FIVE0_OPTIMUM, abs=1e-12)
    assert res.diagnostics["candidates"] == 120
    assert res.method == "enumeration"


def test_exact_prefers_smaller_distance():
    state = MarketState.new(["m", "f"])
    b = Batch([1.0], [[0.2, 0.1]])
    res = solve_exact(state, b, ObjectiveConfig(0.0, 0.0, 1.0))
    assert res.assignment.chosen_workers() == (1,)
    assert res.objective == pytest.approx(0.1)


def test_exact_tie_break_picks_identity():
    state = MarketState.new(["m", "f"])
    b = Batch([2.0, 2.0], [[0.5, 0.5], [0.5, 0.5]])
    res = solve_exact(state, b, ObjectiveConfig(1.0, 0.0, 0.0, IntraKind.GE1))
    # both permutations give equal rates; the identity has the larger flattened matrix
    assert res.assignment.chosen_workers() == (0, 1)
    assert res.objective == 0.0


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: c.label)
@given(seed=st.integers(0, 10**6))
@settings(max_examples=15, deadline=None)
def test_exact_matches_brute_force(cfg, seed):
    state, b = random_instance(seed, p_unavailable=0.3)
    want = brute(state, b, cfg)
    res = solve_exact(state, b, cfg)
    assert res.objective == pytest.approx(want[0], rel=1e-12, abs=1e-12)
    assert res.objective == pytest.approx(natural_objective(state, b, res.assignment, cfg), abs=1e-9)
    assert is_feasible(state, b, res.assignment)


@given(seed=st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_exact_is_lower_bound_over_all_matchings(seed):
    state, b = five_worker_instance(seed)
    res = solve_exact(state, b, COMBINED_CFG)
    for chosen in feasible_matchings(MarketContext(state, b)):
        a = Assignment.from_workers(state, b, chosen)
        assert natural_objective(state, b, a, COMBINED_CFG) >= res.objective


def test_exact_errors():
    cfg = ObjectiveConfig(0.0, 0.0, 1.0)
    with pytest.raises(InstanceTooLarge):
        solve_exact(MarketState.new(["m"] * 11), Batch([1.0], [[0.1] * 11]), cfg)
    with pytest.raises(InstanceTooLarge):
        solve_exact(MarketState.new(["m"] * 9), Batch([1.0] * 9, [[0.1] * 9] * 9), cfg)
    with pytest.raises(NoFeasibleAssignment):  # more jobs than available workers
        state = MarketState.new(["m", "f"], available=[True, False])
        solve_exact(state, Batch([1.0, 1.0], [[0.1, math.nan]] * 2), cfg)
    with pytest.raises(NoFeasibleAssignment):  # every matching forces u < 0
        solve_exact(MarketState.new(["m", "f"]), Batch([0.1], [[0.5, 0.6]]), cfg)


def test_exact_skips_matchings_with_undefined_entropy():
    # worker 1's only zero-utility option would give it a zero rate under GE(0)
    state = MarketState.new(["m", "f"])
    b = Batch([1.0, 1.0], [[0.0, 0.0], [1.0, 0.5]])
    res = solve_exact(state, b, ObjectiveConfig(1.0, 0.0, 0.0, IntraKind.GE0))
    assert res.assignment.chosen_workers() == (0, 1)
    assert all(res.assignment.utilities > 0)


def test_feasible_matchings_order_and_filter():
    state = MarketState.new(["m", "f", "m"], available=[True, False, True])
    b = Batch([1.0, 1.0], [[0.1, math.nan, 2.0], [0.1, math.nan, 0.1]])
    cands = feasible_matchings(MarketContext(state, b))
    # (2, 0) forces job 0 below zero
    assert cands.tolist() == [[0, 2]]


# ---------------------------------------------------------------- rounding


def test_round_binary_point_is_idempotent():
    state, b = five_worker_instance(1)
    a = Assignment.from_workers(state, b, [3, 1, 4, 0, 2])
    r = round_to_matching(ContinuousPoint.from_assignment(a), b, state)
    assert r.chosen_workers() == (3, 1, 4, 0, 2)
    assert np.array_equal(r.utilities, a.utilities)


def test_round_tie_picks_lower_index():
    state = MarketState.new(["m", "f"])
    b = Batch([1.0], [[0.2, 0.1]])
    r = round_to_matching(ContinuousPoint([[0.5, 0.5]], [0.0, 0.0]), b, state)
    assert r.chosen_workers() == (0,)


def test_round_skips_negative_utility_pairs():
    state = MarketState.new(["m", "f"])
    b = Batch([1.0], [[1.5, 0.1]])
    r = round_to_matching(ContinuousPoint([[0.9, 0.1]], [0.0, 0.0]), b, state)
    assert r.chosen_workers() == (1,)
    with pytest.raises(NoFeasibleRounding):
        round_to_matching(ContinuousPoint([[0.9, 0.1]], [0.0, 0.0]), Batch([0.1], [[1.5, 0.2]]), state)


@given(seed=st.integers(0, 10**6))
@settings(max_examples=50, deadline=None)
def test_round_agrees_with_unconflicted_argmax(seed):
    state, b = five_worker_instance(seed)
    rng = np.random.default_rng(seed)
    M = rng.uniform(0, 1, (5, 5))
    r = round_to_matching(ContinuousPoint(M, np.zeros(5)), b, state)
    # brute-force best inner product over feasible matchings
    p, d, A, *_ = as_lists(state, b)
    best = max(
        (c for c in oracles.injective_matchings(5, A) if all(p[i] >= d[i][j] for i, j in enumerate(c))),
        key=lambda c: sum(M[i, j] for i, j in enumerate(c)),
    )
    assert r.chosen_workers() == tuple(best)
    arg = M.argmax(1)
    if len(set(arg.tolist())) == 5:
        assert r.chosen_workers() == tuple(arg.tolist())


# ---------------------------------------------------------------- augmented Lagrangian


FAST = AugLagSettings(restarts=4, max_iters=300)


def test_default_rounding_is_candidates():
    assert AugLagSettings().rounding == "candidates"


def test_settings_validation():
    for bad in (dict(restarts=0), dict(tol=0.0), dict(max_iters=-1), dict(backtrack=1.0), dict(rounding="nearest")):
        with pytest.raises(MarketError):
            AugLagSettings(**bad)


@given(seed=st.integers(0, 10**6))
@settings(max_examples=10, deadline=None)
def test_auglag_always_feasible_and_consistent(seed):
    state, b = random_instance(seed, p_unavailable=0.3)
    res = solve_auglag(state, b, COMBINED_CFG, PenaltyConfig(), FAST)
    assert is_feasible(state, b, res.assignment)
    assert res.objective == pytest.approx(natural_objective(state, b, res.assignment, COMBINED_CFG), abs=1e-9)
    assert res.method == "auglag"


@pytest.mark.parametrize("seed", range(16))
def test_auglag_not_below_enumeration(seed):
    state, b = five_worker_instance(0)
    res = solve_auglag(state, b, COMBINED_CFG, PenaltyConfig.uniform(10.0), AugLagSettings(seed=seed, restarts=4))
    assert res.objective >= FIVE0_OPTIMUM - 1e-12


def test_auglag_deterministic():
    state, b = five_worker_instance(2)
    s = AugLagSettings(restarts=4, max_iters=200, seed=7)
    r1 = solve_auglag(state, b, COMBINED_CFG, PenaltyConfig(), s)
    r2 = solve_auglag(state, b, COMBINED_CFG, PenaltyConfig(), s)
    assert r1.objective == r2.objective
    assert np.array_equal(r1.assignment.matching, r2.assignment.matching)
    for key in ("iterations", "status", "restart_values", "relaxation_value"):
        assert r1.diagnostics[key] == r2.diagnostics[key]
    p1, p2 = r1.diagnostics["continuous_point"], r2.diagnostics["continuous_point"]
    assert np.array_equal(p1.M, p2.M) and np.array_equal(p1.u, p2.u)


def test_auglag_traces_are_non_increasing():
    state, b = five_worker_instance(3)
    res = solve_auglag(state, b, COMBINED_CFG, PenaltyConfig(), AugLagSettings(restarts=6, max_iters=300, record_trace=True))
    for trace in res.diagnostics["traces"]:
        assert all(b_ <= a_ for a_, b_ in zip(trace, trace[1:]))


def test_auglag_stays_at_stationary_optimum():
    # equal rates make GE1 zero at its smooth minimum; with phi4 = 0 every residual vanishes
    state = MarketState.new(["m", "f"])
    b = Batch([2.0, 2.0], [[0.5, 0.5], [0.5, 0.5]])
    cfg = ObjectiveConfig(1.0, 0.0, 0.0, IntraKind.GE1)
    pen = PenaltyConfig(10.0, 10.0, 10.0, 0.0)
    start = ContinuousPoint.from_assignment(Assignment.from_workers(state, b, [0, 1]))
    gM, gu = gradient(state, b, start, cfg, pen)
    assert np.abs(gM).max() < 1e-12 and np.abs(gu).max() < 1e-12
    res = solve_auglag(state, b, cfg, pen, AugLagSettings(restarts=1), init=start)
    end = res.diagnostics["continuous_point"]
    assert np.array_equal(end.M, start.M) and np.array_equal(end.u, start.u)
    assert res.diagnostics["iterations"] == [0]
    assert res.diagnostics["status"] == ["converged"]
    assert res.assignment.chosen_workers() == (0, 1)


@given(seed=st.integers(0, 10**6))
@settings(max_examples=5, deadline=None)
def test_candidate_rounding_never_worse_than_inner_product(seed):
    state, b = five_worker_instance(seed)
    base = solve_auglag(state, b, COMBINED_CFG, PenaltyConfig(), AugLagSettings(restarts=4, max_iters=300, rounding="inner-product"))
    cand = solve_auglag(state, b, COMBINED_CFG, PenaltyConfig(), FAST)
    assert is_feasible(state, b, cand.assignment)
    # the best restart's inner-product rounding is one of the proposals
    assert cand.objective <= base.objective + 1e-12
    assert cand.diagnostics["rounding_candidates"] >= 1
