"""Market clearing: exact enumeration, multi-start augmented-Lagrangian descent, rounding."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .errors import (
    DivergedObjective,
    InstanceTooLarge,
    MarketError,
    MetricError,
    NoFeasibleAssignment,
    NoFeasibleRounding,
)
from .market import Assignment, Batch, MarketState
from .objective import (
    DEFAULT_CLAMP,
    DEFAULT_SMOOTHING,
    ContinuousPoint,
    MarketContext,
    ObjectiveConfig,
    PenaltyConfig,
    RelaxedObjective,
    natural_objective,
)
from .projection import project_point

__all__ = [
    "SolveResult",
    "AugLagSettings",
    "MAX_ENUM_JOBS",
    "MAX_ENUM_WORKERS",
    "ROUNDING_RULES",
    "feasible_matchings",
    "solve_exact",
    "solve_auglag",
    "round_to_matching",
]

MAX_ENUM_JOBS = 8
MAX_ENUM_WORKERS = 10
ROUNDING_RULES = ("inner-product", "candidates")


@dataclass(frozen=True, eq=False)
class SolveResult:
    assignment: Assignment
    objective: float
    method: str
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AugLagSettings:
    restarts: int = 16
    max_iters: int = 2000
    tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    max_step: float = 1e3
    max_backtracks: int = 60
    ftol: float = 1e-6
    patience: int = 50
    smoothing: float = DEFAULT_SMOOTHING
    clamp: float | None = DEFAULT_CLAMP
    seed: int = 0
    record_trace: bool = False
    rounding: str = "candidates"

    def __post_init__(self):
        if self.restarts < 1:
            raise MarketError("restarts must be >= 1")
        if self.max_iters < 0:
            raise MarketError("max_iters must be >= 0")
        if not self.tol > 0:
            raise MarketError("tol must be > 0")
        if not 0 < self.backtrack < 1 or not 0 < self.armijo_c < 1:
            raise MarketError("backtracking parameters must lie in (0, 1)")
        if self.rounding not in ROUNDING_RULES:
            raise MarketError(f"rounding must be one of {ROUNDING_RULES}, got {self.rounding!r}")


def feasible_matchings(ctx: MarketContext) -> np.ndarray:
    """All injective job->worker maps that respect availability and keep every u >= 0.

    Row ``k`` holds the worker chosen for each job. Rows come in lexicographic
    order, which is also descending lexicographic order of the flattened
    binary matrices.
    """
    J, W = ctx.n_jobs, ctx.n_workers
    if J > MAX_ENUM_JOBS or W > MAX_ENUM_WORKERS:
        raise InstanceTooLarge(
            f"{J} jobs x {W} workers exceeds the enumeration limit "
            f"({MAX_ENUM_JOBS} jobs, {MAX_ENUM_WORKERS} workers)"
        )
    avail = np.flatnonzero(ctx.avail)
    if J > avail.size:
        raise NoFeasibleAssignment(f"{J} jobs but only {avail.size} available workers")
    cands = np.array(list(permutations(avail.tolist(), J)), dtype=np.intp).reshape(-1, J)
    if J:
        ok = np.all(ctx.w[np.arange(J), cands] >= 0, axis=1)
        cands = cands[ok]
    return cands


def _candidate_utilities(ctx: MarketContext, cands: np.ndarray) -> np.ndarray:
    K, J = cands.shape
    u = np.zeros((K, ctx.n_workers))
    if J:
        u[np.arange(K)[:, None], cands] = ctx.w[np.arange(J), cands]
    return u


def _assignment(state, ctx, chosen) -> Assignment:
    m = np.zeros((ctx.n_jobs, ctx.n_workers), dtype=np.int8)
    m[np.arange(ctx.n_jobs), chosen] = 1
    u = np.zeros(ctx.n_workers)
    u[chosen] = ctx.w[np.arange(ctx.n_jobs), chosen]
    return Assignment(m, u)


def solve_exact(state: MarketState, batch: Batch, cfg: ObjectiveConfig) -> SolveResult:
    """Minimise the natural objective over every feasible binary matching.

    Candidates are screened with the vectorised evaluator; those within
    rounding distance of the screened minimum are re-evaluated with the exact
    reporting objective, and the smallest wins. Ties go to the candidate whose
    flattened matching matrix is lexicographically largest (earliest job gets
    the lowest-index worker). Candidates whose fairness terms are undefined
    (for instance a zero return rate under an entropy index) are skipped.
    """
    t0 = time.perf_counter()
    ctx = MarketContext(state, batch)
    cands = feasible_matchings(ctx)
    if cands.shape[0] == 0:
        raise NoFeasibleAssignment("every matching forces some worker below zero utility")

    engine = RelaxedObjective(state, batch, cfg, smoothing=0.0, clamp=None, ctx=ctx)
    u = _candidate_utilities(ctx, cands)
    screen, _ = engine.fairness(ctx.rates(u))
    if cfg.gamma3 and ctx.n_jobs:
        screen = screen + cfg.gamma3 * ctx.d[np.arange(ctx.n_jobs), cands].sum(-1)
    finite = np.isfinite(screen)
    if not finite.any():
        raise NoFeasibleAssignment("the objective is undefined for every feasible matching")
    vmin = screen[finite].min()
    near = np.flatnonzero(finite & (screen <= vmin + 1e-9 * max(1.0, abs(vmin))))

    best, best_val = None, None
    for k in near:
        a = _assignment(state, ctx, cands[k])
        try:
            v = natural_objective(state, batch, a, cfg, check=False, ctx=ctx)
        except MetricError:
            continue
        if best_val is None or v < best_val:
            best, best_val = a, v
    if best is None:
        raise NoFeasibleAssignment("the objective is undefined for every feasible matching")
    diag = {"candidates": int(cands.shape[0]), "refined": int(near.size), "wall_time": time.perf_counter() - t0}
    return SolveResult(best, float(best_val), "enumeration", diag)


def round_to_matching(point: ContinuousPoint, batch: Batch, state: MarketState) -> Assignment:
    """Feasible binary matching with the largest inner product against ``point.M``.

    Utilities are recomputed from the matching; pairs with p < d are never used.
    """
    ctx = MarketContext(state, batch)
    cands = feasible_matchings(ctx)
    if cands.shape[0] == 0:
        raise NoFeasibleRounding("no feasible matching to round to")
    if ctx.n_jobs == 0:
        return _assignment(state, ctx, cands[0])
    score = np.zeros(cands.shape[0])
    for i in range(ctx.n_jobs):
        score += point.M[i, cands[:, i]]
    return _assignment(state, ctx, cands[int(np.argmax(score))])


def _round_restarts(state, batch, cfg, ctx, M, u):
    """Round every restart's end point two ways and keep the best matching.

    Each restart proposes the feasible matching with the largest inner
    product against its ``M`` and the one whose utilities are nearest its
    ``u``. Proposals are scored with the exact objective; ties go to the
    earliest proposal.
    """
    cands = feasible_matchings(ctx)
    if cands.shape[0] == 0:
        raise NoFeasibleRounding("no feasible matching to round to")
    J = ctx.n_jobs
    score = M[:, np.arange(J)[None, :], cands].sum(-1) if J else np.zeros((M.shape[0], cands.shape[0]))
    uc = _candidate_utilities(ctx, cands)
    dist = ((uc[None, :, :] - u[:, None, :]) ** 2 * ctx.avail_f).sum(-1)
    picks = np.stack([score.argmax(1), dist.argmin(1)], axis=1).ravel()
    best, best_val = None, None
    for k in dict.fromkeys(picks.tolist()):
        a = _assignment(state, ctx, cands[k])
        try:
            v = natural_objective(state, batch, a, cfg, check=False, ctx=ctx)
        except MetricError:
            continue
        if best_val is None or v < best_val:
            best, best_val = a, v
    if best is None:
        raise NoFeasibleRounding("the objective is undefined at every rounded matching")
    return best, float(best_val), len(dict.fromkeys(picks.tolist()))


def _initial_points(ctx: MarketContext, restarts: int, rng: np.random.Generator):
    J, W = ctx.n_jobs, ctx.n_workers
    M = np.empty((restarts, J, W))
    M[0] = 1.0 / W
    if restarts > 1:
        M[1:] = rng.uniform(0.0, 1.0, size=(restarts - 1, J, W))
    u = np.einsum("kij,ij->kj", M, ctx.w)
    return project_point(M, u, ctx.avail_f)


def _dot(aM, au, bM, bu):
    return (aM * bM).sum((-1, -2)) + (au * bu).sum(-1)


def solve_auglag(
    state: MarketState,
    batch: Batch,
    cfg: ObjectiveConfig,
    pen: PenaltyConfig | None = None,
    settings: AugLagSettings | None = None,
    init: ContinuousPoint | None = None,
) -> SolveResult:
    """Multi-start projected-gradient descent on the smoothed augmented Lagrangian, then rounding.

    All restarts advance together as one stacked array; each keeps its own
    step size and Armijo backtracking, so every restart's objective is
    non-increasing. With the default ``settings.rounding == "candidates"``
    every restart's end point is rounded both by inner product with ``M``
    and by nearest utilities to ``u``, and the proposal with the best exact
    objective wins. With ``"inner-product"`` only the restart with the
    smallest final objective (lowest index on ties) is rounded, by
    :func:`round_to_matching`.
    ``init`` replaces the starting point of restart 0.
    """
    pen = pen if pen is not None else PenaltyConfig()
    s = settings if settings is not None else AugLagSettings()
    t0 = time.perf_counter()
    ctx = MarketContext(state, batch)
    obj = RelaxedObjective(state, batch, cfg, pen, smoothing=s.smoothing, clamp=s.clamp, ctx=ctx)
    rng = np.random.default_rng(s.seed)
    M, u = _initial_points(ctx, s.restarts, rng)
    if init is not None:
        M[0], u[0] = project_point(init.M, init.u, ctx.avail_f)
    cap = ctx.avail_f

    f, gM, gu = obj.value_and_grad(M, u)
    if not np.all(np.isfinite(f)):
        raise DivergedObjective("objective is not finite at the starting points")
    R = s.restarts
    step = np.full(R, float(s.initial_step))
    iters = np.zeros(R, dtype=int)
    status = np.array(["max_iters"] * R, dtype=object)
    traces = [[float(v)] for v in f] if s.record_trace else None

    def pg_norm(idx):
        PM, Pu = project_point(M[idx] - gM[idx], u[idx] - gu[idx], cap)
        return np.sqrt(((PM - M[idx]) ** 2).sum((-1, -2)) + ((Pu - u[idx]) ** 2).sum(-1))

    history = np.full((R, s.patience + 1), np.inf) if s.patience > 0 else None
    if history is not None:
        history[:, 0] = f
    active = np.arange(R)
    done = pg_norm(active) < s.tol
    status[active[done]] = "converged"
    active = active[~done]

    for _ in range(s.max_iters):
        if active.size == 0:
            break
        pend, alpha = active.copy(), step[active].copy()
        accepted, first_try, moves = [], True, []
        for _bt in range(s.max_backtracks):
            if pend.size == 0:
                break
            Mn, un = project_point(M[pend] - alpha[:, None, None] * gM[pend], u[pend] - alpha[:, None] * gu[pend], cap)
            dM, du = Mn - M[pend], un - u[pend]
            fn = obj.value(Mn, un)
            dec = _dot(gM[pend], gu[pend], dM, du)
            ok = np.isfinite(fn) & (fn <= f[pend] + s.armijo_c * np.minimum(dec, 0.0))
            if ok.any():
                idx = pend[ok]
                M[idx], u[idx], f[idx] = Mn[ok], un[ok], fn[ok]
                # gradient mapping norm at the accepted step
                moves.append(np.sqrt(_dot(dM[ok], du[ok], dM[ok], du[ok])) / alpha[ok])
                step[idx] = np.minimum(alpha[ok] / s.backtrack, s.max_step) if first_try else alpha[ok]
                accepted.append(idx)
            pend, alpha = pend[~ok], alpha[~ok] * s.backtrack
            first_try = False
        if pend.size:
            status[pend] = "stalled"
        if not accepted:
            break
        order = np.argsort(np.concatenate(accepted))
        acc = np.concatenate(accepted)[order]
        gmap = np.concatenate(moves)[order]
        iters[acc] += 1
        fa, gM[acc], gu[acc] = obj.value_and_grad(M[acc], u[acc])
        if not np.all(np.isfinite(fa)):
            raise DivergedObjective("objective became non-finite during descent")
        f[acc] = fa
        if traces is not None:
            for k in acc:
                traces[k].append(float(f[k]))
        stop = gmap < s.tol
        status[acc[stop]] = "converged"
        if history is not None:
            history[acc] = np.roll(history[acc], 1, axis=1)
            history[acc, 0] = fa
            stag = ~stop & (history[acc, -1] - fa <= s.ftol * (1.0 + np.abs(fa)))
            status[acc[stag]] = "stagnated"
            stop |= stag
        active = acc[~stop]

    best = int(np.argmin(f))
    point = ContinuousPoint(np.clip(M[best], 0.0, None), np.clip(u[best], 0.0, None))
    if s.rounding == "candidates":
        assignment, value, n_rounded = _round_restarts(state, batch, cfg, ctx, M, u)
    else:
        assignment, n_rounded = round_to_matching(point, batch, state), 1
        value = natural_objective(state, batch, assignment, cfg, check=False, ctx=ctx)

    e = np.einsum("ij,ij->j", point.M, ctx.w) - point.u
    diag = {
        "restarts": R,
        "best_restart": best,
        "iterations": iters.tolist(),
        "status": status.tolist(),
        "relaxation_value": float(f[best]),
        "restart_values": f.tolist(),
        "projected_gradient_norm": float(pg_norm(np.array([best]))[0]),
        "utility_residual_norm": float(np.linalg.norm(e * ctx.avail_f)),
        "job_residual_norm": float(np.linalg.norm(point.M.sum(1) - 1.0)),
        "integrality_residual_max": float(np.abs(point.M * (point.M - 1.0)).max(initial=0.0)),
        "continuous_point": point,
        "rounding_candidates": n_rounded,
        "wall_time": time.perf_counter() - t0,
    }
    if traces is not None:
        diag["traces"] = traces
    return SolveResult(assignment, float(value), "auglag", diag)
