"""Scalar market-clearing objectives.

Three objectives are provided:

* :func:`natural_objective` -- the weighted Intra/Inter/Customer-Care objective
  of a binary assignment, evaluated on post-step return rates;
* :func:`augmented_lagrangian` -- its continuous relaxation with squared
  constraint violations and the integrality term ``M(M - 1)`` moved into the
  objective;
* :func:`full_lagrangian` -- the above plus linear multiplier terms.

These are *reporting* evaluators: exact absolute values, no clamping, all sums
correctly rounded. The optimizer uses :class:`RelaxedObjective`, a vectorised
engine that evaluates many points at once, smooths absolute values as
``sqrt(x**2 + delta**2)`` and floors rates at ``clamp`` inside logs, powers and
ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import metrics
from .errors import MarketError, NonDifferentiablePoint, ShapeMismatch
from .market import Assignment, Batch, MarketState, check_assignment
from .metrics import InterKind, IntraKind

__all__ = [
    "ObjectiveConfig",
    "PenaltyConfig",
    "MultiplierConfig",
    "ContinuousPoint",
    "MarketContext",
    "RelaxedObjective",
    "natural_objective",
    "fairness_terms",
    "augmented_lagrangian",
    "full_lagrangian",
    "smoothed_augmented_lagrangian",
    "gradient",
    "DEFAULT_SMOOTHING",
    "DEFAULT_CLAMP",
]

DEFAULT_SMOOTHING = 1e-8
DEFAULT_CLAMP = 1e-9


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights on Intra-fairness, Inter-fairness and Customer-Care, and the measures used.

    All-zero weights are accepted: the relaxation then reduces to its penalty terms.
    """

    gamma1: float = 0.5
    gamma2: float = 0.5
    gamma3: float = 0.0
    intra: IntraKind = IntraKind.LINEARISED
    inter: InterKind = InterKind.INTER3
    alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "intra", IntraKind(self.intra))
        object.__setattr__(self, "inter", InterKind(self.inter))
        for name in ("gamma1", "gamma2", "gamma3"):
            g = getattr(self, name)
            if not (math.isfinite(g) and g >= 0):
                raise MarketError(f"{name} must be finite and >= 0, got {g!r}")
        if self.intra is IntraKind.GE_ALPHA and self.gamma1 > 0:
            a = self.alpha
            if a is None or not math.isfinite(a) or a in (0.0, 1.0):
                raise MarketError("GE(alpha) needs a finite alpha outside {0, 1}")

    @property
    def label(self) -> str:
        parts = []
        if self.gamma1:
            parts.append(f"{self.gamma1:g}*{self.intra.value}")
        if self.gamma2:
            parts.append(f"{self.gamma2:g}*inter{self.inter.value}")
        if self.gamma3:
            parts.append(f"{self.gamma3:g}*care")
        return " + ".join(parts) or "penalties-only"


def _nonneg(name, value):
    a = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise MarketError(f"{name} must be finite and >= 0")
    return value


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty multipliers. Scalars are broadcast; arrays are per worker (phi1, phi2),
    per job (phi3) or per job/worker pair (phi4)."""

    phi1: object = 10.0
    phi2: object = 10.0
    phi3: object = 10.0
    phi4: object = 10.0

    def __post_init__(self):
        for name in ("phi1", "phi2", "phi3", "phi4"):
            _nonneg(name, getattr(self, name))

    @classmethod
    def uniform(cls, phi: float) -> "PenaltyConfig":
        return cls(phi, phi, phi, phi)

    def arrays(self, n_jobs: int, n_workers: int):
        try:
            return (
                np.broadcast_to(np.asarray(self.phi1, float), (n_workers,)),
                np.broadcast_to(np.asarray(self.phi2, float), (n_workers,)),
                np.broadcast_to(np.asarray(self.phi3, float), (n_jobs,)),
                np.broadcast_to(np.asarray(self.phi4, float), (n_jobs, n_workers)),
            )
        except ValueError as exc:
            raise ShapeMismatch(f"penalty multipliers do not fit a {n_jobs}x{n_workers} batch") from exc


@dataclass(frozen=True)
class MultiplierConfig:
    """Lagrange multipliers of the full relaxation; ``lambda4`` must be non-negative."""

    lambda1: object = 0.0
    lambda2: object = 0.0
    lambda3: object = 0.0
    lambda4: object = 0.0

    def __post_init__(self):
        _nonneg("lambda4", self.lambda4)

    def arrays(self, n_jobs: int, n_workers: int):
        try:
            return (
                np.broadcast_to(np.asarray(self.lambda1, float), (n_workers,)),
                np.broadcast_to(np.asarray(self.lambda2, float), (n_workers,)),
                np.broadcast_to(np.asarray(self.lambda3, float), (n_jobs,)),
                np.broadcast_to(np.asarray(self.lambda4, float), (n_workers,)),
            )
        except ValueError as exc:
            raise ShapeMismatch(f"multipliers do not fit a {n_jobs}x{n_workers} batch") from exc


@dataclass(frozen=True, eq=False)
class ContinuousPoint:
    M: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        u = np.array(self.u, dtype=float)
        if M.ndim != 2 or u.ndim != 1 or M.shape[1] != u.shape[0]:
            raise ShapeMismatch(f"incompatible point shapes {M.shape} and {u.shape}")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(u))):
            raise MarketError("point entries must be finite")
        if np.any(M < 0) or np.any(u < 0):
            raise MarketError("point must satisfy M >= 0 and u >= 0")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "u", u)

    @classmethod
    def from_assignment(cls, assignment: Assignment) -> "ContinuousPoint":
        return cls(assignment.matching.astype(float), np.maximum(assignment.utilities, 0.0))


class MarketContext:
    """Arrays derived once from a market state and a batch.

    Fairness is measured on post-step return rates
    ``(U_prev + u) / (Λ_prev + A)`` of the workers whose post-step workload is
    positive (``included``); the others have no defined return rate.
    """

    def __init__(self, state: MarketState, batch: Batch):
        state.check_batch(batch)
        self.state = state
        self.batch = batch
        self.n_jobs = batch.n_jobs
        self.n_workers = state.n_workers
        self.avail = state.availability
        self.avail_f = self.avail.astype(float)
        self.U_prev = state.acc_utility
        self.workload = state.acc_workload + self.avail_f
        self.included = np.flatnonzero(self.workload > 0)
        self.labels = tuple(state.labels[j] for j in self.included)
        self.groups = tuple(dict.fromkeys(self.labels))
        self.group_index = np.array([self.groups.index(s) for s in self.labels], dtype=int)
        self.prev_max = metrics.previous_max(state.workers)
        d = np.where(self.avail[None, :], batch.suitability, 0.0)
        self.d = np.nan_to_num(d, nan=0.0)
        self.w = np.where(self.avail[None, :], batch.payments[:, None] - self.d, 0.0)

    def rates(self, u) -> np.ndarray:
        """Post-step return rates of the included workers for utility vector(s) ``u``."""
        u = np.asarray(u, dtype=float)
        inc = self.included
        return (self.U_prev[inc] + u[..., inc]) / self.workload[inc]

    def profile(self, u) -> metrics.ReturnRateProfile:
        if self.included.size == 0:
            raise metrics.AllWorkersExcluded("no worker has positive post-step workload")
        return metrics.ReturnRateProfile(tuple(self.rates(u)), tuple(int(j) for j in self.included))


def fairness_terms(ctx: MarketContext, u, cfg: ObjectiveConfig) -> tuple[float, float]:
    """Exact ``(Intra, Inter)`` values for post-step utilities ``u``; zero-weight terms are skipped (0.0)."""
    intra_v = inter_v = 0.0
    if cfg.gamma1 == 0 and cfg.gamma2 == 0:
        return intra_v, inter_v
    profile = ctx.profile(u)
    if cfg.gamma1:
        intra_v = metrics.intra(profile, cfg.intra, prev_max=ctx.prev_max, alpha=cfg.alpha)
    if cfg.gamma2:
        part = metrics.SubgroupPartition(profile, ctx.labels)
        inter_v = metrics.inter(part, cfg.inter)
    return intra_v, inter_v


def _weighted_fairness(ctx, u, cfg) -> float:
    intra_v, inter_v = fairness_terms(ctx, u, cfg)
    return cfg.gamma1 * intra_v + cfg.gamma2 * inter_v


def natural_objective(
    state: MarketState,
    batch: Batch,
    assignment: Assignment,
    cfg: ObjectiveConfig,
    *,
    check: bool = True,
    ctx: MarketContext | None = None,
) -> float:
    """γ1·Intra + γ2·Inter − γ3·CustomerCare of a binary assignment."""
    if check:
        check_assignment(state, batch, assignment)
    ctx = ctx or MarketContext(state, batch)
    value = _weighted_fairness(ctx, assignment.utilities, cfg)
    if cfg.gamma3:
        rows, cols = np.nonzero(assignment.matching)
        care = -math.fsum(float(ctx.d[i, j]) for i, j in zip(rows, cols) if ctx.avail[j])
        value -= cfg.gamma3 * care
    return value


def _penalty_terms(ctx: MarketContext, point: ContinuousPoint, cfg: ObjectiveConfig, pen: PenaltyConfig):
    if point.M.shape != (ctx.n_jobs, ctx.n_workers):
        raise ShapeMismatch(f"point M has shape {point.M.shape}, batch is {(ctx.n_jobs, ctx.n_workers)}")
    phi1, phi2, phi3, phi4 = pen.arrays(ctx.n_jobs, ctx.n_workers)
    M, u = point.M, point.u
    J, W = M.shape
    terms = []
    if cfg.gamma3:
        terms.extend(cfg.gamma3 * M[i, j] * ctx.d[i, j] for i in range(J) for j in range(W) if ctx.avail[j])
    for j in range(W):
        if ctx.avail[j]:
            e = math.fsum(M[i, j] * ctx.w[i, j] for i in range(J)) - u[j]
            terms.append(phi1[j] * e * e)
        else:
            terms.append(phi2[j] * u[j] * u[j])
    for i in range(J):
        r = math.fsum(M[i]) - 1.0
        terms.append(phi3[i] * r * r)
    terms.extend(phi4[i, j] * M[i, j] * (M[i, j] - 1.0) for i in range(J) for j in range(W))
    return terms


def augmented_lagrangian(
    state: MarketState,
    batch: Batch,
    point: ContinuousPoint,
    cfg: ObjectiveConfig,
    pen: PenaltyConfig,
) -> float:
    """Exact (unsmoothed, unclamped) augmented Lagrangian at a box-feasible point.

    Equals :func:`natural_objective` at any binary feasible assignment, whatever ``pen``.
    """
    ctx = MarketContext(state, batch)
    fair = _weighted_fairness(ctx, point.u, cfg)
    return fair + math.fsum(_penalty_terms(ctx, point, cfg, pen))


def full_lagrangian(
    state: MarketState,
    batch: Batch,
    point: ContinuousPoint,
    cfg: ObjectiveConfig,
    pen: PenaltyConfig,
    mult: MultiplierConfig,
) -> float:
    """Augmented Lagrangian plus linear multiplier terms on the four constraint families."""
    ctx = MarketContext(state, batch)
    lam1, lam2, lam3, lam4 = mult.arrays(ctx.n_jobs, ctx.n_workers)
    M, u = point.M, point.u
    J, W = M.shape
    terms = _penalty_terms(ctx, point, cfg, pen)
    for j in range(W):
        col = math.fsum(M[:, j])
        if ctx.avail[j]:
            terms.append(lam1[j] * (math.fsum(M[i, j] * ctx.w[i, j] for i in range(J)) - u[j]))
        else:
            terms.append(lam2[j] * u[j])
        terms.append(lam4[j] * (col - ctx.avail_f[j]))
    for i in range(J):
        terms.append(lam3[i] * (math.fsum(M[i]) - 1.0))
    return _weighted_fairness(ctx, u, cfg) + math.fsum(terms)


# --------------------------------------------------------------------------
# vectorised engine


def _abs(x, delta):
    if delta > 0:
        s = np.sqrt(x * x + delta * delta)
        return s, x / s
    return np.abs(x), np.sign(x)


def _kink_guard(x, delta, want_grad):
    if want_grad and delta == 0 and np.any(x == 0):
        raise NonDifferentiablePoint("absolute value evaluated at its kink with smoothing disabled")


class RelaxedObjective:
    """Vectorised augmented Lagrangian with analytic gradient.

    Points are stacked along leading axes: ``M`` has shape ``(..., J, W)`` and
    ``u`` shape ``(..., W)``. With ``smoothing=0`` and ``clamp=None`` the value
    is the exact objective up to floating-point summation order; invalid
    fairness evaluations (non-positive rates under logs, zero means) come back
    as NaN rather than raising.
    """

    def __init__(
        self,
        state: MarketState,
        batch: Batch,
        cfg: ObjectiveConfig,
        pen: PenaltyConfig | None = None,
        *,
        smoothing: float = DEFAULT_SMOOTHING,
        clamp: float | None = DEFAULT_CLAMP,
        ctx: MarketContext | None = None,
    ):
        if smoothing < 0:
            raise MarketError("smoothing must be >= 0")
        self.ctx = ctx or MarketContext(state, batch)
        self.cfg = cfg
        self.pen = pen if pen is not None else PenaltyConfig(0.0, 0.0, 0.0, 0.0)
        self.delta = float(smoothing)
        self.clamp = clamp
        c = self.ctx
        self.phi1, self.phi2, self.phi3, self.phi4 = self.pen.arrays(c.n_jobs, c.n_workers)
        self._phi1a = self.phi1 * c.avail_f
        self._phi2u = self.phi2 * (1.0 - c.avail_f)
        self._care = cfg.gamma3 * c.d * c.avail_f
        n_groups = len(c.groups)
        gm = np.zeros((c.included.size, n_groups))
        counts = np.bincount(c.group_index, minlength=n_groups) if n_groups else np.zeros(0)
        if n_groups:
            gm[np.arange(c.included.size), c.group_index] = 1.0 / counts[c.group_index]
        self._group_avg = gm
        self._pairs = np.triu_indices(n_groups, 1)
        self._pair_diff = gm[:, self._pairs[0]] - gm[:, self._pairs[1]]
        self._shares = counts / max(c.included.size, 1)

    # fairness on rates -----------------------------------------------------

    def _floor(self, R):
        if self.clamp is None:
            return R, None
        return np.maximum(R, self.clamp), (R > self.clamp).astype(float)

    def intra(self, R, want_grad=False):
        kind, delta, n = self.cfg.intra, self.delta, R.shape[-1]
        if kind is IntraKind.LINEARISED:
            x = self.ctx.prev_max - R
            _kink_guard(x, delta, want_grad)
            s, ds = _abs(x, delta)
            return s.sum(-1), (-ds if want_grad else None)

        Rc, mask = self._floor(R)
        mu = Rc.mean(-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if kind is IntraKind.GINI:
                D = Rc[..., :, None] - Rc[..., None, :]
                off = ~np.eye(n, dtype=bool)
                if want_grad:
                    _kink_guard(D[..., off], delta, True)
                s, ds = _abs(D, delta)
                s = np.where(off, s, 0.0)
                S = s.sum((-1, -2))[..., None]
                val = S / (2.0 * mu * n * n)
                grad = None
                if want_grad:
                    dS = 2.0 * np.where(off, ds, 0.0).sum(-1)
                    grad = dS / (2.0 * mu * n * n) - S / (2.0 * mu * mu * n * n * n)
                out = val[..., 0]
            else:
                x = Rc / mu
                if kind is IntraKind.GE1:
                    xl = x * np.log(x)
                    val = xl.mean(-1, keepdims=True)
                    grad = (np.log(x) - val) / (n * mu) if want_grad else None
                elif kind is IntraKind.GE0:
                    val = -np.log(x).mean(-1, keepdims=True)
                    grad = (1.0 / mu - 1.0 / Rc) / n if want_grad else None
                else:
                    a = self.cfg.alpha
                    xa = x**a
                    val = (xa - 1.0).sum(-1, keepdims=True) / (a * (a - 1.0) * n)
                    grad = (x ** (a - 1.0) - xa.mean(-1, keepdims=True)) / ((a - 1.0) * n * mu) if want_grad else None
                bad = np.any(Rc <= 0, axis=-1, keepdims=True) | (mu <= 0)
                out = np.where(bad, np.nan, val)[..., 0]
        if grad is not None and mask is not None:
            grad = grad * mask
        return out, grad

    def inter(self, R, want_grad=False):
        kind, delta = self.cfg.inter, self.delta
        G = self._group_avg
        n_groups = G.shape[1]
        if n_groups < 2:
            return np.zeros(R.shape[:-1]), (np.zeros_like(R) if want_grad else None)

        if kind is InterKind.INTER3:
            x = R @ self._pair_diff
            _kink_guard(x, delta, want_grad)
            s, ds = _abs(x, delta)
            if n_groups == 2:
                val = s[..., 0]
                grad = ds * self._pair_diff[:, 0] if want_grad else None
                return val, grad
            best = s.argmax(-1)
            val = np.take_along_axis(s, best[..., None], -1)[..., 0]
            grad = None
            if want_grad:
                dsb = np.take_along_axis(ds, best[..., None], -1)
                grad = dsb * np.moveaxis(self._pair_diff[:, best], 0, -1)
            return val, grad

        Rc, mask = self._floor(R)
        n = R.shape[-1]
        nu = self._shares
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = Rc.mean(-1, keepdims=True)
            om = (Rc @ G) / mu
            if kind is InterKind.INTER1:
                val = (nu * om * np.log(om)).sum(-1)
                c = nu * (np.log(om) + 1.0)
            else:
                val = -(nu * np.log(om)).sum(-1)
                c = -nu / om
            bad = np.any(om <= 0, axis=-1) | (mu[..., 0] <= 0)
            val = np.where(bad, np.nan, val)
            grad = None
            if want_grad:
                grad = (c @ G.T) / mu - (c * om).sum(-1, keepdims=True) / (n * mu)
                if mask is not None:
                    grad = grad * mask
        return val, grad

    def fairness(self, R, want_grad=False):
        cfg = self.cfg
        val = np.zeros(R.shape[:-1])
        grad = np.zeros_like(R) if want_grad else None
        if R.shape[-1] == 0:
            return val, grad
        if cfg.gamma1:
            v, g = self.intra(R, want_grad)
            val = val + cfg.gamma1 * v
            if want_grad:
                grad += cfg.gamma1 * g
        if cfg.gamma2:
            v, g = self.inter(R, want_grad)
            val = val + cfg.gamma2 * v
            if want_grad:
                grad += cfg.gamma2 * g
        return val, grad

    # full objective ----------------------------------------------------------

    def value_and_grad(self, M, u, want_grad=True):
        c = self.ctx
        M = np.asarray(M, dtype=float)
        u = np.asarray(u, dtype=float)
        R = c.rates(u)
        fair, gR = self.fairness(R, want_grad)
        e = np.einsum("...ij,ij->...j", M, c.w) - u
        rs = M.sum(-1) - 1.0
        f = (
            fair
            + (self._care * M).sum((-1, -2))
            + (self._phi1a * e * e).sum(-1)
            + (self._phi2u * u * u).sum(-1)
            + (self.phi3 * rs * rs).sum(-1)
            + (self.phi4 * M * (M - 1.0)).sum((-1, -2))
        )
        if not want_grad:
            return f, None, None
        gM = (
            self._care
            + 2.0 * (self._phi1a * e)[..., None, :] * c.w
            + 2.0 * (self.phi3 * rs)[..., :, None]
            + self.phi4 * (2.0 * M - 1.0)
        )
        gu = -2.0 * self._phi1a * e + 2.0 * self._phi2u * u
        if c.included.size:
            gu[..., c.included] += gR / c.workload[c.included]
        return f, gM, gu

    def value(self, M, u):
        return self.value_and_grad(M, u, want_grad=False)[0]


def smoothed_augmented_lagrangian(
    state, batch, point: ContinuousPoint, cfg, pen, smoothing: float = DEFAULT_SMOOTHING, clamp=DEFAULT_CLAMP
) -> float:
    """The objective the gradient-based solver actually minimises."""
    return float(RelaxedObjective(state, batch, cfg, pen, smoothing=smoothing, clamp=clamp).value(point.M, point.u))


def gradient(
    state, batch, point: ContinuousPoint, cfg, pen, smoothing: float = DEFAULT_SMOOTHING, clamp=DEFAULT_CLAMP
):
    """Analytic gradient ``(dM, du)`` of :func:`smoothed_augmented_lagrangian`.

    With ``smoothing=0`` the exact subgradient is returned away from kinks;
    at a kink :class:`NonDifferentiablePoint` is raised.
    """
    obj = RelaxedObjective(state, batch, cfg, pen, smoothing=smoothing, clamp=clamp)
    _, gM, gu = obj.value_and_grad(point.M, point.u)
    return gM, gu
