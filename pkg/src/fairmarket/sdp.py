"""Shor semidefinite relaxation of the augmented Lagrangian, written in SDPA sparse format.

The relaxed objective is a quadratic ``f(z) = z'Qz + c'z + k`` of the stacked
variable ``z = (M flattened row-major, u)``. Lifting ``Y = [1 z'; z zz']`` and
dropping ``rank Y = 1`` gives

    minimise <C, Y>   s.t.  Y[0, 0] = 1,  linear inequalities on z,  Y >= 0 (PSD)

with ``C = [k c'/2; c/2 Q]``. Each inequality ``a0 + a'z >= 0`` becomes an
equality with a slack in a diagonal (LP) block. The file uses the SDPA dual
convention ``max <F0, Y> s.t. <Fi, Y> = ci``, so ``F0 = -C``.

Only objectives that are exactly quadratic on the feasible box are exported:
the penalty and Customer-Care terms always are; the linearised Intra measure
is when no post-step rate can fall below the previous maximum (so the
absolute value has a fixed sign), e.g. in a fresh market. Everything else
raises :class:`NonQuadraticObjective`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MarketError, NonQuadraticObjective
from .market import Batch, MarketState
from .metrics import IntraKind
from .objective import MarketContext, ObjectiveConfig, PenaltyConfig

__all__ = ["QuadraticForm", "quadratic_form", "export_shor_sdp", "read_sdpa", "SDPAProblem"]


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    Q: np.ndarray
    c: np.ndarray
    k: float
    n_jobs: int
    n_workers: int

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    def __call__(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.Q @ z + self.c @ z + self.k)

    def lifted_cost(self) -> np.ndarray:
        n = self.n_vars
        C = np.zeros((n + 1, n + 1))
        C[0, 0] = self.k
        C[0, 1:] = C[1:, 0] = self.c / 2.0
        C[1:, 1:] = self.Q
        return C


def stack(M, u) -> np.ndarray:
    return np.concatenate([np.asarray(M, float).ravel(), np.asarray(u, float)])


def quadratic_form(state: MarketState, batch: Batch, cfg: ObjectiveConfig, pen: PenaltyConfig) -> QuadraticForm:
    """Assemble the augmented Lagrangian as ``(Q, c, k)`` over ``z = (vec M, u)``."""
    ctx = MarketContext(state, batch)
    J, W = ctx.n_jobs, ctx.n_workers
    n = J * W + W
    Q = np.zeros((n, n))
    c = np.zeros(n)
    k = 0.0

    def mi(i, j):
        return i * W + j

    def ui(j):
        return J * W + j

    if cfg.gamma2 and len(ctx.groups) >= 2:
        raise NonQuadraticObjective(f"Inter measure {cfg.inter.value} is not quadratic in (M, u)")
    if cfg.gamma1:
        if cfg.intra is not IntraKind.LINEARISED:
            raise NonQuadraticObjective(f"Intra measure {cfg.intra.value} is not quadratic in (M, u)")
        inc = ctx.included
        floor_rates = ctx.U_prev[inc] / ctx.workload[inc]
        if inc.size and np.any(floor_rates < ctx.prev_max):
            raise NonQuadraticObjective(
                "linearised Intra measure changes sign on the feasible box "
                "(some post-step rate may fall below the previous maximum)"
            )
        for j, base in zip(inc, floor_rates):
            c[ui(j)] += cfg.gamma1 / ctx.workload[j]
            k += cfg.gamma1 * (base - ctx.prev_max)

    phi1, phi2, phi3, phi4 = pen.arrays(J, W)
    for j in range(W):
        if ctx.avail[j]:
            a = np.zeros(n)
            for i in range(J):
                a[mi(i, j)] = ctx.w[i, j]
            a[ui(j)] = -1.0
            Q += phi1[j] * np.outer(a, a)
        else:
            Q[ui(j), ui(j)] += phi2[j]
    for i in range(J):
        b = np.zeros(n)
        b[[mi(i, j) for j in range(W)]] = 1.0
        Q += phi3[i] * np.outer(b, b)
        c -= 2.0 * phi3[i] * b
        k += phi3[i]
    for i in range(J):
        for j in range(W):
            Q[mi(i, j), mi(i, j)] += phi4[i, j]
            c[mi(i, j)] -= phi4[i, j]
            if cfg.gamma3 and ctx.avail[j]:
                c[mi(i, j)] += cfg.gamma3 * ctx.d[i, j]
    return QuadraticForm(Q, c, float(k), J, W)


def _inequalities(ctx: MarketContext):
    """Rows ``(description, a0, {var: coef})`` meaning ``a0 + sum coef * z[var] >= 0``."""
    J, W = ctx.n_jobs, ctx.n_workers
    rows = []
    for j in range(W):
        rows.append((f"A[{j}] - sum_i M[i,{j}] >= 0", float(ctx.avail_f[j]), {i * W + j: -1.0 for i in range(J)}))
    for i in range(J):
        for j in range(W):
            rows.append((f"M[{i},{j}] >= 0", 0.0, {i * W + j: 1.0}))
    for j in range(W):
        rows.append((f"u[{j}] >= 0", 0.0, {J * W + j: 1.0}))
    return rows


def _fmt(x: float) -> str:
    return repr(float(x))


def export_shor_sdp(state: MarketState, batch: Batch, cfg: ObjectiveConfig, pen: PenaltyConfig, path):
    """Write the Shor relaxation to ``path`` (SDPA sparse) and ``path + '.json'`` (variable map).

    Returns the paths written.
    """
    path = Path(path)
    qf = quadratic_form(state, batch, cfg, pen)
    ctx = MarketContext(state, batch)
    J, W = qf.n_jobs, qf.n_workers
    n = qf.n_vars
    dim = n + 1
    ineqs = _inequalities(ctx)
    m = 1 + len(ineqs)
    C = qf.lifted_cost()

    lines = [
        f'" Shor relaxation of a {J}x{W} market-clearing augmented Lagrangian',
        '" SDPA dual form: maximise <F0,Y> s.t. <Fi,Y> = ci; relaxation value = -(dual value)',
        str(m),
        "2" if ineqs else "1",
        f"{dim} {-len(ineqs)}" if ineqs else f"{dim}",
        " ".join(_fmt(v) for v in [1.0] + [0.0 - a0 for _, a0, _ in ineqs]),
    ]
    for p in range(dim):
        for q in range(p, dim):
            if C[p, q] != 0.0:
                lines.append(f"0 1 {p + 1} {q + 1} {_fmt(-C[p, q])}")
    lines.append("1 1 1 1 1.0")
    for r, (_, _, coefs) in enumerate(ineqs, start=2):
        for v, a in sorted(coefs.items()):
            lines.append(f"{r} 1 1 {v + 2} {_fmt(a / 2.0)}")
        lines.append(f"{r} 2 {r - 1} {r - 1} -1.0")

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
        variables = [
            {"index": i * W + j, "position": i * W + j + 2, "kind": "M", "job": i, "worker": j, "name": f"M[{i},{j}]"}
            for i in range(J)
            for j in range(W)
        ] + [
            {"index": J * W + j, "position": J * W + j + 2, "kind": "u", "worker": j, "name": f"u[{j}]"}
            for j in range(W)
        ]
        sidecar = {
            "format": "sdpa-sparse",
            "convention": "maximise <F0,Y> s.t. <Fi,Y> = ci, Y psd; F0 = -C",
            "psd_block_dim": dim,
            "lp_block_dim": len(ineqs),
            "homogenising_position": 1,
            "n_jobs": J,
            "n_workers": W,
            "objective_constant": qf.k,
            "variables": variables,
            "constraints": ["Y[1,1] = 1"] + [desc for desc, _, _ in ineqs],
        }
        side = path.with_name(path.name + ".json")
        side.write_text(json.dumps(sidecar, indent=2) + "\n")
    except OSError as exc:
        raise MarketError(f"could not write SDP files to {path}: {exc}") from exc
    return path, side


@dataclass(frozen=True, eq=False)
class SDPAProblem:
    m: int
    block_struct: tuple[int, ...]
    c: np.ndarray
    matrices: dict  # matno -> list of dense symmetric blocks (diagonal blocks as full matrices)

    def objective_matrix(self, block: int = 0) -> np.ndarray:
        """Cost matrix ``C = -F0`` of the minimisation form."""
        return -self.matrices[0][block]

    def evaluate(self, z) -> float:
        """``<C, [1 z'; z zz']>``: the encoded quadratic at a point."""
        y = np.concatenate([[1.0], np.asarray(z, dtype=float)])
        return float(y @ self.objective_matrix() @ y)


def read_sdpa(path) -> SDPAProblem:
    """Parse an SDPA sparse file (comments start with ``"`` or ``*``)."""
    tokens_lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line[0] in '"*':
            continue
        tokens_lines.append(line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    m = int(tokens_lines[0].split()[0])
    nblock = int(tokens_lines[1].split()[0])
    struct = tuple(int(float(t)) for t in tokens_lines[2].split()[:nblock])
    c = np.array([float(t) for t in tokens_lines[3].split()[:m]])
    mats = {k: [np.zeros((abs(b), abs(b))) for b in struct] for k in range(m + 1)}
    for line in tokens_lines[4:]:
        t = line.split()
        matno, blk, i, j, v = int(t[0]), int(t[1]) - 1, int(t[2]) - 1, int(t[3]) - 1, float(t[4])
        mats[matno][blk][i, j] = v
        mats[matno][blk][j, i] = v
    return SDPAProblem(m, struct, c, mats)
