"""Euclidean projection onto the feasible box of the relaxed matching problem."""
import numpy as np


def project_capped_simplex(X, caps):
    """Project each row of ``X`` onto ``{y : 0 <= y <= 1, sum(y) <= cap}``.

    ``X`` has shape ``(..., n)`` and ``caps`` broadcasts against ``X.shape[:-1]``.
    The projection is ``clip(x - tau, 0, 1)`` where ``tau >= 0`` is the
    smallest shift meeting the cap; ``tau`` is found exactly from the
    breakpoints of the piecewise-linear row sum.
    """
    X = np.asarray(X, dtype=float)
    Y = np.clip(X, 0.0, 1.0)
    over = Y.sum(-1) > caps
    if not over.any():
        return Y
    Xo = X[over]
    co = np.broadcast_to(np.asarray(caps, dtype=float), X.shape[:-1])[over]
    B = np.sort(np.concatenate([Xo, Xo - 1.0], axis=-1), axis=-1)
    G = np.clip(Xo[:, None, :] - B[:, :, None], 0.0, 1.0).sum(-1)
    k = np.argmax(G <= co[:, None], axis=-1)
    rows = np.arange(Xo.shape[0])
    b0, b1 = B[rows, k - 1], B[rows, k]
    g0, g1 = G[rows, k - 1], G[rows, k]
    tau = b0 + (g0 - co) * (b1 - b0) / (g0 - g1)
    P = np.clip(Xo - tau[:, None], 0.0, 1.0)
    P[co <= 0] = 0.0
    Y[over] = P
    return Y


def project_point(M, u, availability):
    """Project stacked points onto ``{0 <= M <= 1, sum_i M[i, j] <= A_j, u >= 0}``."""
    Mt = np.swapaxes(np.asarray(M, dtype=float), -1, -2)
    P = project_capped_simplex(Mt, np.asarray(availability, dtype=float))
    return np.swapaxes(P, -1, -2), np.maximum(np.asarray(u, dtype=float), 0.0)
