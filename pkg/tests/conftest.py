import numpy as np
import pytest

from fairmarket.market import Batch, MarketState, WorkerState

FIVE_LABELS = ("m", "m", "f", "m", "f")


def five_worker_instance(seed, n_jobs=5):
    """Fresh 5-worker market, workers 2 and 4 female, trip-like payments above 0.5, d ~ U[0, 0.5]."""
    rng = np.random.default_rng(seed)
    payments = 0.5 + np.exp(rng.normal(np.log(1.7), 0.8, n_jobs))
    d = rng.uniform(0.0, 0.5, size=(n_jobs, 5))
    return MarketState.new(FIVE_LABELS), Batch(payments, d)


def random_instance(seed, n_jobs=None, n_workers=None, history=True, p_unavailable=0.0):
    """Market with optional accumulated history and unavailable workers."""
    rng = np.random.default_rng(seed)
    W = n_workers or int(rng.integers(2, 6))
    J = n_jobs if n_jobs is not None else int(rng.integers(1, W + 1))
    avail = rng.random(W) >= p_unavailable
    if avail.sum() < J:
        avail[rng.permutation(W)[:J]] = True
    labels = ["f" if k % 2 else "m" for k in range(W)]
    workers = []
    for j in range(W):
        L = int(rng.integers(1, 6)) if history else 0
        U = float(rng.uniform(0.5, 3.0) * L) if L else 0.0
        workers.append(WorkerState(j, labels[j], bool(avail[j]), U, L))
    payments = rng.uniform(0.6, 6.0, J)
    d = rng.uniform(0.0, 0.5, (J, W))
    d[:, ~avail] = np.nan
    return MarketState(tuple(workers)), Batch(payments, d)


def as_lists(state, batch):
    """Plain-Python view of an instance for the oracles."""
    p = [float(x) for x in batch.payments]
    d = [[float(x) for x in row] for row in batch.suitability]
    A = [int(w.available) for w in state.workers]
    U = [w.acc_utility for w in state.workers]
    L = [w.acc_workload for w in state.workers]
    labels = [w.subgroup for w in state.workers]
    return p, d, A, U, L, labels


@pytest.fixture
def five_worker():
    return five_worker_instance(0)
