"""Random instance generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from onoff.exogenous import OnOffSchedule, classify_exogenous
from onoff.model import QueueParams, SystemInstance

FOUR_QUEUE_RATES = dict(lam=[1.0, 1.2, 0.4, 0.2], mu=[5.0, 3.0, 2.0, 4.0])
FOUR_QUEUE_THETA0 = np.array([3.5, 0.5, 2.5, 2.0])
FOUR_QUEUE_SWITCHOVER = 1.5


def four_queue(scale: float) -> SystemInstance:
    return SystemInstance.from_arrays(FOUR_QUEUE_RATES["lam"], FOUR_QUEUE_RATES["mu"], scale * FOUR_QUEUE_THETA0, FOUR_QUEUE_SWITCHOVER)


def stable_instance(rng: np.random.Generator, n: int | None = None, max_n: int = 8) -> SystemInstance:
    """Every queue has rho < 1; total load may exceed one."""
    if n is None:
        n = int(rng.integers(1, max_n + 1))
    lam = rng.uniform(0.2, 2.0, n)
    rho = rng.uniform(0.03, 0.95, n) * rng.choice([1.0, 1.0 / n], n)
    mu = lam / rho
    theta = rng.uniform(0.2, 6.0, n)
    S = rng.uniform(0.2, 3.0)
    tau = rng.dirichlet(np.ones(n)) * S
    return SystemInstance.from_arrays(lam, mu, theta, float(tau.sum()), tau=tau)


def random_T(rng: np.random.Generator, n: int, scale: float = 2.0) -> np.ndarray:
    T = rng.uniform(0.0, scale, n)
    T[rng.random(n) < 0.4] = 0.0
    return T


def any_instance(rng: np.random.Generator, n: int) -> SystemInstance:
    """Rates drawn independently, so some queues may be overloaded."""
    lam = rng.uniform(0.2, 3.0, n)
    mu = rng.uniform(0.2, 3.0, n)
    theta = rng.uniform(0.2, 8.0, n)
    S = rng.uniform(0.2, 3.0)
    return SystemInstance.from_arrays(lam, mu, theta, S)


def single_queue_case(rng: np.random.Generator, overloaded: bool = False):
    lam = rng.uniform(0.5, 3.0)
    mu = rng.uniform(0.5, 3.0)
    if overloaded and mu > lam:
        lam, mu = mu, lam
    if not overloaded and mu <= lam:
        lam, mu = mu, lam
        if mu == lam:
            mu *= 1.5
    theta = rng.uniform(0.3, 10.0)
    # keep the cycle within a bounded ratio of the shortest duration
    L = rng.uniform(0.2, 5.0)
    L_bar = rng.uniform(0.2, 8.0)
    return QueueParams(lam, mu, 0.0, theta), OnOffSchedule(L, L_bar)


def cases_by_pattern(rng: np.random.Generator, patterns, per_pattern: int, overloaded: bool = False, cap: int = 200_000):
    """Rejection-sample single-queue cases until every pattern has its quota."""
    found = {p: [] for p in patterns}
    for _ in range(cap):
        if all(len(v) >= per_pattern for v in found.values()):
            break
        params, sched = single_queue_case(rng, overloaded)
        pattern = classify_exogenous(params, sched).pattern
        if pattern in found and len(found[pattern]) < per_pattern:
            found[pattern].append((params, sched))
    return found
