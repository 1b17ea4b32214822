"""Vectorized brute-force evaluators used as lower-bound oracles."""

from __future__ import annotations

import numpy as np

from onoff.model import SystemInstance


def served_per_cycle(lam, mu, theta, L, L_bar):
    """Customers served per cycle, evaluated from the flow balance of each
    outcome type: everybody who joins is served."""
    L = np.asarray(L, dtype=float)
    L_bar = np.asarray(L_bar, dtype=float)
    if mu <= lam:
        return mu * L
    post = np.maximum.reduce([L - lam * theta / (mu - lam), L - lam * L_bar / (mu - lam), np.zeros_like(L)])
    return mu * (L - post) + lam * post


def two_queue_grid(inst: SystemInstance, size: int = 200, objective: str = "throughput"):
    """Best objective over a ``size x size`` geometric grid of on durations."""
    S = inst.total_switchover
    hi = 50.0 * (S + inst.theta.max())
    axis = np.geomspace(1e-3 * S, hi, size)
    L1, L2 = np.meshgrid(axis, axis, indexing="ij")
    cycle = S + L1 + L2
    w = inst.reward if objective == "reward" else np.ones(2)
    q1, q2 = inst.queues
    value = (
        w[0] * served_per_cycle(q1.lam, q1.mu, q1.theta, L1, cycle - L1)
        + w[1] * served_per_cycle(q2.lam, q2.mu, q2.theta, L2, cycle - L2)
    ) / cycle
    k = np.unravel_index(np.argmax(value), value.shape)
    return float(value[k]), (float(L1[k]), float(L2[k]))
