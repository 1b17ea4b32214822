"""Optimal fixed on/off durations.

The throughput of a cycle-consistent schedule is a ratio of piecewise-linear
functions of the on durations.  Scaling every duration by the inverse cycle
length ``g`` turns the problem into a linear program whose optimal vertex is
mapped back to durations by dividing by ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exogenous import (
    OnOffSchedule,
    _objective_weights,
    classify_exogenous,
    exogenous_throughput,
    post_clearance_duration,
)
from .model import InvalidInstanceError, QueueParams, SystemInstance
from .simplex import LpError, simplex_max

G_TOL = 1e-12


@dataclass(frozen=True)
class LpProblem:
    """A linear program in ``max c @ v, A_ub v <= b_ub, A_eq v == b_eq, v >= 0`` form."""

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    n_queues: int
    stable: tuple[int, ...]  # queues that own a post-clearance variable
    names: tuple[str, ...]

    @property
    def n_variables(self) -> int:
        return self.c.size

    @property
    def n_constraints(self) -> int:
        """Constraint families written out for the program: y >= 0, the two
        lower bounds on y, and the two equality families."""
        return 3 * len(self.stable) + 2 * self.n_queues

    def slices(self) -> tuple[slice, slice, slice, int]:
        n, s = self.n_queues, len(self.stable)
        return slice(0, n), slice(n, 2 * n), slice(2 * n, 2 * n + s), 2 * n + s


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray
    x_bar: np.ndarray
    y: np.ndarray  # full length n; zero for queues without a y variable
    g: float
    objective: float
    iterations: int = 0


@dataclass(frozen=True)
class SingleQueueConstraints:
    L_max: float
    beta: float

    def __post_init__(self) -> None:
        if not self.L_max > 0:
            raise InvalidInstanceError("L_max must be > 0")
        if not self.beta > 0:
            raise InvalidInstanceError("beta must be > 0")


@dataclass(frozen=True)
class ExoSchedulePlan:
    schedules: tuple[OnOffSchedule, ...]
    T: np.ndarray
    objective: float
    patterns: tuple[str, ...]


def build_lp(inst: SystemInstance, objective: str = "throughput") -> LpProblem:
    if inst.n < 2:
        raise InvalidInstanceError("a single queue has no cycle constraint; use optimize_single_queue")
    weights = _objective_weights(inst, objective)
    n = inst.n
    lam, mu, theta = inst.lam, inst.mu, inst.theta
    stable = tuple(i for i in range(n) if lam[i] < mu[i])
    s = len(stable)
    nv = 2 * n + s + 1
    ix, ig = slice(0, n), 2 * n + s

    c = np.zeros(nv)
    c[ix] = mu * weights
    for k, i in enumerate(stable):
        c[2 * n + k] = -(mu[i] - lam[i]) * weights[i]

    ub_rows, ub_rhs = [], []
    for k, i in enumerate(stable):
        # x_i - y_i - (lam theta / (mu - lam)) g <= 0
        row = np.zeros(nv)
        row[i] = 1.0
        row[2 * n + k] = -1.0
        row[ig] = -lam[i] * theta[i] / (mu[i] - lam[i])
        ub_rows.append(row)
        ub_rhs.append(0.0)
        # x_i - y_i - (lam / (mu - lam)) x_bar_i <= 0
        row = np.zeros(nv)
        row[i] = 1.0
        row[2 * n + k] = -1.0
        row[n + i] = -lam[i] / (mu[i] - lam[i])
        ub_rows.append(row)
        ub_rhs.append(0.0)

    eq_rows, eq_rhs = [], []
    for i in range(n):
        row = np.zeros(nv)
        row[i] = 1.0
        row[n + i] = 1.0
        eq_rows.append(row)
        eq_rhs.append(1.0)
    for i in range(n):
        # x_bar_i - sum_{j != i} x_j - (sum tau) g = 0
        row = np.zeros(nv)
        row[n + i] = 1.0
        row[ix] -= 1.0
        row[i] += 1.0
        row[ig] = -inst.total_switchover
        eq_rows.append(row)
        eq_rhs.append(0.0)

    names = (
        tuple(f"x{i + 1}" for i in range(n))
        + tuple(f"x_bar{i + 1}" for i in range(n))
        + tuple(f"y{i + 1}" for i in stable)
        + ("g",)
    )
    return LpProblem(
        c=c,
        A_ub=np.array(ub_rows).reshape(-1, nv),
        b_ub=np.array(ub_rhs),
        A_eq=np.array(eq_rows),
        b_eq=np.array(eq_rhs),
        n_queues=n,
        stable=stable,
        names=names,
    )


def solve_lp(lp: LpProblem) -> LpSolution:
    try:
        res = simplex_max(lp.c, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq)
    except LpError as exc:
        raise LpError(f"internal error: schedule program failed ({exc})") from exc
    ix, ixb, iy, ig = lp.slices()
    y = np.zeros(lp.n_queues)
    y[list(lp.stable)] = res.x[iy]
    return LpSolution(
        x=res.x[ix].copy(),
        x_bar=res.x[ixb].copy(),
        y=y,
        g=float(res.x[ig]),
        objective=res.objective,
        iterations=res.iterations,
    )


def recover_schedule(sol: LpSolution) -> tuple[list[OnOffSchedule], np.ndarray]:
    if sol.g <= G_TOL:
        raise LpError(f"optimal inverse cycle length {sol.g} is degenerate (cycle length unbounded)")
    L = sol.x / sol.g
    L_bar = sol.x_bar / sol.g
    T = sol.y / sol.g
    return [OnOffSchedule(a, b) for a, b in zip(L, L_bar)], T


def optimize_schedule(inst: SystemInstance, objective: str = "throughput") -> ExoSchedulePlan:
    """Build, solve and decode the schedule program in one call."""
    sol = solve_lp(build_lp(inst, objective))
    schedules, T = recover_schedule(sol)
    patterns = tuple(classify_exogenous(q, s).pattern for q, s in zip(inst.queues, schedules))
    return ExoSchedulePlan(tuple(schedules), T, sol.objective, patterns)


def optimize_single_queue(
    params: QueueParams, cons: SingleQueueConstraints
) -> tuple[OnOffSchedule, float, float]:
    """Best schedule for one queue with a work limit and a minimum off/on ratio."""
    lam, mu = params.lam, params.mu
    if lam >= mu:
        raise InvalidInstanceError("single-queue optimum requires lambda < mu")
    L = min(lam * params.theta / (mu - lam), cons.L_max)
    L_bar = cons.beta * L
    sched = OnOffSchedule(L, L_bar)
    if cons.beta > (mu - lam) / lam:
        return sched, 0.0, mu / (1.0 + cons.beta)
    T = L - lam * L_bar / (mu - lam)
    return sched, T, lam


def single_queue_throughput(params: QueueParams, sched: OnOffSchedule) -> float:
    """Served rate of a lone queue whose off period is a free vacation."""
    T = post_clearance_duration(params, sched)
    return (params.mu * (sched.on_duration - T) + params.lam * T) / sched.cycle


__all__ = [
    "LpProblem",
    "LpSolution",
    "SingleQueueConstraints",
    "ExoSchedulePlan",
    "build_lp",
    "solve_lp",
    "recover_schedule",
    "optimize_schedule",
    "optimize_single_queue",
    "single_queue_throughput",
    "exogenous_throughput",
]
