"""Equilibrium outcomes of a single queue under fixed on/off durations.

Every queue is analysed in isolation: given the on duration ``L`` and off
duration ``L_bar`` of a cycle, customers join exactly when their waiting time
is below their patience.  The resulting periodic outcome is one of a small
number of patterns (exhaustive or non-exhaustive), each fully described by the
joining span ``J``, the balking span ``J_bar``, the post-clearance time ``T``
and the extreme queue lengths.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .model import InvalidInstanceError, QueueParams, SystemInstance

INTEGER_TOL = 1e-9
# A customer whose service would end exactly as the on period ends is counted
# as missing it.  While nobody joins during an on period the backlog and the
# elapsed time move in lockstep, so this boundary can persist for a whole
# segment and must not be left to rounding.
SKIP_SNAP = 1e-10
# Optimized schedules often sit exactly on a clearing threshold; a relative
# slack keeps rounding from flipping them to the neighbouring pattern.
THRESHOLD_RTOL = 1e-12

EXHAUSTIVE_PATTERNS = frozenset(
    {"EXH_A", "EXH_B", "EXH_C", "EXH_D", "MU_LE_LAMBDA_EXH_A", "MU_LE_LAMBDA_EXH_B"}
)
STABLE_PATTERNS = (
    "EXH_A", "EXH_B", "EXH_C", "EXH_D",
    "NONEXH_1", "NONEXH_2", "NONEXH_3", "NONEXH_4", "NONEXH_5",
)
OVERLOADED_PATTERNS = (
    "MU_LE_LAMBDA_EXH_A", "MU_LE_LAMBDA_EXH_B",
    "MU_LE_LAMBDA_NONEXH_1", "MU_LE_LAMBDA_NONEXH_2",
    "MU_LE_LAMBDA_NONEXH_3", "MU_LE_LAMBDA_NONEXH_4",
)


@dataclass(frozen=True)
class OnOffSchedule:
    on_duration: float
    off_duration: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "on_duration", float(self.on_duration))
        object.__setattr__(self, "off_duration", float(self.off_duration))
        # A zero on duration is allowed: optimized schedules may skip a queue.
        if not (self.on_duration >= 0 and math.isfinite(self.on_duration)):
            raise InvalidInstanceError(f"on duration must be finite and >= 0, got {self.on_duration}")
        if not (self.off_duration > 0 and math.isfinite(self.off_duration)):
            raise InvalidInstanceError(f"off duration must be finite and > 0, got {self.off_duration}")

    @property
    def cycle(self) -> float:
        return self.on_duration + self.off_duration


@dataclass(frozen=True)
class QueueState:
    q: float
    on: bool
    residual: float

    def __post_init__(self) -> None:
        if self.q < 0:
            raise InvalidInstanceError("queue length must be >= 0")
        if self.residual < 0:
            raise InvalidInstanceError("residual time must be >= 0")


@dataclass(frozen=True)
class ExoEquilibriumOutcome:
    pattern: str
    J: float
    J_bar: float
    T: float
    q_min: float
    q_max: float
    k: int | None = None
    zeta: float | None = None
    # Where the joining span starts, measured from the start of an on period,
    # and the queue length at that instant.  Together with J they pin down the
    # whole periodic trajectory.
    join_start: float = 0.0
    q_on_start: float = 0.0
    join_rate: float = 0.0

    @property
    def exhaustive(self) -> bool:
        return self.pattern in EXHAUSTIVE_PATTERNS

    def to_dict(self) -> dict:
        d = asdict(self)
        d["exhaustive"] = self.exhaustive
        return d


def waiting_time(params: QueueParams, sched: OnOffSchedule, state: QueueState) -> float:
    """Waiting time of a customer who joins in ``state``.

    The customer waits for everyone ahead (``q / mu`` of pure service time),
    for the rest of the current off period if the server is away, and for one
    whole off period per on period that is exhausted before their turn.
    """
    L, L_bar = sched.on_duration, sched.off_duration
    if L == 0:
        return math.inf
    limit = L if state.on else L_bar
    if state.residual > limit * (1 + 1e-12):
        raise InvalidInstanceError("residual time exceeds the active phase duration")
    backlog = state.q / params.mu
    if state.on:
        skipped = math.floor((backlog + L - state.residual) / L + SKIP_SNAP)
        return backlog + skipped * L_bar
    skipped = math.floor(backlog / L + SKIP_SNAP)
    return backlog + state.residual + skipped * L_bar


def _snap_floor(x: float) -> int:
    nearest = round(x)
    if abs(x - nearest) < INTEGER_TOL * (1 + abs(x)):
        return int(nearest)
    return math.floor(x)


def _nonexhaustive(params: QueueParams, L: float, L_bar: float, rate: float, prefix: str):
    """Shared non-exhaustive construction.

    ``rate`` is the effective joining rate: lambda when customers join with
    certainty, mu when they mix because the queue is overloaded.
    """
    mu, theta = params.mu, params.theta
    P = L + L_bar
    x = theta / P
    k = _snap_floor(x)
    u = max(x - k, 0.0)
    J = mu * L / rate
    J_bar = P - J
    surplus = (mu - rate) * L / rate
    a, b, d = L_bar / P, J / P, surplus / P
    if u >= max(a, b):
        case = 1
        zeta = (k + 1) * P - theta
        q_min = k * mu * L + rate * (L - zeta)
        q_max = q_min + rate * (zeta + surplus)
        join_start = zeta
    elif b >= a and u >= a:
        case = 2
        zeta = k * P + J - theta
        q_min = k * mu * L + rate * (J - L_bar - zeta)
        q_max = q_min + rate * L_bar
        join_start = zeta + J_bar
    elif b < a and u >= b:
        case = 3
        zeta = k * P + L_bar - theta
        q_min = k * mu * L
        q_max = q_min + mu * L
        join_start = L + zeta
    elif u >= d:
        case = 4
        zeta = k * P + L_bar - theta
        q_min = k * mu * L
        q_max = q_min + rate * (L_bar - zeta)
        join_start = L + zeta
    else:
        case = 5
        zeta = k * P + surplus - theta
        q_min = k * mu * L - rate * zeta
        q_max = q_min + rate * (L_bar - J_bar)
        join_start = L + zeta + J_bar
    return ExoEquilibriumOutcome(
        pattern=f"{prefix}{case}",
        J=J,
        J_bar=J_bar,
        T=0.0,
        q_min=q_min,
        q_max=q_max,
        k=k,
        zeta=zeta,
        join_start=join_start % P,
        q_on_start=q_max,
        join_rate=rate,
    )


def classify_exogenous(params: QueueParams, sched: OnOffSchedule) -> ExoEquilibriumOutcome:
    """Periodic equilibrium outcome of one queue under a fixed schedule."""
    lam, mu, theta = params.lam, params.mu, params.theta
    L, L_bar = sched.on_duration, sched.off_duration
    P = L + L_bar

    if L == 0:
        return ExoEquilibriumOutcome(
            "UNSERVED", J=0.0, J_bar=P, T=0.0, q_min=0.0, q_max=0.0,
            join_start=0.0, q_on_start=0.0, join_rate=0.0,
        )
    if mu <= lam:
        # Overloaded queue: customers mix so that the joining rate equals mu.
        if L_bar >= theta:
            if L >= theta:
                return ExoEquilibriumOutcome(
                    "MU_LE_LAMBDA_EXH_A", J=L, J_bar=L_bar, T=0.0, q_min=0.0, q_max=mu * theta,
                    join_start=(P - theta) % P, q_on_start=mu * theta, join_rate=mu,
                )
            return ExoEquilibriumOutcome(
                "MU_LE_LAMBDA_EXH_B", J=L, J_bar=L_bar, T=0.0, q_min=0.0, q_max=mu * L,
                join_start=(P - theta) % P, q_on_start=mu * L, join_rate=mu,
            )
        return _nonexhaustive(params, L, L_bar, mu, "MU_LE_LAMBDA_NONEXH_")

    clear_patience = lam * theta / (mu - lam)
    clear_off = lam * L_bar / (mu - lam)
    if L_bar >= theta:
        if L >= clear_patience * (1 - THRESHOLD_RTOL):
            return ExoEquilibriumOutcome(
                "EXH_A", J=L + theta, J_bar=L_bar - theta, T=max(0.0, L - clear_patience),
                q_min=0.0, q_max=lam * theta,
                join_start=(P - theta) % P, q_on_start=lam * theta, join_rate=lam,
            )
        J = mu * L / lam
        if L >= lam * theta / mu:
            return ExoEquilibriumOutcome(
                "EXH_B", J=J, J_bar=P - J, T=0.0, q_min=0.0, q_max=lam * theta,
                join_start=(P - theta) % P, q_on_start=lam * theta, join_rate=lam,
            )
        return ExoEquilibriumOutcome(
            "EXH_C", J=J, J_bar=P - J, T=0.0, q_min=0.0, q_max=mu * L,
            join_start=(P - theta) % P, q_on_start=mu * L, join_rate=lam,
        )
    if L >= clear_off * (1 - THRESHOLD_RTOL):
        return ExoEquilibriumOutcome(
            "EXH_D", J=P, J_bar=0.0, T=max(0.0, L - clear_off), q_min=0.0, q_max=lam * L_bar,
            join_start=0.0, q_on_start=lam * L_bar, join_rate=lam,
        )
    return _nonexhaustive(params, L, L_bar, lam, "NONEXH_")


def post_clearance_duration(params: QueueParams, sched: OnOffSchedule) -> float:
    """Equilibrium time the server idles at an empty queue in each on period."""
    if params.mu <= params.lam:
        raise InvalidInstanceError("post-clearance duration is only defined for lambda < mu")
    lam, mu = params.lam, params.mu
    L = sched.on_duration
    return max(
        L - lam * params.theta / (mu - lam),
        L - lam * sched.off_duration / (mu - lam),
        0.0,
    )


def served_per_cycle(params: QueueParams, sched: OnOffSchedule) -> float:
    """Customers served in one cycle at equilibrium."""
    if params.mu <= params.lam:
        return params.mu * sched.on_duration
    T = post_clearance_duration(params, sched)
    return params.mu * (sched.on_duration - T) + params.lam * T


def check_cycle_consistency(inst: SystemInstance, schedules: Sequence[OnOffSchedule], tol: float = 1e-9) -> None:
    """Each off period must equal the switchovers plus every other on period."""
    if len(schedules) != inst.n:
        raise InvalidInstanceError(f"expected {inst.n} schedules, got {len(schedules)}")
    if inst.n == 1:
        return
    on = np.array([s.on_duration for s in schedules])
    total = inst.total_switchover + on.sum()
    for i, s in enumerate(schedules):
        expected = total - on[i]
        if abs(s.off_duration - expected) > tol * max(1.0, total):
            raise InvalidInstanceError(
                f"cycle inconsistency at queue {i + 1}: off duration {s.off_duration} "
                f"but switchovers plus other on durations give {expected}"
            )


def exogenous_throughput(
    inst: SystemInstance, schedules: Sequence[OnOffSchedule], objective: str = "throughput"
) -> float:
    """Long-run served rate (or reward rate) of a cycle-consistent schedule."""
    check_cycle_consistency(inst, schedules)
    weights = _objective_weights(inst, objective)
    cycle = schedules[0].cycle
    served = [served_per_cycle(q, s) for q, s in zip(inst.queues, schedules)]
    return math.fsum(w * x for w, x in zip(weights, served)) / cycle


def _objective_weights(inst: SystemInstance, objective: str) -> np.ndarray:
    if objective == "throughput":
        return np.ones(inst.n)
    if objective == "reward":
        return inst.reward
    raise InvalidInstanceError(f"objective must be 'throughput' or 'reward', got {objective!r}")


def schedules_from_on(inst: SystemInstance, on: Sequence[float]) -> list[OnOffSchedule]:
    """Cycle-consistent schedules induced by a vector of on durations."""
    on = [float(v) for v in on]
    total = inst.total_switchover + math.fsum(on)
    return [OnOffSchedule(v, total - v) for v in on]


# -- trajectory reconstruction ------------------------------------------------

def _in_join_window(t: float, start: float, length: float, period: float) -> bool:
    if length >= period:
        return True
    return (t - start) % period < length


def outcome_trajectory(
    params: QueueParams, sched: OnOffSchedule, outcome: ExoEquilibriumOutcome, points: int = 200
) -> list[tuple[float, float, float]]:
    """Sample ``(t, q, W)`` over one cycle starting at an on period.

    The queue is integrated exactly from the outcome's join window; ``W`` is
    evaluated with :func:`waiting_time` at each sample.
    """
    L, P = sched.on_duration, sched.cycle
    mu = params.mu
    rate = outcome.join_rate
    start, length = outcome.join_start, outcome.J
    # Breakpoints where the slope of q may change.
    marks = {0.0, L, P, start % P, (start + length) % P}
    if outcome.T > 0:
        marks.add(L - outcome.T)
    cuts = sorted(m for m in marks if 0.0 <= m <= P)
    grid = np.linspace(0.0, P, points + 1)

    def q_at(t_end: float) -> float:
        q = outcome.q_on_start
        t = 0.0
        for nxt in cuts[1:] + [P]:
            seg_end = min(nxt, t_end)
            if seg_end <= t:
                continue
            mid = 0.5 * (t + seg_end)
            joining = _in_join_window(mid, start, length, P)
            inflow = rate if joining else 0.0
            outflow = mu if mid < L else 0.0
            if mid < L and q <= 1e-12 and inflow <= outflow:
                outflow = inflow
            q = max(0.0, q + (inflow - outflow) * (seg_end - t))
            t = seg_end
            if t >= t_end:
                break
        return q

    samples = []
    for t in grid:
        q = q_at(float(t))
        on = t < L
        residual = (L - t) if on else (P - t)
        w = waiting_time(params, sched, QueueState(q, on, max(residual, 0.0)))
        samples.append((float(t), q, w))
    return samples
