"""Optimal exhaustive service policies.

Only one queue ``j`` (the best balking queue under the pure exhaustive
policy) ever needs a positive post-clearance time.  As ``T_j`` grows, the
all-joining queues leave the all-joining set one by one in a fixed order; the
objective is monotone between those boundary values, so checking each
boundary plus the serve-forever limit suffices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .endogenous import ExhaustivePolicy, solve_equilibrium, throughput_endo
from .model import InvalidInstanceError, SystemInstance, derive_coefficients, require_stable

BOUNDARY_TOL = 1e-9
TIE_RTOL = 1e-12


@dataclass
class OptimizerTrace:
    all_joining_set: tuple[int, ...] = ()
    selected_queue: int | None = None
    ladder: list[int] = field(default_factory=list)
    boundaries: list[float] = field(default_factory=list)
    evaluations: list[tuple[float, float, np.ndarray]] = field(default_factory=list)
    chosen: tuple[ExhaustivePolicy, float] | None = None

    def to_dict(self) -> dict:
        return {
            "all_joining_set": list(self.all_joining_set),
            "selected_queue": self.selected_queue,
            "ladder": list(self.ladder),
            "boundaries": list(self.boundaries),
            "evaluations": [
                {"T_j": t, "objective": v, "alpha": list(map(float, a))} for t, v, a in self.evaluations
            ],
        }


def _weights(inst: SystemInstance, objective: str) -> np.ndarray:
    if objective == "throughput":
        return np.ones(inst.n)
    if objective == "reward":
        return inst.reward
    raise InvalidInstanceError(f"objective must be 'throughput' or 'reward', got {objective!r}")


def alpha_on_slice(inst: SystemInstance, members, T_j: float) -> np.ndarray:
    """``alpha`` when only queue ``j`` has post-clearance time and the
    all-joining set is ``members`` (all remaining queues at one)."""
    coef = derive_coefficients(inst)
    n = inst.n
    alpha = np.ones(n)
    members = list(members)
    if members:
        inside = np.zeros(n, dtype=bool)
        inside[members] = True
        slack = 1.0 - coef.rho[inside].sum()
        level = (inst.total_switchover + T_j + coef.c[~inside].sum()) / slack
        lam, mu, theta = inst.lam[inside], inst.mu[inside], inst.theta[inside]
        alpha[inside] = level * (mu - lam) / (mu * theta)
    return alpha


def slice_objective(inst: SystemInstance, j: int, T_j: float, alpha: np.ndarray, weights: np.ndarray) -> float:
    c = derive_coefficients(inst).c
    num = weights[j] * inst.lam[j] * T_j + float(np.sum(weights * inst.mu * c * alpha))
    den = inst.total_switchover + float(c @ alpha) + T_j
    return num / den


def boundary_ladder(inst: SystemInstance, I0, j: int) -> OptimizerTrace:
    """Order in which all-joining queues reach ``alpha = 1`` as ``T_j`` grows,
    with the boundary values of ``T_j`` and ``alpha`` just after each one."""
    if not I0:
        raise InvalidInstanceError("the boundary ladder needs a non-empty all-joining set")
    coef = derive_coefficients(inst)
    lam, mu, theta = inst.lam, inst.mu, inst.theta
    speed = (mu - lam) / (mu * theta)
    ladder = sorted(I0, key=lambda i: -speed[i])  # sorted() is stable: ties keep index order
    trace = OptimizerTrace(all_joining_set=tuple(I0), selected_queue=j, ladder=ladder)
    members = set(I0)
    previous = -math.inf
    for k in ladder:
        inside = np.zeros(inst.n, dtype=bool)
        inside[list(members)] = True
        T_j = (
            mu[k] * theta[k] * (1.0 - coef.rho[inside].sum()) / (mu[k] - lam[k])
            - inst.total_switchover
            - coef.c[~inside].sum()
        )
        if T_j < previous - BOUNDARY_TOL * max(1.0, abs(previous)):
            raise RuntimeError(f"boundary values decreased along the ladder at queue {k}")
        previous = T_j
        members.discard(k)
        trace.boundaries.append(float(T_j))
    return trace


def optimize_exhaustive(
    inst: SystemInstance, objective: str = "throughput"
) -> tuple[ExhaustivePolicy, float, OptimizerTrace]:
    require_stable(inst)
    weights = _weights(inst, objective)
    n = inst.n
    eq0 = solve_equilibrium(inst)
    I0 = eq0.all_joining_set
    best = throughput_endo(inst, ExhaustivePolicy.zeros(n), eq0, objective)
    best_T = 0.0
    if len(I0) == n:
        trace = OptimizerTrace(all_joining_set=I0, evaluations=[(0.0, best, eq0.alpha)])
        policy = ExhaustivePolicy.zeros(n)
        trace.chosen = (policy, best)
        return policy, best, trace

    balking = [i for i in range(n) if i not in I0]
    score = weights * inst.lam
    j = max(balking, key=lambda i: (score[i], -i))  # first index among ties

    if I0:
        trace = boundary_ladder(inst, I0, j)
    else:
        trace = OptimizerTrace(all_joining_set=I0, selected_queue=j)
    trace.evaluations.append((0.0, best, eq0.alpha))

    members = set(I0)
    for k, T_j in zip(trace.ladder, trace.boundaries):
        members.discard(k)
        if T_j < 0:
            continue
        alpha = alpha_on_slice(inst, sorted(members), T_j)
        value = slice_objective(inst, j, T_j, alpha, weights)
        trace.evaluations.append((T_j, value, alpha))
        if best < value:
            best, best_T = value, T_j

    forever = float(score[j])
    # exact ties go to the finite policy, so forgive rounding in the comparison
    if best >= forever * (1 - TIE_RTOL):
        T = [0.0] * n
        T[j] = best_T
        policy = ExhaustivePolicy(tuple(T))
    else:
        policy = ExhaustivePolicy.serve_forever(n, j)
        best = forever
    trace.chosen = (policy, best)
    return policy, best, trace


# -- two queues in closed form -----------------------------------------------

@dataclass(frozen=True)
class TwoQueueSolution:
    case: str  # "i", "ii", "iii" or "iv"
    alpha0: np.ndarray
    all_joining_set: tuple[int, ...]
    policy: ExhaustivePolicy
    objective: float


def _one_joining_policy(lam, mu, theta, c, S, a: int, b: int):
    """Policy when only queue ``a`` is all-joining under the pure policy.

    Returns the post-clearance vector (``inf`` for serve-forever) and its
    throughput.  ``b`` is the balking queue.
    """
    th_pure = lam[a] + lam[b] * (mu[b] * theta[b] / (mu[b] - lam[b])) * (mu[a] - lam[a]) / (mu[a] * (S + c[b]))
    T = [0.0, 0.0]
    if theta[b] < S:
        T_b = theta[a] - c[b] - S
        th_slice = lam[a] + lam[b] * (theta[a] + theta[b] - S) * (mu[a] - lam[a]) / (mu[a] * theta[a])
        if lam[b] > lam[a] and theta[b] < S + (lam[b] - mu[a]) / lam[b] * c[a]:
            T[b] = math.inf
            return T, lam[b]
        T[b] = T_b
        return T, th_slice
    # theta_b >= S: compare the pure policy with serving b forever.
    if lam[b] > lam[a]:
        denom = mu[b] * (mu[a] - lam[a]) - mu[a] * (lam[b] - lam[a])
        if denom <= 0:
            forever = True
        else:
            bound = mu[a] * (lam[b] - lam[a]) * (mu[b] - lam[b]) / (lam[b] * denom) * S
            forever = theta[b] < bound
        if forever:
            T[b] = math.inf
            return T, lam[b]
    return T, th_pure


def two_queue_closed_form(inst: SystemInstance) -> TwoQueueSolution:
    """Equilibrium of the pure policy and the optimal policy for two queues."""
    if inst.n != 2:
        raise InvalidInstanceError("closed form applies to exactly two queues")
    require_stable(inst)
    lam, mu, theta = inst.lam, inst.mu, inst.theta
    rho = lam / mu
    c = rho * theta / (1 - rho)
    S = inst.total_switchover
    total = 1.0 - rho.sum()

    if theta[0] <= S + c[1] and theta[1] <= S + c[0]:
        alpha = np.ones(2)
        th_pure = float(mu @ c) / (S + c.sum())
        j = 0 if lam[0] > lam[1] else 1
        o = 1 - j
        if theta[j] < S + c[o] * (1 - mu[o] / lam[j]):
            return TwoQueueSolution("i", alpha, (), ExhaustivePolicy.serve_forever(2, j), float(lam[j]))
        return TwoQueueSolution("i", alpha, (), ExhaustivePolicy.zeros(2), th_pure)

    for a, b, label in ((0, 1, "ii"), (1, 0, "iii")):
        if theta[a] > S + c[b] and theta[b] * total <= S * (1 - rho[b]):
            alpha = np.ones(2)
            alpha[a] = (S + c[b]) / theta[a]
            T, value = _one_joining_policy(lam, mu, theta, c, S, a, b)
            return TwoQueueSolution(label, alpha, (a,), ExhaustivePolicy(tuple(T)), float(value))

    if total > 0 and all(theta[i] * total > S * (1 - rho[i]) for i in range(2)):
        alpha = S * (1 - rho) / (theta * total)
        return TwoQueueSolution("iv", alpha, (0, 1), ExhaustivePolicy.zeros(2), float(lam.sum()))
    raise RuntimeError("two-queue regions failed to cover the instance")
