"""Equilibria of exhaustive service policies.

Under an exhaustive policy the server stays at a queue until it empties and
then for a further post-clearance time ``T_i``.  At equilibrium each queue's
customers join during the last ``alpha_i * theta_i`` of its off period, so the
vector ``alpha`` determines every on and off duration.  It solves a linear
complementarity problem with a Z-matrix, computed here by a pivoting scheme
whose updates use a closed-form inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import (
    InvalidInstanceError,
    SystemInstance,
    build_lcp_system,
    derive_coefficients,
    invert_submatrix,
    require_stable,
)
from .simplex import simplex_max

PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class ExhaustivePolicy:
    """Post-clearance durations; ``inf`` on one queue means serve it forever."""

    T: tuple[float, ...]

    def __post_init__(self) -> None:
        T = tuple(float(t) for t in self.T)
        if any(math.isnan(t) or t < 0 for t in T):
            raise InvalidInstanceError("post-clearance durations must be >= 0")
        if sum(math.isinf(t) for t in T) > 1:
            raise InvalidInstanceError("at most one queue may be served forever")
        object.__setattr__(self, "T", T)

    @classmethod
    def zeros(cls, n: int) -> "ExhaustivePolicy":
        return cls((0.0,) * n)

    @classmethod
    def serve_forever(cls, n: int, j: int) -> "ExhaustivePolicy":
        T = [0.0] * n
        T[j] = math.inf
        return cls(tuple(T))

    @property
    def serve_forever_queue(self) -> int | None:
        for i, t in enumerate(self.T):
            if math.isinf(t):
                return i
        return None

    @property
    def array(self) -> np.ndarray:
        return np.array(self.T)


@dataclass(frozen=True)
class EndoEquilibrium:
    alpha: np.ndarray
    all_joining_set: tuple[int, ...]
    on_durations: np.ndarray
    off_durations: np.ndarray
    not_joining: np.ndarray
    pivot_steps: int
    history: tuple[tuple[int, ...], ...] = field(default=(), repr=False)

    @property
    def cycle(self) -> float:
        return float(self.on_durations[0] + self.off_durations[0])


def _as_policy(inst: SystemInstance, policy) -> ExhaustivePolicy:
    if policy is None:
        return ExhaustivePolicy.zeros(inst.n)
    if not isinstance(policy, ExhaustivePolicy):
        policy = ExhaustivePolicy(tuple(policy))
    if len(policy.T) != inst.n:
        raise InvalidInstanceError(f"policy has {len(policy.T)} entries for {inst.n} queues")
    return policy


def _durations(inst: SystemInstance, c: np.ndarray, alpha: np.ndarray, T: np.ndarray):
    on = c * alpha + T
    off = inst.total_switchover + on.sum() - on
    not_joining = np.maximum(off - alpha * inst.theta, 0.0)
    return on, off, not_joining


def solve_equilibrium(inst: SystemInstance, policy=None) -> EndoEquilibrium:
    """Unique equilibrium of a finite exhaustive policy by set-growing pivots.

    Starting from the guess that every queue has a balking span, the scheme
    repeatedly moves all queues whose period constraint is violated into the
    all-joining set and re-solves that block in closed form.
    """
    require_stable(inst)
    policy = _as_policy(inst, policy)
    if policy.serve_forever_queue is not None:
        raise InvalidInstanceError("a serve-forever policy has no finite equilibrium cycle")
    T = policy.array
    sys = build_lcp_system(inst, T)
    A, b, c = sys.A, sys.b, sys.c
    n = inst.n
    q0 = b - A.sum(axis=1)
    tol = PIVOT_TOL * max(1.0, float(np.abs(b).max()))

    members: list[int] = []
    in_set = np.zeros(n, dtype=bool)
    inv = None
    steps = 0
    history: list[tuple[int, ...]] = [()]
    q = q0.copy()
    while True:
        outside = np.flatnonzero(~in_set)
        violated = outside[q[outside] < -tol]
        if violated.size == 0:
            break
        previous = set(members)
        members = sorted(previous.union(int(i) for i in violated))
        assert previous.issubset(members)
        in_set[members] = True
        steps += 1
        history.append(tuple(members))
        inv = invert_submatrix(sys, members)
        outside = np.flatnonzero(~in_set)
        q = np.full(n, np.nan)
        q[outside] = q0[outside] - A[np.ix_(outside, members)] @ (inv @ q0[members])

    alpha = np.ones(n)
    if members:
        outside = ~in_set
        rhs = b[members] + c[outside].sum()
        alpha[members] = inv @ rhs
    on, off, not_joining = _durations(inst, c, alpha, T)
    return EndoEquilibrium(
        alpha=alpha,
        all_joining_set=tuple(members),
        on_durations=on,
        off_durations=off,
        not_joining=not_joining,
        pivot_steps=steps,
        history=tuple(history),
    )


def equilibrium_via_lp(inst: SystemInstance, policy=None) -> np.ndarray:
    """Equilibrium ``alpha`` as the greatest element of ``{0<=a<=1, A a <= b}``.

    The greatest element maximizes ``sum(a)`` over the polyhedron, so one
    linear program recovers it.
    """
    require_stable(inst)
    policy = _as_policy(inst, policy)
    if policy.serve_forever_queue is not None:
        raise InvalidInstanceError("a serve-forever policy has no finite equilibrium cycle")
    sys = build_lcp_system(inst, policy.array)
    n = inst.n
    A_ub = np.vstack([np.eye(n), sys.A])
    b_ub = np.concatenate([np.ones(n), sys.b])
    res = simplex_max(np.ones(n), A_ub, b_ub)
    return res.x


def equilibrium_from_alpha(inst: SystemInstance, policy, alpha: Sequence[float]) -> EndoEquilibrium:
    """Package a known ``alpha`` with its induced durations."""
    policy = _as_policy(inst, policy)
    alpha = np.asarray(alpha, dtype=float)
    c = derive_coefficients(inst).c
    on, off, not_joining = _durations(inst, c, alpha, policy.array)
    members = tuple(int(i) for i in np.flatnonzero(alpha < 1.0 - 1e-12))
    return EndoEquilibrium(alpha, members, on, off, not_joining, pivot_steps=0)


def throughput_endo(
    inst: SystemInstance, policy=None, eq: EndoEquilibrium | None = None, objective: str = "throughput"
) -> float:
    """Long-run served rate (or reward rate) of an exhaustive policy."""
    policy = _as_policy(inst, policy)
    if objective == "throughput":
        w = np.ones(inst.n)
    elif objective == "reward":
        w = inst.reward
    else:
        raise InvalidInstanceError(f"objective must be 'throughput' or 'reward', got {objective!r}")
    j = policy.serve_forever_queue
    if j is not None:
        return float(w[j] * inst.queues[j].lam)
    if eq is None:
        eq = solve_equilibrium(inst, policy)
    c = derive_coefficients(inst).c
    T = policy.array
    num = w * (inst.mu * c * eq.alpha + inst.lam * T)
    den = inst.total_switchover + float((c * eq.alpha + T).sum())
    if den == 0.0:
        # A lone queue that the server never leaves: everybody joins.
        return float(w @ inst.lam)
    return math.fsum(num) / den
