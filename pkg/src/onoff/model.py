"""Domain types, derived coefficients and the linear-algebra kernel shared by
every solver.

A system is a single server cycling over ``n`` queues in a fixed order.  Each
queue is described by its arrival rate, service rate, switchover time on
departure, customer patience and a per-customer reward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SINGULAR_TOL = 1e-10


class InvalidInstanceError(ValueError):
    """Raised when model parameters violate a documented invariant."""


class SingularSetError(ValueError):
    """Raised when a queue subset has total utilization equal to one."""


@dataclass(frozen=True)
class QueueParams:
    lam: float
    mu: float
    tau: float
    theta: float
    reward: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lam", "mu", "tau", "theta", "reward"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or math.isnan(value):
                raise InvalidInstanceError(f"{name} must be a number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.lam <= 0:
            raise InvalidInstanceError(f"lambda must be > 0, got {self.lam}")
        if self.mu <= 0:
            raise InvalidInstanceError(f"mu must be > 0, got {self.mu}")
        if self.theta <= 0:
            raise InvalidInstanceError(f"theta must be > 0, got {self.theta}")
        if self.tau < 0:
            raise InvalidInstanceError(f"tau must be >= 0, got {self.tau}")
        if self.reward <= 0:
            raise InvalidInstanceError(f"reward must be > 0, got {self.reward}")
        if not all(math.isfinite(getattr(self, n)) for n in ("lam", "mu", "tau", "theta", "reward")):
            raise InvalidInstanceError("queue parameters must be finite")

    @property
    def rho(self) -> float:
        return self.lam / self.mu

    @property
    def stable(self) -> bool:
        """True when the server can clear the queue (lambda < mu)."""
        return self.lam < self.mu


@dataclass(frozen=True)
class SystemInstance:
    queues: tuple[QueueParams, ...]
    total_switchover: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        queues = tuple(self.queues)
        if not queues:
            raise InvalidInstanceError("an instance needs at least one queue")
        object.__setattr__(self, "queues", queues)
        tau_sum = math.fsum(q.tau for q in queues)
        total = self.total_switchover
        if math.isnan(total):
            total = tau_sum
        total = float(total)
        if abs(total - tau_sum) > 1e-12 * max(1.0, abs(tau_sum)):
            raise InvalidInstanceError(
                f"total_switchover {total} differs from the sum of per-queue tau {tau_sum}"
            )
        if len(queues) >= 2 and total <= 0:
            raise InvalidInstanceError("total switchover time must be > 0 when n >= 2")
        object.__setattr__(self, "total_switchover", total)

    @classmethod
    def from_arrays(
        cls,
        lam: Sequence[float],
        mu: Sequence[float],
        theta: Sequence[float],
        total_switchover: float,
        reward: Sequence[float] | None = None,
        tau: Sequence[float] | None = None,
    ) -> "SystemInstance":
        """Build an instance from parallel arrays.

        When ``tau`` is omitted the whole switchover time is charged to the
        last queue; only the total enters any formula.
        """
        n = len(lam)
        if not (len(mu) == len(theta) == n):
            raise InvalidInstanceError("lambda, mu and theta must have equal length")
        if reward is None:
            reward = [1.0] * n
        if tau is None:
            tau = [0.0] * (n - 1) + [float(total_switchover)]
        if len(reward) != n or len(tau) != n:
            raise InvalidInstanceError("reward and tau must match the number of queues")
        queues = tuple(
            QueueParams(float(lam[i]), float(mu[i]), float(tau[i]), float(theta[i]), float(reward[i]))
            for i in range(n)
        )
        return cls(queues, float(total_switchover))

    @property
    def n(self) -> int:
        return len(self.queues)

    @property
    def lam(self) -> np.ndarray:
        return np.array([q.lam for q in self.queues])

    @property
    def mu(self) -> np.ndarray:
        return np.array([q.mu for q in self.queues])

    @property
    def theta(self) -> np.ndarray:
        return np.array([q.theta for q in self.queues])

    @property
    def reward(self) -> np.ndarray:
        return np.array([q.reward for q in self.queues])

    @property
    def tau(self) -> np.ndarray:
        return np.array([q.tau for q in self.queues])

    @property
    def rho(self) -> np.ndarray:
        return self.lam / self.mu

    def with_theta(self, theta: Iterable[float]) -> "SystemInstance":
        theta = list(theta)
        queues = tuple(
            QueueParams(q.lam, q.mu, q.tau, float(t), q.reward) for q, t in zip(self.queues, theta)
        )
        return SystemInstance(queues, self.total_switchover)

    def with_reward(self, reward: Iterable[float]) -> "SystemInstance":
        reward = list(reward)
        queues = tuple(
            QueueParams(q.lam, q.mu, q.tau, q.theta, float(r)) for q, r in zip(self.queues, reward)
        )
        return SystemInstance(queues, self.total_switchover)

    def to_dict(self) -> dict:
        return {
            "queues": [
                {"lambda": q.lam, "mu": q.mu, "tau": q.tau, "theta": q.theta, "reward": q.reward}
                for q in self.queues
            ]
        }


@dataclass(frozen=True)
class DerivedCoefficients:
    rho: np.ndarray
    c: np.ndarray  # nan where rho >= 1
    n_bar: int

    @property
    def c_defined(self) -> np.ndarray:
        return ~np.isnan(self.c)


@dataclass(frozen=True)
class LcpSystem:
    A: np.ndarray
    b: np.ndarray
    rho: np.ndarray
    c: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    theta: np.ndarray


def max_stable_set_size(rho: Sequence[float]) -> int:
    """Largest number of queues whose utilizations sum strictly below one."""
    total = 0.0
    count = 0
    for r in sorted(rho):
        if total + r < 1.0:
            total += r
            count += 1
        else:
            break
    return count


def max_stable_set_size_bruteforce(rho: Sequence[float]) -> int:
    rho = list(rho)
    best = 0
    for size in range(1, len(rho) + 1):
        if any(sum(s) < 1.0 for s in combinations(rho, size)):
            best = size
    return best


def derive_coefficients(inst: SystemInstance) -> DerivedCoefficients:
    rho = inst.rho
    c = np.full(inst.n, np.nan)
    ok = rho < 1.0
    c[ok] = rho[ok] * inst.theta[ok] / (1.0 - rho[ok])
    return DerivedCoefficients(rho=rho, c=c, n_bar=max_stable_set_size(rho))


def require_stable(inst: SystemInstance) -> None:
    bad = [i + 1 for i, q in enumerate(inst.queues) if not q.stable]
    if bad:
        raise InvalidInstanceError(
            f"exhaustive policies need lambda < mu on every queue; violated by queue(s) {bad}"
        )


def build_lcp_system(inst: SystemInstance, T: Sequence[float] | None = None) -> LcpSystem:
    """Matrix ``A`` and right-hand side ``b(T)`` of the equilibrium problem.

    ``A`` has ``theta_i`` on the diagonal and ``-c_j`` everywhere else in
    column ``j``; ``b(T) = (sum tau + sum T) * 1 - T``.
    """
    require_stable(inst)
    n = inst.n
    T = np.zeros(n) if T is None else np.asarray(T, dtype=float)
    if T.shape != (n,):
        raise InvalidInstanceError(f"post-clearance vector must have length {n}")
    if np.any(T < 0) or not np.all(np.isfinite(T)):
        raise InvalidInstanceError("post-clearance durations must be finite and >= 0")
    coef = derive_coefficients(inst)
    A = np.tile(-coef.c, (n, 1))
    np.fill_diagonal(A, inst.theta)
    b = (inst.total_switchover + T.sum()) * np.ones(n) - T
    return LcpSystem(A=A, b=b, rho=coef.rho, c=coef.c, lam=inst.lam, mu=inst.mu, theta=inst.theta)


def invert_submatrix(sys: LcpSystem, I: Sequence[int]) -> np.ndarray:
    """Closed-form inverse of the principal submatrix ``A[I, I]``.

    Rows and columns follow the order of ``I``.
    """
    idx = np.asarray(list(I), dtype=int)
    if idx.size == 0:
        raise ValueError("index set must be non-empty")
    rho_I = sys.rho[idx]
    slack = 1.0 - rho_I.sum()
    if abs(slack) < SINGULAR_TOL:
        raise SingularSetError(f"utilizations of queues {list(idx + 1)} sum to one")
    lam, mu, theta = sys.lam[idx], sys.mu[idx], sys.theta[idx]
    scale = (mu - lam) / (mu * theta)
    inv = np.outer(scale, rho_I) / slack
    diag = scale * (1.0 - (rho_I.sum() - rho_I)) / slack
    np.fill_diagonal(inv, diag)
    return inv


# -- JSON ingestion -----------------------------------------------------------

def instance_from_dict(data: dict) -> SystemInstance:
    if not isinstance(data, dict) or "queues" not in data:
        raise InvalidInstanceError('instance JSON must be an object with a "queues" list')
    raw = data["queues"]
    if not isinstance(raw, list) or not raw:
        raise InvalidInstanceError('"queues" must be a non-empty list')
    total = data.get("total_switchover")
    queues = []
    for pos, item in enumerate(raw, start=1):
        if not isinstance(item, dict):
            raise InvalidInstanceError(f"queue {pos} must be an object")
        missing = [k for k in ("lambda", "mu", "theta") if k not in item]
        if missing:
            raise InvalidInstanceError(f"queue {pos} is missing {missing}")
        if total is None and "tau" not in item:
            raise InvalidInstanceError(f"queue {pos} is missing tau (or give total_switchover)")
        tau = item.get("tau", 0.0) if total is None else 0.0
        try:
            queues.append(
                QueueParams(item["lambda"], item["mu"], tau, item["theta"], item.get("reward", 1.0))
            )
        except InvalidInstanceError as exc:
            raise InvalidInstanceError(f"queue {pos}: {exc}") from None
    if total is not None:
        if not isinstance(total, (int, float)) or total < 0:
            raise InvalidInstanceError("total_switchover must be a number >= 0")
        last = queues[-1]
        queues[-1] = QueueParams(last.lam, last.mu, float(total), last.theta, last.reward)
    return SystemInstance(tuple(queues))


def load_instance(path: str | Path) -> SystemInstance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInstanceError(f"instance file is not valid JSON: {exc}") from None
    return instance_from_dict(data)
