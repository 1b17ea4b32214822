"""Estimator-style wrappers around the solvers.

Each class follows the familiar ``fit`` / ``transform`` / ``predict`` shape:
constructor arguments are hyperparameters exposed through ``get_params`` and
``set_params``, ``fit`` takes a system (or a single queue) and stores fitted
attributes with a trailing underscore, and the row-wise methods map arrays of
schedules or post-clearance vectors to outcomes.  The functional API in the
other modules remains the primary interface; these classes only add batching
and input validation.
"""

from __future__ import annotations

import inspect
import math
from typing import Any

import numpy as np

from .endo_opt import optimize_exhaustive
from .endogenous import ExhaustivePolicy, equilibrium_via_lp, solve_equilibrium, throughput_endo
from .exo_opt import optimize_schedule
from .exogenous import OnOffSchedule, classify_exogenous
from .model import InvalidInstanceError, QueueParams, SystemInstance, derive_coefficients, require_stable


class NotFittedError(RuntimeError):
    """Raised when a method needs attributes that ``fit`` sets."""


class ParamsMixin:
    """``get_params`` / ``set_params`` derived from the constructor signature."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p.name for p in sig.parameters.values() if p.name != "self" and p.kind == p.POSITIONAL_OR_KEYWORD]

    def get_params(self, deep: bool = True) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params: Any) -> "ParamsMixin":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"invalid parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_is_fitted(estimator: Any, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted; call fit first")


def check_instance(inst: Any) -> SystemInstance:
    if isinstance(inst, SystemInstance):
        return inst
    if isinstance(inst, QueueParams):
        return SystemInstance((inst,))
    if isinstance(inst, dict):
        from .model import instance_from_dict

        return instance_from_dict(inst)
    raise InvalidInstanceError(f"expected a SystemInstance, QueueParams or dict, got {type(inst).__name__}")


def check_array(X: Any, n_columns: int, name: str = "X", allow_inf: bool = False) -> np.ndarray:
    """Coerce to a 2-d float array with ``n_columns`` non-negative entries per row."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != n_columns:
        raise InvalidInstanceError(f"{name} must have shape (rows, {n_columns}), got {arr.shape}")
    if np.isnan(arr).any():
        raise InvalidInstanceError(f"{name} contains NaN")
    if not allow_inf and np.isinf(arr).any():
        raise InvalidInstanceError(f"{name} must be finite")
    if (arr < 0).any():
        raise InvalidInstanceError(f"{name} must be non-negative")
    return arr


class ExogenousClassifier(ParamsMixin):
    """Equilibrium outcome of one queue for a batch of (on, off) durations.

    ``predict`` returns pattern tags; ``transform`` returns the columns
    ``J, J_bar, T, q_min, q_max``.
    """

    columns = ("J", "J_bar", "T", "q_min", "q_max")

    def __init__(self) -> None:
        pass

    def fit(self, params: QueueParams | SystemInstance, y: Any = None) -> "ExogenousClassifier":
        if isinstance(params, SystemInstance):
            if params.n != 1:
                raise InvalidInstanceError("ExogenousClassifier is fitted on a single queue")
            params = params.queues[0]
        if not isinstance(params, QueueParams):
            raise InvalidInstanceError("fit expects QueueParams")
        self.params_ = params
        return self

    def _outcomes(self, X: Any):
        check_is_fitted(self, "params_")
        rows = check_array(X, 2, "schedules")
        return [classify_exogenous(self.params_, OnOffSchedule(L, Lb)) for L, Lb in rows]

    def predict(self, X: Any) -> np.ndarray:
        return np.array([o.pattern for o in self._outcomes(X)])

    def transform(self, X: Any) -> np.ndarray:
        return np.array([[getattr(o, c) for c in self.columns] for o in self._outcomes(X)])

    def fit_transform(self, params: QueueParams, X: Any) -> np.ndarray:
        return self.fit(params).transform(X)


class EquilibriumSolver(ParamsMixin):
    """Equilibrium ``alpha`` of exhaustive policies, one row per ``T`` vector.

    ``method`` is ``"pivot"`` (set-growing pivots) or ``"lp"`` (greatest
    element of the feasible set).  ``predict`` returns the objective rate.
    """

    def __init__(self, method: str = "pivot", objective: str = "throughput") -> None:
        self.method = method
        self.objective = objective

    def fit(self, inst: Any, y: Any = None) -> "EquilibriumSolver":
        if self.method not in ("pivot", "lp"):
            raise ValueError(f"method must be 'pivot' or 'lp', got {self.method!r}")
        inst = check_instance(inst)
        require_stable(inst)
        self.instance_ = inst
        self.coefficients_ = derive_coefficients(inst)
        return self

    def transform(self, X: Any = None) -> np.ndarray:
        check_is_fitted(self, "instance_")
        n = self.instance_.n
        rows = np.zeros((1, n)) if X is None else check_array(X, n, "T")
        out = np.empty_like(rows)
        for k, T in enumerate(rows):
            if self.method == "pivot":
                out[k] = solve_equilibrium(self.instance_, T).alpha
            else:
                out[k] = equilibrium_via_lp(self.instance_, T)
        return out

    def predict(self, X: Any = None) -> np.ndarray:
        check_is_fitted(self, "instance_")
        n = self.instance_.n
        rows = np.zeros((1, n)) if X is None else check_array(X, n, "T", allow_inf=True)
        values = []
        for T in rows:
            policy = ExhaustivePolicy(tuple(T))
            values.append(throughput_endo(self.instance_, policy, objective=self.objective))
        return np.array(values)


class ScheduleOptimizer(ParamsMixin):
    """Best fixed on/off durations for a system of at least two queues."""

    def __init__(self, objective: str = "throughput") -> None:
        self.objective = objective

    def fit(self, inst: Any, y: Any = None) -> "ScheduleOptimizer":
        inst = check_instance(inst)
        plan = optimize_schedule(inst, self.objective)
        self.instance_ = inst
        self.schedules_ = plan.schedules
        self.post_clearance_ = plan.T
        self.objective_value_ = plan.objective
        self.patterns_ = plan.patterns
        return self

    def transform(self, X: Any = None) -> np.ndarray:
        """Optimal ``(L, L_bar, T)`` per queue."""
        check_is_fitted(self, "schedules_")
        return np.array(
            [[s.on_duration, s.off_duration, t] for s, t in zip(self.schedules_, self.post_clearance_)]
        )


class ExhaustivePolicyOptimizer(ParamsMixin):
    """Best exhaustive policy; ``transform`` returns the post-clearance vector
    (``inf`` marks the queue served forever)."""

    def __init__(self, objective: str = "throughput") -> None:
        self.objective = objective

    def fit(self, inst: Any, y: Any = None) -> "ExhaustivePolicyOptimizer":
        inst = check_instance(inst)
        policy, value, trace = optimize_exhaustive(inst, self.objective)
        self.instance_ = inst
        self.policy_ = policy
        self.objective_value_ = value
        self.trace_ = trace
        return self

    def transform(self, X: Any = None) -> np.ndarray:
        check_is_fitted(self, "policy_")
        return self.policy_.array

    @property
    def serves_forever(self) -> bool:
        check_is_fitted(self, "policy_")
        return any(math.isinf(t) for t in self.policy_.T)
