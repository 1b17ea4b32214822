"""Equilibrium computation and policy optimization for single-server on-off
fluid queues with customers who decide whether to join."""

from .endo_opt import OptimizerTrace, TwoQueueSolution, boundary_ladder, optimize_exhaustive, two_queue_closed_form
from .endogenous import (
    EndoEquilibrium,
    ExhaustivePolicy,
    equilibrium_via_lp,
    solve_equilibrium,
    throughput_endo,
)
from .estimators import (
    EquilibriumSolver,
    ExhaustivePolicyOptimizer,
    ExogenousClassifier,
    ScheduleOptimizer,
    check_array,
    check_instance,
)
from .exo_opt import (
    LpProblem,
    LpSolution,
    SingleQueueConstraints,
    build_lp,
    optimize_schedule,
    optimize_single_queue,
    recover_schedule,
    solve_lp,
)
from .exogenous import (
    ExoEquilibriumOutcome,
    OnOffSchedule,
    QueueState,
    classify_exogenous,
    exogenous_throughput,
    post_clearance_duration,
    waiting_time,
)
from .model import (
    DerivedCoefficients,
    InvalidInstanceError,
    LcpSystem,
    QueueParams,
    SingularSetError,
    SystemInstance,
    build_lcp_system,
    derive_coefficients,
    invert_submatrix,
    load_instance,
)
from .simplex import LpError, simplex_max
from .simulate import SimConfig, SimTrace, simulate_exhaustive, simulate_exogenous

__all__ = [name for name in dir() if not name.startswith("_")]
