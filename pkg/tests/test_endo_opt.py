import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from generators import four_queue, stable_instance
from onoff.endo_opt import (
    alpha_on_slice,
    boundary_ladder,
    optimize_exhaustive,
    slice_objective,
    two_queue_closed_form,
)
from onoff.endogenous import ExhaustivePolicy, solve_equilibrium, throughput_endo
from onoff.model import InvalidInstanceError, SystemInstance, derive_coefficients

seeds = st.integers(0, 2**32 - 1)

# Optimal post-clearance time on queue 2 of the patience-1.5 instance (a
# ladder boundary) and the objective there, both derived with fractions.
T2_STAR = Fraction(199, 304)
TH_STAR = Fraction(4803, 2375)


def slice_throughput(inst, j, T_j, objective="throughput"):
    T = np.zeros(inst.n)
    T[j] = T_j
    return throughput_endo(inst, ExhaustivePolicy(tuple(T)), objective=objective)


def test_patience_half_keeps_pure_policy():
    inst = four_queue(0.5)
    policy, value, trace = optimize_exhaustive(inst)
    assert policy == ExhaustivePolicy.zeros(4)
    assert trace.all_joining_set == ()
    assert value == pytest.approx(throughput_endo(inst))
    values = [slice_throughput(inst, trace.selected_queue, t) for t in np.linspace(0, 5, 50)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_patience_one_and_a_half_exact_optimum():
    inst = four_queue(1.5)
    policy, value, trace = optimize_exhaustive(inst)
    assert trace.all_joining_set == (0, 2)
    assert trace.selected_queue == 1
    assert trace.ladder == [2, 0]
    assert policy.T[1] == pytest.approx(float(T2_STAR), rel=1e-13)
    assert policy.T[0] == policy.T[2] == policy.T[3] == 0.0
    assert value == pytest.approx(float(TH_STAR), rel=1e-13)
    assert value > throughput_endo(inst)
    assert abs(policy.T[1] - 0.66) < 0.05


def test_patience_three_has_three_joining_queues():
    _, _, trace = optimize_exhaustive(four_queue(3.0))
    assert trace.all_joining_set == (0, 2, 3)


def test_impatient_pair_tie_keeps_finite_policy():
    inst = SystemInstance.from_arrays([1, 1], [3, 3], [0.5, 0.5], 1.0)
    policy, value, _ = optimize_exhaustive(inst)
    assert policy == ExhaustivePolicy.zeros(2)
    assert value == pytest.approx(1.0)


def test_first_best_returns_immediately():
    inst = SystemInstance.from_arrays([1, 1], [3, 3], [3, 3], 1.0)
    policy, value, trace = optimize_exhaustive(inst)
    assert policy == ExhaustivePolicy.zeros(2)
    assert value == pytest.approx(2.0)
    assert len(trace.evaluations) == 1


def test_slow_serving_pair_prefers_serving_forever():
    # a tiny switchover window barely helps; one fast queue wins alone
    inst = SystemInstance.from_arrays([2.0, 0.1], [2.5, 5.0], [0.1, 0.1], 5.0)
    policy, value, _ = optimize_exhaustive(inst)
    assert policy.serve_forever_queue == 0
    assert value == 2.0


def test_ladder_requires_members():
    with pytest.raises(InvalidInstanceError):
        boundary_ladder(four_queue(1.5), (), 1)


def test_ladder_single_member():
    inst = SystemInstance.from_arrays([1, 1], [3, 3], [5.0, 0.2], 1.0)
    trace = boundary_ladder(inst, (0,), 1)
    assert trace.ladder == [0] and len(trace.boundaries) == 1


def test_ladder_ties_keep_index_order():
    inst = SystemInstance.from_arrays([1, 1, 1], [3, 3, 3], [6.0, 6.0, 6.0], 1.0)
    trace = boundary_ladder(inst, (0, 1), 2)
    assert trace.ladder == [0, 1]


def test_reward_selects_weighted_queue():
    inst = four_queue(1.5)
    lam = inst.lam
    weighted = inst.with_reward(1.0 / lam)  # every r_i * lambda_i equals one
    _, _, trace = optimize_exhaustive(weighted, "reward")
    assert trace.selected_queue == 1  # ties go to the first balking queue
    weighted = inst.with_reward([1, 1, 1, 100])
    _, _, trace = optimize_exhaustive(weighted, "reward")
    assert trace.selected_queue == 3


def test_unit_rewards_match_throughput_mode():
    for scale in (0.5, 1.5, 3.0):
        inst = four_queue(scale)
        a = optimize_exhaustive(inst)
        b = optimize_exhaustive(inst.with_reward([1, 1, 1, 1]), "reward")
        assert a[0] == b[0] and a[1] == b[1]


def test_closed_form_examples():
    patient = two_queue_closed_form(SystemInstance.from_arrays([1, 1], [3, 3], [3, 3], 1.0))
    assert patient.case == "iv"
    np.testing.assert_allclose(patient.alpha0, [2 / 3, 2 / 3])
    assert patient.policy == ExhaustivePolicy.zeros(2)
    impatient = two_queue_closed_form(SystemInstance.from_arrays([1, 1], [3, 3], [0.5, 0.5], 1.0))
    assert impatient.case == "i"
    np.testing.assert_array_equal(impatient.alpha0, [1, 1])
    with pytest.raises(InvalidInstanceError):
        two_queue_closed_form(four_queue(1.0))


def _stable_pair(rng):
    lam = rng.uniform(0.2, 2.0, 2)
    mu = lam / rng.uniform(0.05, 0.9, 2)
    return SystemInstance.from_arrays(lam, mu, rng.uniform(0.1, 8.0, 2), rng.uniform(0.2, 3.0))


@given(seeds)
def test_two_queue_closed_form_matches_general_solvers(seed):
    inst = _stable_pair(np.random.default_rng(seed))
    closed = two_queue_closed_form(inst)
    eq = solve_equilibrium(inst)
    np.testing.assert_allclose(closed.alpha0, eq.alpha, atol=1e-8)
    assert set(closed.all_joining_set) == set(eq.all_joining_set)
    policy, value, _ = optimize_exhaustive(inst)
    assert closed.objective == pytest.approx(value, rel=1e-7)
    assert throughput_endo(inst, closed.policy) == pytest.approx(value, rel=1e-7)


@given(seeds)
def test_boundaries_reproduce_shrinking_sets(seed):
    rng = np.random.default_rng(seed)
    inst = stable_instance(rng, max_n=6)
    eq0 = solve_equilibrium(inst)
    I0 = eq0.all_joining_set
    if not I0 or len(I0) == inst.n:
        return
    j = next(i for i in range(inst.n) if i not in I0)
    trace = boundary_ladder(inst, I0, j)
    assert sorted(trace.ladder) == sorted(I0)
    assert all(b >= a - 1e-9 * max(1, abs(a)) for a, b in zip(trace.boundaries, trace.boundaries[1:]))
    left = set(I0)
    for k, T_j in zip(trace.ladder, trace.boundaries):
        left.discard(k)
        if T_j < 0:
            continue
        T = np.zeros(inst.n)
        T[j] = T_j
        eq = solve_equilibrium(inst, T)
        assert eq.alpha[k] == pytest.approx(1.0, abs=1e-8)
        assert set(eq.all_joining_set) == left
        np.testing.assert_allclose(alpha_on_slice(inst, sorted(left), T_j), eq.alpha, atol=1e-8)
        assert slice_objective(inst, j, T_j, eq.alpha, np.ones(inst.n)) == pytest.approx(
            throughput_endo(inst, T, eq), rel=1e-10
        )


def slice_grid(inst, trace, points):
    cycle = solve_equilibrium(inst).cycle
    last = max([0.0] + [b for b in trace.boundaries if b > 0])
    return np.linspace(0.0, last + 5 * cycle, points)


@given(seeds)
def test_optimizer_beats_post_clearance_grid(seed):
    rng = np.random.default_rng(seed)
    inst = stable_instance(rng, max_n=5)
    policy, value, trace = optimize_exhaustive(inst)
    if trace.selected_queue is None:
        assert value == pytest.approx(float(inst.lam.sum()))
        return
    j = trace.selected_queue
    grid = slice_grid(inst, trace, 120)
    best = max(slice_throughput(inst, j, t) for t in grid)
    assert value >= best - 1e-6
    assert value >= inst.lam[j] - 1e-12


@given(seeds)
def test_throughput_is_monotone_between_boundaries(seed):
    rng = np.random.default_rng(seed)
    inst = stable_instance(rng, max_n=5)
    _, _, trace = optimize_exhaustive(inst)
    if trace.selected_queue is None:
        return
    j = trace.selected_queue
    cuts = sorted({0.0, *[b for b in trace.boundaries if b > 0]})
    cuts.append(cuts[-1] + 5 * solve_equilibrium(inst).cycle)
    for lo, hi in zip(cuts, cuts[1:]):
        vals = np.array([slice_throughput(inst, j, t) for t in np.linspace(lo, hi, 12)[1:-1]])
        steps = np.diff(vals)
        tol = 1e-12 * max(1.0, float(np.abs(vals).max()))
        assert np.all(steps >= -tol) or np.all(steps <= tol)


@given(seeds)
def test_no_joining_queue_decides_by_sign(seed):
    rng = np.random.default_rng(seed)
    inst = stable_instance(rng, max_n=5)
    policy, value, trace = optimize_exhaustive(inst)
    if trace.all_joining_set:
        return
    j = trace.selected_queue
    c = derive_coefficients(inst).c
    lam_j = inst.lam[j]
    # serving j forever beats the pure policy iff lam_j * S exceeds sum (mu_i - lam_j) c_i
    margin = lam_j * inst.total_switchover - float(np.sum((inst.mu - lam_j) * c))
    if margin > 1e-9:
        assert policy.serve_forever_queue == j
    elif margin < -1e-9:
        assert policy == ExhaustivePolicy.zeros(inst.n)
    assert not any(0 < t < math.inf for t in policy.T)
