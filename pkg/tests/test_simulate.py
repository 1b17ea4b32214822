import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from generators import four_queue, single_queue_case, stable_instance
from onoff.endogenous import solve_equilibrium
from onoff.exogenous import (
    OnOffSchedule,
    QueueState,
    classify_exogenous,
    schedules_from_on,
    waiting_time,
)
from onoff.model import InvalidInstanceError, QueueParams, SystemInstance, derive_coefficients
from onoff.simulate import SimConfig, default_dt, simulate_exhaustive, simulate_exogenous, simulate_queue

seeds = st.integers(0, 2**32 - 1)


def run_queue(params, sched, dt=None, record=False):
    if dt is None:
        dt = default_dt([sched.on_duration, sched.off_duration, params.theta])
    # queues close to critical load fill up slowly from empty
    cfg = SimConfig(dt=dt, horizon=5000, record=record)
    m, detected, _, rec = simulate_queue(params.lam, params.mu, params.theta, sched.on_duration, sched.off_duration, cfg)
    return m, detected, rec, dt


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0.0)
    with pytest.raises(ValueError):
        SimConfig(horizon=1)


def test_everyone_joins_when_off_period_is_short():
    params, sched = QueueParams(1.0, 2.0, 0.0, 5.0), OnOffSchedule(5.0, 4.0)
    assert classify_exogenous(params, sched).pattern == "EXH_D"
    m, detected, _, _ = run_queue(params, sched)
    assert detected
    assert m.throughput == pytest.approx(1.0, abs=1e-3)
    assert m.J == pytest.approx(9.0, abs=1e-9)


def test_patient_short_on_period_keeps_a_backlog():
    params, sched = QueueParams(1.0, 2.0, 0.0, 9.5), OnOffSchedule(1.0, 4.0)
    out = classify_exogenous(params, sched)
    assert out.pattern == "NONEXH_1"
    m, detected, _, dt = run_queue(params, sched)
    assert detected
    assert m.q_min == pytest.approx(2.5, abs=3 * dt)
    assert m.q_min == pytest.approx(out.q_min, abs=3 * dt)


def test_tiny_patience_still_serves_the_empty_on_period():
    # a customer arriving at an empty, served queue waits zero and joins
    params, sched = QueueParams(1.0, 2.0, 0.0, 1e-6), OnOffSchedule(2.0, 3.0)
    out = classify_exogenous(params, sched)
    # the default step would scale with the patience; events are snapped anyway
    m, _, _, _ = run_queue(params, sched, dt=1e-3)
    assert out.pattern == "EXH_A"
    assert m.throughput == pytest.approx((2.0 + 1e-6) / 5.0, abs=1e-8)


def test_skipped_queue_simulates_to_nothing():
    m, detected, _, _ = run_queue(QueueParams(1.0, 2.0, 0.0, 3.0), OnOffSchedule(0.0, 4.0), dt=1e-3)
    assert detected and m.throughput == 0.0 and m.J == 0.0


@settings(max_examples=40)
@given(seeds, st.booleans())
def test_simulator_matches_classifier(seed, overloaded):
    params, sched = single_queue_case(np.random.default_rng(seed), overloaded)
    out = classify_exogenous(params, sched)
    m, detected, _, dt = run_queue(params, sched)
    assert detected
    tol = 5 * (params.lam + params.mu) * dt
    for name in ("J", "J_bar", "T", "q_min", "q_max"):
        assert getattr(m, name) == pytest.approx(getattr(out, name), abs=tol), name
    assert m.join_switches <= 2


@settings(max_examples=25)
@given(seeds)
def test_recorded_trace_is_a_best_response(seed):
    params, sched = single_queue_case(np.random.default_rng(seed))
    m, _, rec, dt = run_queue(params, sched, record=True)
    L, P = sched.on_duration, sched.cycle
    tol = 1e-6 * max(1.0, params.theta)
    assert rec[:, 1].min() >= -(params.lam + params.mu) * dt
    for t, q, W, f, on in rec:
        residual = L - t if on else P - t
        state = QueueState(max(q, 0.0), bool(on), max(residual, 0.0))
        # the kernel's waiting time agrees with the closed form
        assert W == pytest.approx(waiting_time(params, sched, state), abs=tol)
        if f > 0:
            assert W <= params.theta + tol
        else:
            assert W >= params.theta - tol


@settings(max_examples=25)
@given(seeds)
def test_flow_is_conserved_over_a_cycle(seed):
    params, sched = single_queue_case(np.random.default_rng(seed))
    m, _, _, dt = run_queue(params, sched)
    joined = params.lam * m.J
    served = m.throughput * sched.cycle
    assert joined == pytest.approx(served, abs=(params.lam + params.mu) * dt)


def test_system_simulation_offsets_each_queue():
    inst = SystemInstance.from_arrays([1.0, 0.5], [3.0, 2.0], [2.0, 1.0], 1.0)
    schedules = schedules_from_on(inst, [1.0, 0.8])
    trace = simulate_exogenous(inst, schedules, SimConfig(record=True))
    assert trace.period_detected
    assert len(trace.measured) == 2
    assert trace.samples[1][0, 0] == pytest.approx(1.0 + inst.tau[0])
    for params, sched, m in zip(inst.queues, schedules, trace.measured):
        out = classify_exogenous(params, sched)
        assert m.J == pytest.approx(out.J, abs=5 * (params.lam + params.mu) * trace.dt)


def test_system_simulation_rejects_inconsistent_schedules():
    inst = SystemInstance.from_arrays([1.0, 0.5], [3.0, 2.0], [2.0, 1.0], 1.0)
    with pytest.raises(InvalidInstanceError):
        simulate_exogenous(inst, [OnOffSchedule(1.0, 5.0), OnOffSchedule(1.0, 5.0)])


def test_patient_pair_measures_alpha():
    inst = SystemInstance.from_arrays([1, 1], [3, 3], [3, 3], 1.0)
    res = simulate_exhaustive(inst)
    assert res.period_detected
    np.testing.assert_allclose(res.alpha, [2 / 3, 2 / 3], atol=0.01)
    assert res.all_joining_set == (0, 1)


@pytest.mark.parametrize("scale,members", [(0.5, ()), (1.5, (0, 2)), (3.0, (0, 2, 3))])
def test_four_queue_instance_from_cold_start(scale, members):
    inst = four_queue(scale)
    res = simulate_exhaustive(inst)
    assert res.period_detected
    assert res.all_joining_set == members
    np.testing.assert_allclose(res.alpha, solve_equilibrium(inst).alpha, atol=1e-6)


def test_single_queue_on_duration():
    inst = SystemInstance.from_arrays([1.0], [2.5], [2.0], 0.7)
    for T in (0.0, 0.4):
        res = simulate_exhaustive(inst, [T])
        c = derive_coefficients(inst).c[0]
        m = res.measured[0]
        assert m.on_duration == pytest.approx(c * res.alpha[0] + T, abs=1e-6)
        assert m.T == pytest.approx(T, abs=1e-9)


def certify(inst, T, alpha):
    """Start on the cycle that ``alpha`` predicts and report whether one
    simulated cycle returns to the starting state."""
    res = simulate_exhaustive(inst, T, SimConfig(horizon=2), warm_alpha=alpha)
    return res, res.period_detected and res.cycles == 1


@settings(max_examples=30)
@given(seeds)
def test_warm_start_certifies_the_equilibrium(seed):
    rng = np.random.default_rng(seed)
    inst = stable_instance(rng, max_n=5)
    T = rng.uniform(0, 1.0, inst.n) * (rng.random(inst.n) < 0.5)
    eq = solve_equilibrium(inst, T)
    res, certified = certify(inst, T, eq.alpha)
    assert certified
    np.testing.assert_allclose(res.alpha, eq.alpha, atol=1e-7)
    assert set(res.all_joining_set) == set(eq.all_joining_set)
    for m, on in zip(res.measured, eq.on_durations):
        assert m.on_duration == pytest.approx(on, abs=1e-7 * max(1.0, on))
    wrong = eq.alpha * 0.999
    assert not certify(inst, T, wrong)[1]


def test_wrong_alpha_is_not_self_confirming():
    inst = four_queue(1.5)
    wrong = solve_equilibrium(inst).alpha * 0.9
    res, certified = certify(inst, None, wrong)
    assert not certified
    assert np.abs(res.alpha - wrong).max() > 0.1
    # a lone queue is checked over its own off period too
    single = SystemInstance.from_arrays([1.0], [2.5], [2.0], 0.7)
    assert certify(single, None, solve_equilibrium(single).alpha)[1]
    assert not certify(single, None, [0.97])[1]


@settings(max_examples=20)
@given(seeds)
def test_cold_start_is_never_wrong(seed):
    # convergence from empty queues is not guaranteed; when it is reported it must be right
    rng = np.random.default_rng(seed)
    inst = stable_instance(rng, max_n=4)
    res = simulate_exhaustive(inst, cfg=SimConfig(horizon=200))
    if res.period_detected:
        np.testing.assert_allclose(res.alpha, solve_equilibrium(inst).alpha, atol=1e-6)


def test_exhaustive_trace_stays_non_negative():
    inst = four_queue(1.5)
    res = simulate_exhaustive(inst, cfg=SimConfig(record=True))
    n = inst.n
    rec = res.samples[0]
    assert rec[:, 2 : 2 + n].min() >= -(inst.lam.max() + inst.mu.max()) * res.dt


def test_zero_length_cycle_is_rejected():
    inst = SystemInstance.from_arrays([1.0], [2.0], [3.0], 0.0)
    with pytest.raises(InvalidInstanceError):
        simulate_exhaustive(inst)
    # a positive post-clearance time gives the cycle a length again
    assert simulate_exhaustive(inst, [0.5]).period_detected
