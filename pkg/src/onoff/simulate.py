"""Forward fluid simulation with best-response joining.

The simulator knows nothing about the closed-form outcomes.  At every instant
an arriving customer computes their own waiting time from the current state
and joins exactly when it does not exceed their patience.  The state is
integrated with a fixed maximum step ``dt``, and every event that changes a
slope (phase switches, a queue emptying, a waiting time crossing the
patience, a customer's turn slipping into the next cycle) is located exactly
inside the step, so the discretization introduces no first-order bias.

Exogenous schedules decouple the queues, so each is simulated on its own.
Under an exhaustive policy the queues interact through the server; customers
then predict the server's return from the previous cycle's realized off
period, and a converged (periodic) run is an equilibrium.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .exogenous import SKIP_SNAP, OnOffSchedule, check_cycle_consistency
from .model import InvalidInstanceError, SystemInstance, require_stable

Z_EPS = SKIP_SNAP
Q_EPS = 1e-12


@dataclass(frozen=True)
class SimConfig:
    dt: float | None = None
    horizon: int = 400
    convergence_tol: float = 1e-9
    record: bool = False
    learning_rate: float = 0.5

    def __post_init__(self) -> None:
        if self.dt is not None and not self.dt > 0:
            raise InvalidInstanceError("dt must be > 0")
        if self.horizon < 2:
            raise InvalidInstanceError("horizon must be at least 2 cycles")
        if not 0 < self.learning_rate <= 1:
            raise InvalidInstanceError("learning_rate must lie in (0, 1]")


@dataclass
class QueueMeasurement:
    J: float
    J_bar: float
    T: float
    q_min: float
    q_max: float
    throughput: float
    on_duration: float = float("nan")
    off_duration: float = float("nan")
    alpha: float = float("nan")
    join_switches: int = 0


@dataclass
class SimTrace:
    period_detected: bool
    cycles: int
    cycle_length: float
    dt: float
    measured: list[QueueMeasurement]
    # Per-queue recordings of the final cycle: columns t, q, W, join, on.
    samples: list[np.ndarray] = field(default_factory=list)

    @property
    def throughput(self) -> float:
        return float(sum(m.throughput for m in self.measured))


# -- exogenous kernel ---------------------------------------------------------

@njit(cache=True)
def _exo_waiting(q, on, r, mu, L, Lb):
    backlog = q / mu
    if on:
        a = backlog + (L - r)
    else:
        a = backlog
    z = math.floor(a / L + Z_EPS)
    if on:
        return backlog + z * Lb, a
    return backlog + r + z * Lb, a


@njit(cache=True)
def _exo_cycle(lam, mu, theta, L, Lb, q0, dt, record, rec):
    """One cycle from the start of an on period.

    Returns (J, T, served, q_min, q_max, q_end, switches, n_recorded).
    """
    P = L + Lb
    wtol = 1e-9 * max(1.0, theta)
    min_h = 1e-13 * P
    q = q0
    J = 0.0
    T = 0.0
    served = 0.0
    q_min = q
    q_max = q
    switches = 0
    last_f = -1.0
    nrec = 0
    cap = rec.shape[0]
    for phase in range(2):
        on = phase == 0
        length = L if on else Lb
        base = 0.0 if on else L
        s = 0.0
        while s < length:
            r = length - s
            W, a = _exo_waiting(q, on, r, mu, L, Lb)
            if W > theta + wtol:
                f = 0.0
            elif W < theta - wtol:
                f = 1.0
            else:
                f = min(1.0, mu / lam)
            if last_f >= 0.0 and (f > 0.0) != (last_f > 0.0):
                switches += 1
            last_f = f
            inflow = lam * f
            if on:
                out = mu if q > Q_EPS else min(mu, inflow)
            else:
                out = 0.0
            slope = inflow - out
            if record and nrec < cap:
                rec[nrec, 0] = base + s
                rec[nrec, 1] = q
                rec[nrec, 2] = W
                rec[nrec, 3] = f
                rec[nrec, 4] = 1.0 if on else 0.0
                nrec += 1

            h = min(dt, r)
            if slope < 0.0 and q > Q_EPS:
                h = min(h, q / (-slope))
            if on:
                dW = slope / mu if (q > Q_EPS or slope > 0.0) else 0.0
                da = slope / mu + 1.0
            else:
                dW = slope / mu - 1.0
                da = slope / mu
            if f == 0.0 and dW < 0.0 and W > theta + wtol:
                h = min(h, (W - theta) / (-dW))
            if f == 1.0 and dW > 0.0 and W < theta - wtol:
                h = min(h, (theta - W) / dW)
            if f > 0.0 and da > 0.0:
                nxt = (math.floor(a / L + Z_EPS) + 1.0) * L
                h = min(h, max(nxt - a, 0.0) / da)
            h = min(max(h, min_h), r)

            q_new = q + slope * h
            if q_new < Q_EPS:
                q_new = 0.0
            if f > 0.0:
                J += h
            if on and q <= Q_EPS and q_new <= Q_EPS:
                T += h
            served += out * h
            q = q_new
            q_min = min(q_min, q)
            q_max = max(q_max, q)
            if h >= r:
                s = length
            else:
                s += h
    return J, T, served, q_min, q_max, q, switches, nrec


def default_dt(values: Sequence[float]) -> float:
    """A thousandth of the shortest duration, floored so that one tiny
    duration cannot demand billions of steps (events are snapped anyway)."""
    positive = [v for v in values if v > 0 and math.isfinite(v)]
    return max(1e-3 * min(positive), 1e-6 * max(positive))


def simulate_queue(
    lam: float, mu: float, theta: float, L: float, L_bar: float, cfg: SimConfig = SimConfig(), q0: float = 0.0
) -> tuple[QueueMeasurement, bool, int, np.ndarray]:
    dt = cfg.dt if cfg.dt is not None else default_dt([L, L_bar, theta])
    P = L + L_bar
    empty = np.zeros((0, 5))
    if L == 0:
        # A skipped queue is never served, so nobody ever joins it.
        m = QueueMeasurement(
            J=0.0, J_bar=P, T=0.0, q_min=q0, q_max=q0, throughput=0.0,
            on_duration=L, off_duration=L_bar, join_switches=0,
        )
        rec = np.array([[0.0, q0, math.inf, 0.0, 0.0], [P, q0, math.inf, 0.0, 0.0]]) if cfg.record else empty
        return m, True, 0, rec
    q = q0
    detected = False
    cycles = 0
    stats = None
    prev_J = math.nan
    while cycles < cfg.horizon:
        stats = _exo_cycle(lam, mu, theta, L, L_bar, q, dt, False, empty)
        cycles += 1
        q_end = stats[5]
        scale = max(1.0, q)
        if abs(q_end - q) <= cfg.convergence_tol * scale and abs(stats[0] - prev_J) <= 1e-9 * P:
            detected = True
            break
        prev_J = stats[0]
        q = q_end
    rec = empty
    if cfg.record:
        buf = np.zeros((int(P / dt) + 10_000, 5))
        stats = _exo_cycle(lam, mu, theta, L, L_bar, q, dt, True, buf)
        rec = buf[: stats[7]].copy()
    J, T, served, q_min, q_max = stats[0], stats[1], stats[2], stats[3], stats[4]
    m = QueueMeasurement(
        J=J, J_bar=P - J, T=T, q_min=q_min, q_max=q_max, throughput=served / P,
        on_duration=L, off_duration=L_bar, join_switches=int(stats[6]),
    )
    return m, detected, cycles, rec


def simulate_exogenous(
    inst: SystemInstance, schedules: Sequence[OnOffSchedule], cfg: SimConfig = SimConfig()
) -> SimTrace:
    check_cycle_consistency(inst, schedules, tol=1e-9)
    if cfg.dt is None:
        dt = default_dt([v for s in schedules for v in (s.on_duration, s.off_duration)] + list(inst.theta))
        cfg = dataclasses.replace(cfg, dt=dt)
    measured, samples = [], []
    detected = True
    cycles = 0
    offset = 0.0
    for params, sched in zip(inst.queues, schedules):
        m, ok, used, rec = simulate_queue(
            params.lam, params.mu, params.theta, sched.on_duration, sched.off_duration, cfg
        )
        measured.append(m)
        if rec.size:
            rec = rec.copy()
            rec[:, 0] += offset
        samples.append(rec)
        offset += sched.on_duration + params.tau
        detected = detected and ok
        cycles = max(cycles, used)
    return SimTrace(detected, cycles, schedules[0].cycle, cfg.dt, measured, samples)


# -- exhaustive-policy kernel -------------------------------------------------

@njit(cache=True)
def _endo_cycle(lam, mu, theta, tau, Tpost, q, ret, dep, acc, pred, learning_rate, dt, record, rec):
    """Simulate one cycle starting when the server reaches queue 0.

    ``ret[i]`` is the return time of the server to queue ``i`` predicted by
    its customers, ``dep[i]`` the last departure from ``i`` and ``acc[i]`` the
    joining time accumulated in the current off period; all times are
    relative to the cycle start and updated in place (re-based to the next
    cycle on exit).  ``pred[i]`` is the off duration customers expect; after
    each off period it moves toward the realized one by ``learning_rate``.  Returns per-queue arrays (arrival, departure, post,
    join span in the completed off period, off duration, q at arrival,
    served) plus the cycle length and number of recorded rows.
    """
    n = lam.shape[0]
    arrival = np.zeros(n)
    departure = np.zeros(n)
    post = np.zeros(n)
    join_off = np.zeros(n)
    off_len = np.zeros(n)
    q_arr = np.zeros(n)
    served = np.zeros(n)
    W = np.zeros(n)
    f = np.zeros(n)
    wtol = 1e-9
    t = 0.0
    nrec = 0
    cap = rec.shape[0]
    total_scale = 0.0
    for i in range(n):
        total_scale += tau[i] + Tpost[i] + theta[i]
    min_h = 1e-13 * total_scale

    for i in range(n):
        # The server reaches queue i.
        arrival[i] = t
        q_arr[i] = q[i]
        join_off[i] = acc[i]
        if dep[i] == dep[i]:  # not nan: there was a previous departure
            off_len[i] = t - dep[i]
            pred[i] += learning_rate * (off_len[i] - pred[i])
        else:
            off_len[i] = pred[i]
        acc[i] = 0.0
        for stage in range(3):  # 0 clearing, 1 post-clearance, 2 switchover
            if stage == 1:
                remaining = Tpost[i]
            elif stage == 2:
                remaining = tau[i]
                departure[i] = t
                dep[i] = t
                ret[i] = t + pred[i]
            else:
                remaining = math.inf
            while True:
                if stage == 0 and q[i] <= Q_EPS:
                    q[i] = 0.0
                    break
                if stage > 0 and remaining <= 0.0:
                    break
                # decisions
                for k in range(n):
                    serving = (k == i) and stage < 2
                    if serving:
                        W[k] = q[k] / mu[k]
                    else:
                        W[k] = q[k] / mu[k] + max(0.0, ret[k] - t)
                    f[k] = 1.0 if W[k] <= theta[k] + wtol * max(1.0, theta[k]) else 0.0
                if record and nrec < cap:
                    rec[nrec, 0] = t
                    rec[nrec, 1] = i
                    for k in range(n):
                        rec[nrec, 2 + k] = q[k]
                        rec[nrec, 2 + n + k] = W[k]
                        rec[nrec, 2 + 2 * n + k] = f[k]
                    nrec += 1
                h = dt
                if stage > 0:
                    h = min(h, remaining)
                for k in range(n):
                    serving = (k == i) and stage < 2
                    if serving:
                        if q[k] > Q_EPS:
                            slope = lam[k] * f[k] - mu[k]
                            if slope < 0.0:
                                h = min(h, q[k] / (-slope))
                        continue
                    gap = ret[k] - t
                    if gap > 0.0:
                        h = min(h, gap)
                        dW = lam[k] * f[k] / mu[k] - 1.0
                    else:
                        dW = lam[k] * f[k] / mu[k]
                    if f[k] == 0.0 and dW < 0.0:
                        h = min(h, max(W[k] - theta[k], 0.0) / (-dW))
                    elif f[k] == 1.0 and dW > 0.0:
                        h = min(h, max(theta[k] - W[k], 0.0) / dW)
                h = max(h, min_h)
                if stage > 0:
                    h = min(h, remaining)
                for k in range(n):
                    serving = (k == i) and stage < 2
                    inflow = lam[k] * f[k]
                    if serving:
                        out = mu[k] if q[k] > Q_EPS else min(mu[k], inflow)
                        served[k] += out * h
                        q[k] = q[k] + (inflow - out) * h
                        if q[k] < Q_EPS:
                            q[k] = 0.0
                        if stage == 1:
                            post[k] += h
                    else:
                        q[k] += inflow * h
                        if f[k] > 0.0:
                            acc[k] += h
                t += h
                remaining -= h
    cycle = t
    for k in range(n):
        ret[k] -= cycle
        dep[k] -= cycle
    return arrival, departure, post, join_off, off_len, q_arr, served, cycle, nrec


@dataclass
class ExhaustiveSimResult(SimTrace):
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    all_joining_set: tuple[int, ...] = ()


def _warm_state(inst: SystemInstance, Tpost: np.ndarray, alpha: np.ndarray):
    """Equilibrium state at the moment the server reaches queue 0, built
    from a candidate ``alpha``; the simulation then checks it is a fixed point."""
    c = inst.rho * inst.theta / (1.0 - inst.rho)
    on = c * alpha + Tpost
    off = inst.total_switchover + on.sum() - on
    arrive = np.concatenate([[0.0], np.cumsum(on + inst.tau)[:-1]])
    span = alpha * inst.theta
    acc = np.maximum(0.0, span - arrive)
    q = inst.lam * acc
    return q, arrive.copy(), arrive - off, acc, off.copy()


def simulate_exhaustive(
    inst: SystemInstance,
    T: Sequence[float] | None = None,
    cfg: SimConfig = SimConfig(),
    warm_alpha: Sequence[float] | None = None,
    join_tol: float | None = None,
) -> ExhaustiveSimResult:
    """Run an exhaustive policy until the cycle repeats, then measure it.

    Customers expect the next off period to last as long as their running
    estimate, which moves toward each realized off period by
    ``cfg.learning_rate``; a repeating cycle is therefore self-confirming.
    Without ``warm_alpha`` the run starts from empty queues and the
    empty-system cycle as expectation.  With it, the run starts on the
    candidate cycle and is reported periodic when one simulated cycle
    reproduces that candidate.
    """
    require_stable(inst)
    n = inst.n
    Tpost = np.zeros(n) if T is None else np.asarray(T, dtype=float)
    if Tpost.shape != (n,) or np.any(Tpost < 0) or not np.all(np.isfinite(Tpost)):
        raise InvalidInstanceError("simulation needs finite post-clearance durations >= 0")
    if inst.total_switchover + Tpost.sum() == 0.0:
        raise InvalidInstanceError("the server never leaves the queue: the exhaustive cycle has zero length")
    lam, mu, theta, tau = inst.lam, inst.mu, inst.theta, inst.tau
    dt = cfg.dt if cfg.dt is not None else default_dt(list(theta) + [inst.total_switchover])
    if warm_alpha is None:
        q = np.zeros(n)
        ret = np.concatenate([[0.0], np.cumsum(Tpost + tau)[:-1]])
        dep = np.full(n, np.nan)
        acc = np.zeros(n)
        pred = np.full(n, inst.total_switchover + Tpost.sum())
    else:
        warm_alpha = np.asarray(warm_alpha, dtype=float)
        q, ret, dep, acc, pred = _warm_state(inst, Tpost, warm_alpha)
    empty = np.zeros((0, 2 + 3 * n))
    detected = False
    prev = None
    start_state = None
    if warm_alpha is not None:
        # Certify the candidate by checking that one cycle maps the state
        # onto itself.  Equilibria with heavily loaded queues can be unstable
        # under adaptive expectations, so waiting for two simulated cycles to
        # agree would let round-off grow first.
        start_state = np.concatenate([q, ret, dep, acc, pred])
    out = None
    cycles = 0
    while cycles < cfg.horizon:
        out = _endo_cycle(lam, mu, theta, tau, Tpost, q, ret, dep, acc, pred, cfg.learning_rate, dt, False, empty)
        cycles += 1
        if start_state is not None:
            state = np.concatenate([q, ret, dep, acc, pred])
            scale = max(1.0, float(np.abs(start_state).max()))
            gap = float(np.abs(state - start_state).max())
            start_state = None
            if gap <= cfg.convergence_tol * scale:
                detected = True
                break
        signature = np.concatenate([out[5], out[1] - out[0], out[4]])
        if prev is not None:
            scale = max(1.0, float(np.abs(signature).max()))
            drift = max(float(np.abs(signature - prev).max()), float(np.abs(pred - out[4]).max()))
            if drift <= cfg.convergence_tol * scale:
                detected = True
                break
        prev = signature
    samples = []
    if cfg.record:
        buf = np.zeros((int(out[7] / dt) + 10_000 * n, 2 + 3 * n))
        out = _endo_cycle(lam, mu, theta, tau, Tpost, q, ret, dep, acc, pred, cfg.learning_rate, dt, True, buf)
        samples = [buf[: out[8]].copy()]
    arrival, departure, post, join_off, off_len, q_arr, served, cycle, _ = out
    alpha = join_off / theta
    tol = join_tol if join_tol is not None else 1e-7 * max(1.0, cycle)
    measured = []
    members = []
    for i in range(n):
        J_bar = off_len[i] - join_off[i]
        if J_bar <= tol:
            members.append(i)
        measured.append(
            QueueMeasurement(
                J=join_off[i] + (departure[i] - arrival[i]),
                J_bar=J_bar,
                T=post[i],
                q_min=0.0,
                q_max=q_arr[i],
                throughput=served[i] / cycle,
                on_duration=departure[i] - arrival[i],
                off_duration=off_len[i],
                alpha=alpha[i],
            )
        )
    return ExhaustiveSimResult(
        period_detected=detected,
        cycles=cycles,
        cycle_length=cycle,
        dt=dt,
        measured=measured,
        samples=samples,
        alpha=alpha,
        all_joining_set=tuple(members),
    )
