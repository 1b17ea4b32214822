"""Command-line front end.

Every subcommand reads an instance JSON file and writes JSON or CSV to
``--out`` (default stdout).  Queue numbers in outputs are 1-based.  Exit
status is 1 for invalid input and 2 when a cross-check in ``validate`` fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .endo_opt import optimize_exhaustive, two_queue_closed_form
from .endogenous import ExhaustivePolicy, equilibrium_via_lp, solve_equilibrium, throughput_endo
from .exo_opt import (
    SingleQueueConstraints,
    build_lp,
    optimize_single_queue,
    recover_schedule,
    solve_lp,
)
from .exogenous import (
    OnOffSchedule,
    check_cycle_consistency,
    classify_exogenous,
    exogenous_throughput,
    outcome_trajectory,
    schedules_from_on,
)
from .model import InvalidInstanceError, SingularSetError, SystemInstance, load_instance
from .simplex import LpError
from .simulate import SimConfig, simulate_exhaustive, simulate_exogenous

log = logging.getLogger("onoff")

SIG_DIGITS = 12


class CrossCheckError(RuntimeError):
    """A closed form and an independent check disagree."""


# -- serialization ------------------------------------------------------------

def fmt_number(x: float) -> float | str | None:
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "infinity" if x > 0 else "-infinity"
    return float(f"{x:.{SIG_DIGITS}g}")


def clean(obj: Any) -> Any:
    """Round floats to the published precision, recursively."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return fmt_number(obj)
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(clean(obj), indent=2) + "\n"


def dump_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def _csv_cell(v: Any) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    return "infinity" if math.isinf(v) else f"{v:.{SIG_DIGITS}g}"


def one_based(indices: Sequence[int]) -> list[int]:
    return [int(i) + 1 for i in indices]


# -- argument parsing helpers -------------------------------------------------

def parse_floats(text: str) -> list[float]:
    values = []
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if part.lower() in ("inf", "infinity"):
            values.append(math.inf)
            continue
        try:
            values.append(float(part))
        except ValueError:
            raise InvalidInstanceError(f"not a number: {part!r}") from None
    return values


def parse_T(text: str | None, n: int) -> list[float]:
    if text is None:
        return [0.0] * n
    values = parse_floats(text)
    if len(values) != n:
        raise InvalidInstanceError(f"--T needs {n} values, got {len(values)}")
    return values


def parse_schedule(text: str, inst: SystemInstance) -> list[OnOffSchedule]:
    """A schedule is a JSON file ``{"on": [...], "off": [...]}`` (``off``
    optional) or inline: ``L:Lbar,...`` pairs, or on durations only, with off
    durations then derived from cycle consistency."""
    path = Path(text)
    if path.suffix == ".json" or path.is_file():
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInstanceError(f"cannot read schedule file: {exc}") from None
        if not isinstance(data, dict) or "on" not in data:
            raise InvalidInstanceError('schedule JSON must be an object with an "on" list')
        on = [float(v) for v in data["on"]]
        off = data.get("off")
        if off is None:
            return schedules_from_on(inst, on)
        return [OnOffSchedule(a, float(b)) for a, b in zip(on, off, strict=True)]
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if parts and all(":" in p for p in parts):
        pairs = [parse_floats(p.replace(":", ",")) for p in parts]
        return [OnOffSchedule(a, b) for a, b in pairs]
    on = parse_floats(text)
    if inst.n == 1:
        raise InvalidInstanceError("a single queue needs an explicit L:Lbar schedule")
    return schedules_from_on(inst, on)


def parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise InvalidInstanceError(f"--grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start or start < 0:
        raise InvalidInstanceError("--grid needs 0 <= start <= stop and step > 0")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def sim_config(args: argparse.Namespace, record: bool = False) -> SimConfig:
    return SimConfig(dt=args.dt, horizon=args.horizon, record=record)


# -- subcommands --------------------------------------------------------------

def cmd_eq_exo(args: argparse.Namespace, inst: SystemInstance) -> str:
    if args.schedule is None:
        raise InvalidInstanceError("eq-exo needs --schedule")
    schedules = parse_schedule(args.schedule, inst)
    if len(schedules) != inst.n:
        raise InvalidInstanceError(f"schedule has {len(schedules)} entries for {inst.n} queues")
    queues = []
    for pos, (params, sched) in enumerate(zip(inst.queues, schedules), start=1):
        outcome = classify_exogenous(params, sched)
        entry = {"queue": pos, "L": sched.on_duration, "L_bar": sched.off_duration, **outcome.to_dict()}
        if args.points:
            entry["trace"] = [
                {"t": t, "q": q, "W": w} for t, q, w in outcome_trajectory(params, sched, outcome, args.points)
            ]
        queues.append(entry)
    result: dict[str, Any] = {
        "queues": queues,
        "throughput": exogenous_throughput(inst, schedules, "throughput"),
        "reward": exogenous_throughput(inst, schedules, "reward"),
    }
    if args.format == "csv":
        header = ["queue", "pattern", "L", "L_bar", "J", "J_bar", "T", "q_min", "q_max"]
        rows = [[q[h] for h in header] for q in queues]
        return dump_csv(header, rows)
    return dump_json(result)


def cmd_opt_exo(args: argparse.Namespace, inst: SystemInstance) -> str:
    if inst.n == 1:
        if args.L_max is None or args.beta is None:
            raise InvalidInstanceError("a single queue needs --L-max and --beta")
        sched, T, value = optimize_single_queue(inst.queues[0], SingleQueueConstraints(args.L_max, args.beta))
        pattern = classify_exogenous(inst.queues[0], sched).pattern
        result = {
            "L": [sched.on_duration],
            "L_bar": [sched.off_duration],
            "T": [T],
            "objective": args.objective,
            "throughput": value,
            "patterns": [pattern],
        }
        return dump_json(result)
    lp = build_lp(inst, args.objective)
    sol = solve_lp(lp)
    log.info("schedule program solved in %d pivots, g=%g", sol.iterations, sol.g)
    try:
        schedules, T = recover_schedule(sol)
    except LpError as exc:
        raise InvalidInstanceError(
            f"{exc}; the supremum is only approached by ever longer cycles (objective {sol.objective:.12g})"
        ) from None
    patterns = [classify_exogenous(q, s).pattern for q, s in zip(inst.queues, schedules)]
    result = {
        "L": [s.on_duration for s in schedules],
        "L_bar": [s.off_duration for s in schedules],
        "T": T,
        "objective": args.objective,
        args.objective: sol.objective,
        "patterns": patterns,
        "lp": {"g": sol.g, "x": sol.x, "x_bar": sol.x_bar, "y": sol.y, "pivots": sol.iterations},
    }
    return dump_json(result)


def cmd_eq_endo(args: argparse.Namespace, inst: SystemInstance) -> str:
    policy = ExhaustivePolicy(tuple(parse_T(args.T, inst.n)))
    eq = solve_equilibrium(inst, policy)
    result = {
        "alpha": eq.alpha,
        "all_joining_set": one_based(eq.all_joining_set),
        "on_durations": eq.on_durations,
        "off_durations": eq.off_durations,
        "not_joining": eq.not_joining,
        "throughput": throughput_endo(inst, policy, eq, "throughput"),
        "reward": throughput_endo(inst, policy, eq, "reward"),
        "pivot_steps": eq.pivot_steps,
    }
    return dump_json(result)


def cmd_opt_endo(args: argparse.Namespace, inst: SystemInstance) -> str:
    policy, value, trace = optimize_exhaustive(inst, args.objective)
    tr = trace.to_dict()
    tr["all_joining_set"] = one_based(tr["all_joining_set"])
    tr["ladder"] = one_based(tr["ladder"])
    if tr["selected_queue"] is not None:
        tr["selected_queue"] += 1
    result = {"T_star": list(policy.T), "objective": args.objective, "value": value, "trace": tr}
    return dump_json(result)


def cmd_simulate(args: argparse.Namespace, inst: SystemInstance) -> str:
    n = inst.n
    if args.schedule is not None:
        schedules = parse_schedule(args.schedule, inst)
        trace = simulate_exogenous(inst, schedules, sim_config(args, record=True))
        rows, header = _exo_rows(trace, schedules, n)
    else:
        T = parse_T(args.T, n)
        warm = solve_equilibrium(inst, T).alpha if args.warm else None
        trace = simulate_exhaustive(inst, T, sim_config(args, record=True), warm_alpha=warm)
        rows, header = _endo_rows(trace, inst, T)
    if not trace.period_detected:
        log.warning("no periodic orbit within %d cycles; reporting the last cycle", trace.cycles)
    if args.format == "json":
        summary = {
            "period_detected": trace.period_detected,
            "cycles": trace.cycles,
            "cycle_length": trace.cycle_length,
            "dt": trace.dt,
            "throughput": trace.throughput,
            "queues": [dict(queue=i + 1, **vars(m)) for i, m in enumerate(trace.measured)],
        }
        if hasattr(trace, "all_joining_set"):
            summary["alpha"] = trace.alpha
            summary["all_joining_set"] = one_based(trace.all_joining_set)
        return dump_json(summary)
    return dump_csv(header, rows)


def _header(n: int) -> list[str]:
    cols = ["t"]
    for name in ("q", "W", "join", "on"):
        cols += [f"{name}_{i + 1}" for i in range(n)]
    return cols


def _exo_rows(trace, schedules, n: int):
    """Resample the per-queue recordings on a common time grid."""
    cycle = schedules[0].cycle
    times = np.unique(np.concatenate([s[:, 0] % cycle for s in trace.samples if s.size]))
    rows = []
    for t in times:
        q, W, join, on = [], [], [], []
        for rec in trace.samples:
            local = rec[:, 0] % cycle
            order = np.argsort(local, kind="stable")
            local, data = local[order], rec[order]
            k = max(0, int(np.searchsorted(local, t, side="right")) - 1)
            row = data[k]
            q.append(float(np.interp(t, local, data[:, 1])))
            W.append(row[2])
            join.append(row[3])
            on.append(row[4])
        rows.append([t, *q, *W, *join, *on])
    return rows, _header(n)


def _endo_rows(trace, inst: SystemInstance, T):
    n = inst.n
    rec = trace.samples[0]
    rows = []
    for r in rec:
        at = int(r[1])
        on = [1.0 if i == at else 0.0 for i in range(n)]
        rows.append([r[0], *r[2 : 2 + n], *r[2 + n : 2 + 2 * n], *r[2 + 2 * n : 2 + 3 * n], *on])
    return rows, _header(n)


def _sweep_point(payload):
    inst, j, value, objective = payload
    T = [0.0] * inst.n
    T[j] = value
    eq = solve_equilibrium(inst, T)
    return [value, throughput_endo(inst, T, eq, objective), *eq.alpha]


def cmd_sweep(args: argparse.Namespace, inst: SystemInstance) -> str:
    if args.queue is None or not 1 <= args.queue <= inst.n:
        raise InvalidInstanceError(f"--queue must be between 1 and {inst.n}")
    grid = parse_grid(args.grid)
    j = args.queue - 1
    tasks = [(inst, j, float(v), args.objective) for v in grid]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))  # map keeps grid order
    else:
        rows = [_sweep_point(t) for t in tasks]
    header = [f"T_{args.queue}", args.objective] + [f"alpha_{i + 1}" for i in range(inst.n)]
    if args.format == "json":
        return dump_json({"columns": header, "rows": rows})
    return dump_csv(header, rows)


def cmd_validate(args: argparse.Namespace, inst: SystemInstance) -> str:
    report: list[tuple[str, float, float]] = []  # (check, discrepancy, tolerance)
    notes: list[str] = []

    schedules = None
    if args.schedule is not None:
        schedules = parse_schedule(args.schedule, inst)
        check_cycle_consistency(inst, schedules)
    elif inst.n >= 2:
        sol = solve_lp(build_lp(inst, "throughput"))
        try:
            schedules, _ = recover_schedule(sol)
            value = exogenous_throughput(inst, schedules)
            report.append(("schedule program vs re-evaluated throughput", abs(value - sol.objective), 1e-7 * max(1.0, abs(value))))
        except LpError:
            notes.append("schedule program optimum has no finite cycle; exogenous simulation skipped")
    if schedules is not None:
        trace = simulate_exogenous(inst, schedules, sim_config(args))
        if not trace.period_detected:
            notes.append("exogenous simulation did not reach a periodic orbit")
        worst, tol = 0.0, math.inf
        for params, sched, m in zip(inst.queues, schedules, trace.measured):
            o = classify_exogenous(params, sched)
            gap = max(abs(m.J - o.J), abs(m.J_bar - o.J_bar), abs(m.T - o.T), abs(m.q_min - o.q_min), abs(m.q_max - o.q_max))
            worst = max(worst, gap)
            tol = min(tol, 5 * (params.lam + params.mu) * trace.dt)
        report.append(("classifier vs simulator (J, J_bar, T, q_min, q_max)", worst, tol))

    if all(q.stable for q in inst.queues):
        T = parse_T(args.T, inst.n)
        eq = solve_equilibrium(inst, T)
        lp_alpha = equilibrium_via_lp(inst, T)
        report.append(("pivoting vs greatest-element alpha", float(np.abs(eq.alpha - lp_alpha).max()), 1e-8))
        if inst.total_switchover + sum(T) == 0.0:
            notes.append("the exhaustive cycle has zero length; simulation skipped")
        else:
            sim = simulate_exhaustive(inst, T, sim_config(args), warm_alpha=eq.alpha)
            report.append(("closed-form cycle vs simulated cycle (alpha)", float(np.abs(sim.alpha - eq.alpha).max()), 1e-6))
            if not (sim.period_detected and sim.cycles == 1):
                report.append(("closed-form cycle returns to its start after one simulated cycle", 1.0, 0.0))
            cold = simulate_exhaustive(inst, T, sim_config(args))
            if cold.period_detected:
                report.append(("cold-start simulation alpha", float(np.abs(cold.alpha - eq.alpha).max()), 1e-6))
            else:
                notes.append(f"cold-start simulation did not settle within {cold.cycles} cycles")
        if inst.n == 2:
            closed = two_queue_closed_form(inst)
            _, value, _ = optimize_exhaustive(inst)
            report.append(("two-queue closed form vs ladder search (objective)", abs(closed.objective - value), 1e-7))
    else:
        notes.append("some queue has lambda >= mu; exhaustive-policy checks skipped")

    failed = [r for r in report if not r[1] <= r[2]]
    lines = ["FAIL" if failed else "OK"]
    for name, gap, tol in report:
        lines.append(f"  {name}: {gap:.3e} (tolerance {tol:.1e}){'  <-- FAIL' if not gap <= tol else ''}")
    lines += [f"  note: {n}" for n in notes]
    text = "\n".join(lines) + "\n"
    if failed:
        raise CrossCheckError(text)
    return text


COMMANDS = {
    "eq-exo": cmd_eq_exo,
    "opt-exo": cmd_opt_exo,
    "eq-endo": cmd_eq_endo,
    "opt-endo": cmd_opt_endo,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 like other invalid input; 2 is reserved for
    failed cross-checks."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="onoff", description="Strategic on-off queueing solvers.")
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = {"simulate": "csv", "sweep": "csv", "validate": "text"}
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--instance", required=True, help="instance JSON file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=["json", "csv", "text"], default=defaults.get(name, "json"))
        p.add_argument("--objective", choices=["throughput", "reward"], default="throughput")
        p.add_argument("--schedule", help="on/off durations: JSON file, L:Lbar pairs or on durations")
        p.add_argument("--T", help="post-clearance durations, comma separated ('infinity' allowed)")
        p.add_argument("--dt", type=float, help="simulation time step")
        p.add_argument("--horizon", type=int, default=400, help="maximum simulated cycles")
        if name == "eq-exo":
            p.add_argument("--points", type=int, default=0, help="trajectory samples per cycle")
        if name == "opt-exo":
            p.add_argument("--L-max", dest="L_max", type=float)
            p.add_argument("--beta", type=float)
        if name == "simulate":
            p.add_argument("--warm", action="store_true", help="start from the closed-form cycle")
        if name == "sweep":
            p.add_argument("--queue", type=int, help="1-based queue whose post-clearance time varies")
            p.add_argument("--grid", default="0:2:0.05", help="start:stop:step")
            p.add_argument("--workers", type=int, default=1)
    return parser


def run(argv: Sequence[str] | None = None) -> tuple[int, str]:
    args = build_parser().parse_args(argv)
    try:
        inst = load_instance(args.instance)
        text = COMMANDS[args.command](args, inst)
    except FileNotFoundError as exc:
        return 1, f"error: {exc}\n"
    except (InvalidInstanceError, SingularSetError) as exc:
        return 1, f"error: {exc}\n"
    except CrossCheckError as exc:
        return 2, str(exc)
    return 0, text


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("ONOFF_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    code, text = run(argv)
    try:
        if code == 0:
            args = build_parser().parse_args(argv)
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
        elif code == 2:
            sys.stdout.write(text)
        else:
            sys.stderr.write(text)
        sys.stdout.flush()
    except BrokenPipeError:
        # the reader went away (e.g. piped into head); silence the shutdown flush
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return code


if __name__ == "__main__":
    sys.exit(main())
