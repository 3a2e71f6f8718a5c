"""Command-line entry point: ``goldilocks <command> [--config FILE] ...``.

Exit codes: 0 success, 2 bad config or arguments, 3 integration failure,
4 no Goldilocks dose in [0, u_max].
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    FinalSizeQuery,
    auc_trapezoid,
    auc_v,
    level_grid,
    u_infinity,
)
from .config import (
    ConfigError,
    PlanSpec,
    RunConfig,
    load_config,
    load_patient_a,
    output_dir,
)
from .integrator import NO_DRUG, IntegrationError, Trajectory, simulate
from .model import reproduction_number
from .planner import (
    InvalidPlanError,
    NoDoseFoundError,
    ScenarioVerdict,
    SingleIntervalPlan,
    build_schedule,
    goldilocks_dose,
    run_plan,
)

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRATION, EXIT_NO_DOSE = 0, 2, 3, 4
TRAJECTORY_COLUMNS = ("time", "U", "I", "V", "D", "eta", "event")


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(f"{self.prog}: {message}")


# file output

def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _table(columns, rows, meta: dict) -> str:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def trajectory_table(traj: Trajectory, meta: dict) -> str:
    flags = traj.event_flags
    eta = traj.eta
    rows = (
        (repr(float(t)), *(repr(float(x)) for x in y), repr(float(e)), int(f))
        for t, y, e, f in zip(traj.t, traj.y, eta, flags)
    )
    return _table(TRAJECTORY_COLUMNS, rows, meta)


def _obs(value, method, **extra):
    entry = {"value": None if value is None else float(value), "method": method}
    entry.update(extra)
    return entry


def _verdict_dict(v: ScenarioVerdict) -> dict:
    second = v.observed_second_peak
    return {
        "kind": v.kind.value,
        "summary": v.summary(),
        "qss": v.qss,
        "rebound_expected": v.rebound_expected,
        "u_at_tf": _obs(v.u_at_tf, "simulation"),
        "i_at_tf": _obs(v.i_at_tf, "simulation"),
        "v_at_tf": _obs(v.v_at_tf, "simulation"),
        "u_infinity_predicted": _obs(v.predicted_u_infinity, "closed-form"),
        "u_infinity_simulated": _obs(v.simulated_u_infinity, "simulation"),
        "v_peak": _obs(v.v_peak.value, "simulation", time=v.v_peak.time),
        "observed_second_peak": None if second is None
        else _obs(second[1], "simulation", time=second[0]),
    }


class Run:
    """Effective settings of one invocation."""

    def __init__(self, args):
        path = getattr(args, "config", None)
        cfg = load_config(path) if path else load_patient_a()
        integ = cfg.integrator
        if getattr(args, "rtol", None) is not None:
            integ = replace(integ, rtol=args.rtol)
        if getattr(args, "atol", None) is not None:
            integ = replace(integ, atol=args.atol)
        if not (integ.rtol > 0 and integ.atol > 0):
            raise ConfigError("tolerances must be > 0")
        cfg = replace(cfg, integrator=integ)
        if getattr(args, "horizon", None) is not None:
            if not args.horizon > cfg.t0:
                raise ConfigError("'--horizon' must exceed t0")
            cfg = replace(cfg, horizon=args.horizon)
        if getattr(args, "seed", None) is not None:
            cfg = replace(cfg, seed=args.seed)
        self.cfg: RunConfig = cfg
        self.out = output_dir(cfg, getattr(args, "out", None))
        self.command: str = args.command
        self.written: list[Path] = []

    @property
    def tol(self) -> dict:
        return {"rtol": self.cfg.integrator.rtol, "atol": self.cfg.integrator.atol}

    def path(self, suffix: str) -> Path:
        return self.out / f"{self.cfg.output.prefix}_{self.command}_{suffix}"

    def write(self, suffix: str, text: str) -> Path:
        p = self.path(suffix)
        atomic_write(p, text)
        self.written.append(p)
        return p

    def meta(self, command: str) -> dict:
        return {
            "software": f"goldilocks {__version__}",
            "command": command,
            "integrator": f"dopri5 rtol={self.cfg.integrator.rtol!r} atol={self.cfg.integrator.atol!r}",
            "grid_dt": repr(self.cfg.output.dt),
        }

    def report(self, command: str, body: dict, caught) -> dict:
        doc = {
            "software": {"name": "goldilocks", "version": __version__},
            "command": command,
            "integrator": {"method": "dopri5", **self.tol, "grid_dt": self.cfg.output.dt},
            "inputs": self.cfg.to_dict(),
        }
        doc.update(body)
        doc["warnings"] = [str(w.message) for w in caught]
        return doc

    def write_report(self, doc: dict) -> Path:
        return self.write("report.json", json.dumps(doc, indent=2) + "\n")


def _plan_from_args(run: Run, args, need: bool) -> SingleIntervalPlan | None:
    spec = run.cfg.plan
    t_i = args.ti if args.ti is not None else (spec.t_i if spec else None)
    t_f = args.tf if args.tf is not None else (spec.t_f if spec else None)
    dose = getattr(args, "dose", None)
    if dose is None and spec is not None:
        dose = spec.dose
    if None in (t_i, t_f, dose):
        if need:
            raise ConfigError("plan needs t_i, t_f and dose (from 'plan' or --ti/--tf/--dose)")
        return None
    pk = run.cfg.pk()
    plan = SingleIntervalPlan(t_i, t_f, dose, pk.period_t)
    if dose > pk.u_max:
        raise InvalidPlanError(f"dose {dose} exceeds u_max={pk.u_max}")
    run.cfg = replace(run.cfg, plan=PlanSpec(t_i, t_f, dose), schedule=None)
    return plan


def _simulate_cfg(run: Run) -> Trajectory:
    cfg = run.cfg
    pk = cfg.pkpd if cfg.pkpd is not None else NO_DRUG
    return simulate(cfg.initial_state, cfg.model, pk, cfg.dose_schedule(), t0=cfg.t0,
                    dt=cfg.output.dt, **run.tol)


# commands

def cmd_simulate(args, run: Run, caught) -> int:
    cfg = run.cfg
    traj = _simulate_cfg(run)
    rn = reproduction_number(cfg.model)
    doses = [t for t, u in traj.events if u > 0]
    start = cfg.initial_state if not doses else traj.state_at(doses[-1])
    obs = {
        "r": _obs(rn.r, "closed-form"),
        "u_star": _obs(rn.u_star, "closed-form"),
        "u_infinity_predicted": _obs(
            u_infinity(FinalSizeQuery.from_params(cfg.model, start, rn.r)), "closed-form",
            from_time=cfg.t0 if not doses else doses[-1],
        ),
        "u_infinity_simulated": _obs(traj.terminal.u, "simulation", time=float(traj.t[-1])),
        "v_peak": _obs(traj.peak.value, "simulation", time=traj.peak.time, interior=traj.peak.interior),
        "auc_v": _obs(auc_trapezoid(traj), "simulation"),
    }
    if not doses:
        obs["auc_v_identity"] = _obs(auc_v(cfg.model, cfg.initial_state, traj.terminal), "closed-form")
    run.write("trajectory.csv", trajectory_table(traj, run.meta("simulate")))
    run.write_report(run.report("simulate", {"observables": obs}, caught))
    return EXIT_OK


def cmd_goldilocks(args, run: Run, caught) -> int:
    cfg = run.cfg
    pk = cfg.pk()
    spec = cfg.plan
    t_i = args.ti if args.ti is not None else (spec.t_i if spec else None)
    t_f = args.tf if args.tf is not None else (spec.t_f if spec else None)
    if t_i is None or t_f is None:
        raise ConfigError("goldilocks needs --ti and --tf (or a 'plan' section)")
    prior = None
    if args.prior_dose is not None:
        prior = build_schedule(SingleIntervalPlan(args.prior_start, t_i, args.prior_dose, pk.period_t),
                               exclude_end=True)
    body = {"search": {"t_i": t_i, "t_f": t_f, "method": args.method, "step": 0.001,
                       "prior": None if prior is None else
                       {"dose": args.prior_dose, "t_start": args.prior_start}}}
    try:
        dose = goldilocks_dose(t_i, t_f, cfg.model, pk, cfg.initial_state, t0=cfg.t0, prior=prior,
                               method=args.method, **run.tol)
    except NoDoseFoundError as exc:
        body["goldilocks_dose"] = None
        body["error"] = str(exc)
        run.write_report(run.report("goldilocks", body, caught))
        print(f"no dose found: {exc}")
        return EXIT_NO_DOSE

    phase = build_schedule(SingleIntervalPlan(t_i, t_f, dose, pk.period_t), max(cfg.horizon, t_f))
    sched = phase if prior is None else prior.merge(phase)
    traj = simulate(cfg.initial_state, cfg.model, pk, sched, t0=cfg.t0, dt=cfg.output.dt, **run.tol)
    s = traj.state_at(t_f)
    rn = reproduction_number(cfg.model)
    body["goldilocks_dose"] = _obs(dose, "simulation-search")
    body["observables"] = {
        "u_star": _obs(rn.u_star, "closed-form"),
        "u_at_tf": _obs(s.u, "simulation"),
        "v_at_tf": _obs(s.v, "simulation"),
        "u_infinity_predicted": _obs(u_infinity(FinalSizeQuery.from_params(cfg.model, s, rn.r)), "closed-form"),
        "u_infinity_simulated": _obs(traj.terminal.u, "simulation"),
        "v_peak": _obs(traj.peak.value, "simulation", time=traj.peak.time),
    }
    run.write_report(run.report("goldilocks", body, caught))
    print(f"goldilocks dose: {dose:.3f} mg")
    return EXIT_OK


def cmd_classify(args, run: Run, caught) -> int:
    plan = _plan_from_args(run, args, need=True)
    cfg = run.cfg
    verdict, traj = run_plan(plan, cfg.model, cfg.pk(), cfg.initial_state, t0=cfg.t0,
                             horizon=max(cfg.horizon, plan.t_f), thresholds=cfg.qss,
                             dt=cfg.output.dt, **run.tol)
    run.write("trajectory.csv", trajectory_table(traj, run.meta("classify")))
    run.write_report(run.report("classify", {"verdict": _verdict_dict(verdict)}, caught))
    print(verdict.summary())
    return EXIT_OK


def cmd_phase(args, run: Run, caught) -> int:
    _plan_from_args(run, args, need=False)
    cfg = run.cfg
    traj = _simulate_cfg(run)
    mp, win = cfg.model, cfg.phase
    rn = reproduction_number(mp)
    u_lo = 0.0 if win.u_min is None else win.u_min
    u_hi = win.u_max if win.u_max is not None else max(float(np.max(traj.u)), 2 * rn.u_star)
    v_hi = win.v_max if win.v_max is not None else 1.1 * max(float(np.max(traj.v)), 1e-12)
    if not (u_hi > u_lo and v_hi > win.v_min and win.nu >= 2 and win.nv >= 2):
        raise ConfigError("'phase' window is empty or has fewer than 2 points per axis")
    uu, vv = np.meshgrid(np.linspace(u_lo, u_hi, win.nu), np.linspace(win.v_min, v_hi, win.nv), indexing="ij")
    level = level_grid(mp, uu, vv)
    ii = (mp.c / mp.p) * vv
    meta = run.meta("phase")
    meta["level"] = "U* - U_inf(U, I, V) with I = (c/p) V"
    rows = ((repr(float(u)), repr(float(v)), repr(float(i)), repr(float(lv)))
            for u, v, i, lv in zip(uu.ravel(), vv.ravel(), ii.ravel(), level.ravel()))
    run.write("level_grid.csv", _table(("U", "V", "I", "level"), rows, meta))
    rows = ((repr(float(t)), repr(float(u)), repr(float(v)), repr(float(i)))
            for t, u, v, i in zip(traj.t, traj.u, traj.v, traj.i))
    run.write("phase_trajectory.csv", _table(("time", "U", "V", "I"), rows, run.meta("phase")))
    k = np.unravel_index(int(np.argmin(level)), level.shape)
    body = {"grid": {"u": [u_lo, u_hi, win.nu], "v": [win.v_min, v_hi, win.nv],
                     "argmin": [float(uu[k]), float(vv[k])], "min_level": float(level[k])},
            "u_star": _obs(rn.u_star, "closed-form")}
    run.write_report(run.report("phase", body, caught))
    return EXIT_OK


SWEEP_COLUMNS = ("dose", "kind", "qss", "u_at_tf", "v_at_tf", "u_infinity_predicted",
                 "u_infinity_simulated", "v_peak", "v_peak_time", "second_peak_time",
                 "second_peak_value", "rebound_expected")


def cmd_sweep(args, run: Run, caught) -> int:
    cfg = run.cfg
    pk = cfg.pk()
    t_i = args.ti if args.ti is not None else (cfg.plan.t_i if cfg.plan else None)
    t_f = args.tf if args.tf is not None else (cfg.plan.t_f if cfg.plan else None)
    if t_i is None or t_f is None:
        raise ConfigError("sweep needs --ti and --tf (or a 'plan' section)")
    rows, verdicts = [], []
    for dose in args.doses:
        plan = SingleIntervalPlan(t_i, t_f, dose, pk.period_t)
        v, _ = run_plan(plan, cfg.model, pk, cfg.initial_state, t0=cfg.t0,
                        horizon=max(cfg.horizon, t_f), thresholds=cfg.qss, dt=cfg.output.dt, **run.tol)
        second = v.observed_second_peak or (None, None)
        rows.append((dose, v.kind.value, v.qss, v.u_at_tf, v.v_at_tf, v.predicted_u_infinity,
                     v.simulated_u_infinity, v.v_peak.value, v.v_peak.time, second[0], second[1],
                     v.rebound_expected))
        verdicts.append({"dose": dose, **_verdict_dict(v)})
    meta = run.meta("sweep")
    meta["interval"] = f"[{t_i!r}, {t_f!r}]"
    run.write("sweep.csv", _table(SWEEP_COLUMNS, ([("" if x is None else x) for x in r] for r in rows), meta))
    run.write_report(run.report("sweep", {"t_i": t_i, "t_f": t_f, "rows": verdicts}, caught))
    return EXIT_OK


def _dose_list(text: str) -> list[float]:
    try:
        doses = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a dose list: {text!r}") from None
    if not doses or any(not np.isfinite(d) or d < 0 for d in doses):
        raise argparse.ArgumentTypeError("doses must be a non-empty list of values >= 0")
    return doses


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", default=S, help="JSON config (default: bundled patient A)")
    common.add_argument("--out", default=S, help="output directory")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--rtol", type=float, default=S)
    common.add_argument("--atol", type=float, default=S)
    common.add_argument("--horizon", type=float, default=S, help="simulation end (days)")

    parser = _Parser(prog="goldilocks", parents=[common],
                     description="Antiviral dosing experiments on a target-cell-limited model.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("simulate", parents=[common], help="simulate the configured schedule")

    g = sub.add_parser("goldilocks", parents=[common], help="search the Goldilocks dose")
    g.add_argument("--ti", type=float)
    g.add_argument("--tf", type=float)
    g.add_argument("--method", choices=("bisection", "scan"), default="bisection")
    g.add_argument("--prior-dose", type=float, help="dose given before t_i (two-step second phase)")
    g.add_argument("--prior-start", type=float, default=4.0, help="start of the prior dosing")

    for name, text in (("classify", "classify a single-interval plan"),
                       ("phase", "level-set grid and phase trajectory")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--ti", type=float)
        p.add_argument("--tf", type=float)
        p.add_argument("--dose", type=float)

    s = sub.add_parser("sweep", parents=[common], help="classify a list of doses")
    s.add_argument("--doses", type=_dose_list, required=True, help="e.g. '21,25,35'")
    s.add_argument("--ti", type=float)
    s.add_argument("--tf", type=float)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "goldilocks": cmd_goldilocks,
    "classify": cmd_classify,
    "phase": cmd_phase,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            run = Run(args)
            return COMMANDS[args.command](args, run, caught)
        except (ConfigError, InvalidPlanError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except IntegrationError as exc:
            print(f"integration failed: {exc}", file=sys.stderr)
            return EXIT_INTEGRATION


if __name__ == "__main__":
    sys.exit(main())
