"""Command-line interface.

Subcommands: endurance, sweep, simulate, calibrate, rank, serve.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import __version__
from .core import ThreeCCParams, integrate_profile
from .endurance import endurance_time, joint_fatigue_ranking, sweep
from .errors import FatigueSimError
from .harness import PRESET_MODELS, SimConfig, calibrate_bounds, preset_task, simulate
from .traceio import load_bound_table, read_trace, write_bound_table, write_trace

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}: {exc}") from exc


def _add_params(p: argparse.ArgumentParser):
    p.add_argument("--f", type=float, default=1.0, help="fatigue rate F (1/s)")
    p.add_argument("--r-coef", type=float, default=0.05, help="recovery rate R (1/s)")
    p.add_argument("--rest-mult", type=float, default=1.0, help="rest recovery multiplier r")
    p.add_argument("--ld", type=float, default=10.0, help="force development factor")
    p.add_argument("--lr", type=float, default=10.0, help="force relaxation factor")


def build_parser() -> _Parser:
    parser = _Parser(prog="fatiguesim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("endurance", help="endurance time for a constant load")
    p.add_argument("--tl", type=float, required=True, help="target load in %%MVC")
    _add_params(p)
    p.add_argument("--dt", type=float, default=1 / 30)
    p.add_argument("--horizon", type=float, default=10_000.0)
    p.add_argument("--out", help="also write the load-profile trace here")
    p.add_argument("--format", choices=["csv", "binary", "json"], default=None)

    p = sub.add_parser("sweep", help="endurance over an (F, R, r) grid")
    p.add_argument("--f", type=_float_list, required=True, help="comma-separated F values")
    p.add_argument("--r-coef", type=_float_list, required=True, help="comma-separated R values")
    p.add_argument("--rest-mult", type=_float_list, default=[1.0], help="comma-separated r values")
    p.add_argument("--tl", type=float, required=True)
    p.add_argument("--dt", type=float, default=1 / 30)
    p.add_argument("--horizon", type=float, default=10_000.0)
    p.add_argument("--out", help="CSV output path (stdout when omitted)")

    p = sub.add_parser("simulate", help="run a chain task through the fatigue pipeline")
    p.add_argument("--model", choices=sorted(PRESET_MODELS), default="arm")
    p.add_argument("--task", choices=["hold", "reach", "hop", "intermittent"], default="hold")
    p.add_argument("--duration", type=float, default=20.0)
    _add_params(p)
    p.add_argument("--no-fatigue", action="store_true")
    p.add_argument("--bounds", help="bound table file (calibrated on the task when omitted)")
    p.add_argument("--bounds-task", default="calibrated", help="task column in the bounds file, or 'max'")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--init", choices=["rested", "random"], default="rested")
    p.add_argument("--out", required=True, help="trace output path")
    p.add_argument("--format", choices=["csv", "binary", "json"], default=None)

    p = sub.add_parser("calibrate", help="estimate torque bounds from an unfatigued run")
    p.add_argument("--model", choices=sorted(PRESET_MODELS), default="arm")
    p.add_argument("--task", choices=["hold", "reach", "hop", "intermittent"], default="reach")
    p.add_argument("--duration", type=float, default=12.0)
    p.add_argument("--out", required=True, help="bound table output path")

    p = sub.add_parser("rank", help="rank trace DoFs by fatigue")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", help="CSV output path (stdout when omitted)")

    p = sub.add_parser("serve", help="start the live steering service")
    p.add_argument("--host", default=os.environ.get("FATIGUESIM_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(os.environ.get("FATIGUESIM_PORT", "8765")))

    return parser


def _params_from(args) -> ThreeCCParams:
    return ThreeCCParams(args.f, args.r_coef, args.rest_mult, args.ld, args.lr)


def _cmd_endurance(args) -> int:
    if args.tl <= 0:
        raise _UsageError("TL must be positive")
    params = _params_from(args)
    res = endurance_time(args.tl, params, dt=args.dt, horizon=args.horizon)
    if res.failure_detected:
        print(f"endurance_time={res.endurance_time:.4f}s failure=True peak_ma={res.peak_ma:.2f}")
    else:
        print(f"endurance_time=inf failure=False horizon={args.horizon}s peak_ma={res.peak_ma:.2f}")
    if args.out:
        horizon = min(args.horizon, res.endurance_time * 1.5 if res.failure_detected else args.horizon)
        trace = integrate_profile([(0.0, args.tl)], params, args.dt, duration=horizon)
        write_trace(trace, args.out, args.format)
        print(f"trace written to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    if args.tl <= 0:
        raise _UsageError("TL must be positive")
    grid = sweep(args.f, args.r_coef, args.rest_mult, args.tl, dt=args.dt, horizon=args.horizon)
    text = grid.to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"{len(grid.results)} cells written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_simulate(args) -> int:
    model = PRESET_MODELS[args.model]()
    task = preset_task(args.task, model)
    cfg = SimConfig(
        duration=args.duration,
        params=_params_from(args),
        fatigue_enabled=not args.no_fatigue,
        init=args.init,
        seed=args.seed,
    )
    if args.bounds:
        bounds = load_bound_table(args.bounds, args.bounds_task)
    else:
        bounds = calibrate_bounds(model, task, SimConfig(duration=min(10.0, args.duration)))
    trace = simulate(model, task, cfg, bounds=bounds)
    write_trace(trace, args.out, args.format)
    print(f"{len(trace)} control ticks written to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    model = PRESET_MODELS[args.model]()
    task = preset_task(args.task, model)
    table = calibrate_bounds(model, task, SimConfig(duration=args.duration))
    write_bound_table(table, args.out, task=args.task)
    print(f"bounds for {len(table)} DoFs written to {args.out}")
    return 0


def _cmd_rank(args) -> int:
    trace = read_trace(args.trace)
    ranks = joint_fatigue_ranking(trace)
    lines = ["dof,peak_mf,integral_mf"]
    lines += [f"{r.dof},{r.peak_mf!r},{r.integral_mf!r}" for r in ranks]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_serve(args) -> int:
    from .service import run_service

    run_service(args.host, args.port)
    return 0


_COMMANDS = {
    "endurance": _cmd_endurance,
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "rank": _cmd_rank,
    "serve": _cmd_serve,
}


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return USAGE_ERROR
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (FatigueSimError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except KeyboardInterrupt:
        return RUNTIME_ERROR


def main() -> None:
    sys.exit(cli())
