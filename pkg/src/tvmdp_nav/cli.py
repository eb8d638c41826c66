"""Command-line entry point ``tvmdp-nav``.

Any scenario key can be overridden with ``--set a.b=value`` or the
shorthand ``--a.b=value``; values are parsed as YAML scalars/lists.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np
import yaml

from . import io
from .baselines import PLANNERS, SearchSpaceTooLarge, plan
from .scenario import ScenarioError, bundled_scenarios, load_scenario
from .sim import SWEEPS, build_problem, format_timing_table, metrics_campaign, run_episode, \
    spawn_agents, timing_benchmark
from .spaces import discretize_state

log = logging.getLogger("tvmdp_nav")


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def _planner_list(text):
    names = _csv_list(str)(text)
    bad = [n for n in names if n not in PLANNERS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown planner {bad[0]!r}; choose from {sorted(PLANNERS)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="gyre_5agents",
                        help="scenario file or bundled name (%(default)s)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--planner", choices=sorted(PLANNERS), help="override planner.kind")
    common.add_argument("--out", help="output file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario key by dotted path (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tvmdp-nav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="{plan,simulate,campaign,bench,scenarios}")
    sp = sub.add_parser("plan", parents=[common], help="compute one policy; print first action and value")
    sp = sub.add_parser("simulate", parents=[common], help="run one episode and write its trajectory CSV")
    sp.add_argument("--record-timing", action="store_true", help="include plan wall-clock in the CSV")
    sp = sub.add_parser("campaign", parents=[common], help="seeded trials per agent count; metrics JSON")
    sp.add_argument("--agents", type=_csv_list(int), default=[5, 6, 7, 8])
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--planners", type=_planner_list, default=None)
    sp = sub.add_parser("bench", parents=[common], help="planner timing sweeps; timing JSON")
    sp.add_argument("--sweep", choices=sorted(SWEEPS) + ["all"], default="all")
    sp.add_argument("--values", type=_csv_list(float), help="override the sweep values")
    sp.add_argument("--planners", type=_planner_list, default=list(PLANNERS))
    sp.add_argument("--cap-s", type=float, default=600.0, help="per-entry time cap in seconds")
    sub.add_parser("scenarios", help="list bundled scenarios")
    return p


def _split_overrides(parser, extra: list[str]) -> dict:
    """Collect ``--a.b=v`` / ``--a.b v`` leftovers; anything else is an error."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            parser.error(f"unrecognized arguments: {' '.join(extra[i:])}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
        else:
            if i + 1 >= len(extra):
                parser.error(f"missing value for {tok}")
            key, value = tok[2:], extra[i + 1]
            i += 1
        out[key] = value
        i += 1
    return out


def _parse_value(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _overrides(parser, args, extra) -> dict:
    raw = {}
    for item in args.set:
        if "=" not in item:
            parser.error(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        raw[k] = v
    raw.update(_split_overrides(parser, extra))
    out = {k: _parse_value(v) for k, v in raw.items()}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.planner is not None:
        out["planner.kind"] = args.planner
    return out


def _cmd_plan(sc, args) -> int:
    agents = spawn_agents(sc, np.random.default_rng(sc.seed))
    problem = build_problem(sc, sc.robot_start, agents, sc.t0)
    start = discretize_state(sc.robot_start, sc.grid)
    policy = plan(sc.planner_kind, problem, start)
    a = policy.first_action
    u = sc.grid.actions[a]
    doc = {"planner": sc.planner_kind, "start_cell": list(start), "first_action": int(a),
           "first_action_mps": [float(u[0]), float(u[1])], "value": float(policy.value),
           "iterations": policy.iterations, "truncated": bool(policy.truncated)}
    print(f"first action {a} = ({u[0]:+.2f}, {u[1]:+.2f}) m/s, value {policy.value:.6g}")
    if args.out:
        io._write_json(doc, args.out, "plan")
    return 0


def _cmd_simulate(sc, args) -> int:
    res = run_episode(sc, record_timing=args.record_timing or None)
    print(f"reached_goal={res.reached_goal} distance_m={res.distance_traveled:.3f} "
          f"time_s={res.time_to_goal:.2f} emergency_stops={res.emergency_stops}")
    io.write_trajectory(res, args.out or "trajectory.csv")
    return 0


def _cmd_campaign(sc, args) -> int:
    planners = args.planners or [sc.planner_kind]

    def progress(kind, n, i, res):
        log.info("%s agents=%d trial=%d reached=%s stops=%d", kind, n, i, res.reached_goal, res.emergency_stops)

    stats = metrics_campaign(sc, args.agents, args.trials, planners, progress=progress)
    for e in stats["entries"]:
        print(f"{e['planner']:>5} agents={e['agents']} success={e['success_rate']:.2f} "
              f"distance={e['distance_m']['mean']:.2f} time={e['time_s']['mean']:.2f} "
              f"stops={e['emergency_stops']['mean']:.2f}")
    io.write_metrics(stats, args.out or "metrics.json")
    return 0


def _cmd_bench(sc, args) -> int:
    sweeps = sorted(SWEEPS) if args.sweep == "all" else [args.sweep]
    tables = []
    for sw in sweeps:
        values = args.values
        if values is not None and sw == "horizon":
            values = [int(v) for v in values]
        tables.append(timing_benchmark(sc, sw, values, args.planners, cap_s=args.cap_s,
                                       progress=lambda e: log.info("%s", e)))
    print(format_timing_table(tables))
    io.write_timing(tables, args.out or "timing.json")
    return 0


COMMANDS = {"plan": _cmd_plan, "simulate": _cmd_simulate, "campaign": _cmd_campaign, "bench": _cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "scenarios":
        if extra:
            parser.print_usage(sys.stderr)
            return 2
        print("\n".join(bundled_scenarios()))
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _overrides(parser, args, extra)
    except SystemExit as exc:
        return int(exc.code or 2)
    try:
        sc = load_scenario(args.config, overrides)
        return COMMANDS[args.command](sc, args)
    except (ScenarioError, SearchSpaceTooLarge, io.OutputError, json.JSONDecodeError) as exc:
        print(f"tvmdp-nav: error: {exc}", file=sys.stderr)
        return 1
