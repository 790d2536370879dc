"""Command line harness.

Subcommands:
  solve-lpt    solve one local planning task, write path + figure + report
  run-taskset  solve a directory of tasks, write CSV results and aggregates
  regression   run simulation scenarios against expectations
  ab           compare assertive-rule arms on left-turn scenarios
  render-st    draw a station-time diagram from a simulation log
  make-seeds   write the built-in task and scenario files

Exit codes: 0 success, 1 input error, 2 infeasible task or failed check.
The PLANNER_LOG_LEVEL environment variable (error | info | debug) sets the
log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import schemas
from .pipeline import PlannerConfig
from .schemas import SchemaError
from .shape import Infeasible, solve_lpt

logger = logging.getLogger("avplan")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}


def _setup_logging() -> bool:
    raw = os.environ.get("PLANNER_LOG_LEVEL", "info").lower()
    if raw not in _LOG_LEVELS:
        print(f"PLANNER_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, "
              f"got {raw!r}", file=sys.stderr)
        return False
    logging.basicConfig(level=_LOG_LEVELS[raw],
                        format="%(levelname)s %(name)s: %(message)s")
    return True


def _planner_config(args) -> PlannerConfig:
    cfg = PlannerConfig()
    if getattr(args, "rules", None):
        cfg.rules = schemas.load_rules(schemas.read_json(args.rules))
    return cfg


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ------------------------------------------------------------- solve-lpt


def _path_report(result) -> dict:
    return {
        "status": "solved",
        "length": round(result.length, 4),
        "cost": round(result.cost, 4),
        "min_clearance": round(result.clearance_min, 4),
        "max_curvature": round(result.max_curvature(), 5),
        "smoothed": result.smoothed,
        "warning": result.warning,
    }


def cmd_solve_lpt(args) -> int:
    lpt = schemas.load_lpt(schemas.read_json(args.params))
    os.makedirs(args.out, exist_ok=True)
    result = solve_lpt(lpt)
    from .render import render_lpt
    if isinstance(result, Infeasible):
        schemas.write_json(os.path.join(args.out, "report.json"),
                           {"status": "infeasible", "reason": result.reason})
        render_lpt(lpt, os.path.join(args.out, "task.svg"))
        logger.error("task is infeasible: %s", result.reason)
        return 2
    rows = [(round(x, 4), round(y, 4), round(h, 5), round(k, 5))
            for (x, y), h, k in zip(result.polyline.points, result.headings,
                                    result.curvatures)]
    _write_csv(os.path.join(args.out, "path.csv"),
               ["x", "y", "heading", "curvature"], rows)
    schemas.write_json(os.path.join(args.out, "report.json"),
                       _path_report(result))
    # Wall-clock timing goes in a sidecar so the main outputs stay
    # reproducible byte for byte.
    schemas.write_json(os.path.join(args.out, "timings.json"),
                       {"solve_time_s": result.solve_time_s})
    render_lpt(lpt, os.path.join(args.out, "task.svg"), path=result)
    logger.info("solved: length %.2f m, cost %.2f", result.length, result.cost)
    return 0


# ----------------------------------------------------------- run-taskset


def _solve_task_file(path: str) -> dict:
    name = os.path.splitext(os.path.basename(path))[0]
    try:
        lpt = schemas.load_lpt(schemas.read_json(path))
    except SchemaError as e:
        return {"name": name, "status": "input_error", "error": str(e)}
    result = solve_lpt(lpt)
    if isinstance(result, Infeasible):
        return {"name": name, "status": "infeasible", "reason": result.reason}
    out = _path_report(result)
    out["name"] = name
    out["solve_time_s"] = result.solve_time_s
    return out


def cmd_run_taskset(args) -> int:
    if not os.path.isdir(args.params):
        raise SchemaError(f"--params must name a directory of task files, "
                          f"got {args.params!r}")
    files = sorted(os.path.join(args.params, f)
                   for f in os.listdir(args.params) if f.endswith(".json"))
    if not files:
        raise SchemaError(f"no .json task files in {args.params}")
    os.makedirs(args.out, exist_ok=True)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_solve_task_file, files))
    else:
        results = [_solve_task_file(f) for f in files]
    results.sort(key=lambda r: r["name"])

    rows = [(r["name"], r["status"], r.get("length", ""), r.get("cost", ""),
             r.get("min_clearance", ""), r.get("max_curvature", ""))
            for r in results]
    _write_csv(os.path.join(args.out, "results.csv"),
               ["name", "status", "length", "cost", "min_clearance",
                "max_curvature"], rows)
    times = sorted(r["solve_time_s"] for r in results if "solve_time_s" in r)
    schemas.write_json(os.path.join(args.out, "timings.json"), {
        "solve_times_s": {r["name"]: r["solve_time_s"]
                          for r in results if "solve_time_s" in r},
        "p50_s": float(np.percentile(times, 50)) if times else None,
        "p95_s": float(np.percentile(times, 95)) if times else None,
    })
    counts = {"tasks": len(results)}
    for key in ("solved", "infeasible", "input_error"):
        counts[key] = sum(1 for r in results if r["status"] == key)
    schemas.write_json(os.path.join(args.out, "aggregate.json"), counts)
    logger.info("taskset: %(solved)d/%(tasks)d solved, %(infeasible)d "
                "infeasible, %(input_error)d input errors", counts)
    return 0 if counts["input_error"] == 0 else 1


# ------------------------------------------------------------ regression


def _passed(result, expected: str) -> bool:
    if result.planner_error or result.collisions:
        return False
    if expected == "complete":
        return result.completed
    if expected in ("no_collision", "max_duration"):
        return True
    return False


def _run_scenario_doc(item) -> dict:
    doc, rules_path = item
    from .simulator import run
    sc = schemas.load_scenario(doc)
    cfg = PlannerConfig()
    if rules_path:
        cfg.rules = schemas.load_rules(schemas.read_json(rules_path))
    result = run(sc, cfg)
    return {
        "id": sc.id,
        "expected": sc.expected_outcome,
        "completed": result.completed,
        "collisions": result.collisions,
        "min_agent_distance": result.min_agent_distance,
        "time_to_goal": result.time_to_goal,
        "planner_error": result.planner_error,
        "stop_observed": result.stop_observed,
        "passed": _passed(result, sc.expected_outcome),
        "logs": result.logs,
    }


def cmd_regression(args) -> int:
    if args.params:
        if not os.path.isdir(args.params):
            raise SchemaError(f"--params must name a scenario directory, "
                              f"got {args.params!r}")
        docs = [schemas.read_json(os.path.join(args.params, f))
                for f in sorted(os.listdir(args.params))
                if f.endswith(".json")]
        if not docs:
            raise SchemaError(f"no scenario files in {args.params}")
    else:
        from .scenarios import seed_scenarios
        docs = [schemas.dump_scenario(sc) for sc in seed_scenarios()]
    os.makedirs(args.out, exist_ok=True)
    items = [(doc, args.rules) for doc in docs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_scenario_doc, items))
    else:
        results = [_run_scenario_doc(it) for it in items]
    results.sort(key=lambda r: r["id"])

    summary = []
    for r in results:
        with open(os.path.join(args.out, f"{r['id']}.jsonl"), "w") as fh:
            for row in r.pop("logs"):
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        summary.append(r)
        logger.info("%s %s", "PASS" if r["passed"] else "FAIL", r["id"])
    n_pass = sum(1 for r in summary if r["passed"])
    schemas.write_json(os.path.join(args.out, "summary.json"),
                       {"scenarios": len(summary), "passed": n_pass,
                        "results": summary})
    _write_csv(os.path.join(args.out, "summary.csv"),
               ["id", "expected", "completed", "passed", "time_to_goal",
                "min_agent_distance"],
               [(r["id"], r["expected"], r["completed"], r["passed"],
                 r["time_to_goal"], r["min_agent_distance"])
                for r in summary])
    logger.info("regression: %d/%d passed", n_pass, len(summary))
    return 0 if n_pass == len(summary) else 2


# -------------------------------------------------------------------- ab


def _run_ab_item(item) -> dict:
    gap, yield_every, seed, assertive, free_flow_s = item
    from .rules import RuleConfig
    from .simulator import generate_left_turn_scenario, run
    sc = generate_left_turn_scenario(gap, yield_every, seed)
    cfg = PlannerConfig()
    cfg.rules = RuleConfig(assertive_rule_enabled=assertive)
    result = run(sc, cfg)
    ok = (result.completed and not result.collisions
          and result.time_to_goal <= 1.5 * free_flow_s)
    return {"scenario": sc.id, "arm": "assertive" if assertive else "baseline",
            "gap": gap, "seed": seed, "completed": result.completed,
            "collisions": len(result.collisions),
            "time_to_goal": result.time_to_goal, "acceptable": ok}


def cmd_ab(args) -> int:
    from .simulator import generate_left_turn_scenario, run
    opts = {"gaps": [2.0, 2.5, 3.0], "yield_every": 5, "n_seeds": 3}
    if args.params:
        doc = schemas.read_json(args.params)
        unknown = sorted(set(doc) - set(opts) - {"schema_version"})
        if unknown:
            raise SchemaError(f"ab config: unknown fields {unknown}")
        opts.update({k: v for k, v in doc.items() if k != "schema_version"})
    os.makedirs(args.out, exist_ok=True)

    # Free-flow reference: the same turn with an empty road.
    free = generate_left_turn_scenario(opts["gaps"][0], opts["yield_every"],
                                       args.seed)
    free.agents = []
    free.id = "left_turn_free_flow"
    free_result = run(free, PlannerConfig())
    if not free_result.completed:
        logger.error("free-flow reference run did not complete")
        return 2
    free_flow_s = free_result.time_to_goal

    items = [(gap, opts["yield_every"], args.seed + i, assertive, free_flow_s)
             for gap in opts["gaps"]
             for i in range(opts["n_seeds"])
             for assertive in (False, True)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_ab_item, items))
    else:
        rows = [_run_ab_item(it) for it in items]
    rows.sort(key=lambda r: (r["scenario"], r["arm"]))

    arms = {}
    for arm in ("baseline", "assertive"):
        sub = [r for r in rows if r["arm"] == arm]
        times = [r["time_to_goal"] for r in sub if r["time_to_goal"] > 0]
        arms[arm] = {
            "runs": len(sub),
            "acceptable": sum(1 for r in sub if r["acceptable"]),
            "collisions": sum(r["collisions"] for r in sub),
            "mean_time_to_goal_s": (round(sum(times) / len(times), 2)
                                    if times else None),
        }
    report = {"free_flow_s": round(free_flow_s, 2), "arms": arms,
              "runs": rows}
    schemas.write_json(os.path.join(args.out, "ab_report.json"), report)
    _write_csv(os.path.join(args.out, "ab_runs.csv"),
               ["scenario", "arm", "gap", "seed", "completed", "collisions",
                "time_to_goal", "acceptable"],
               [(r["scenario"], r["arm"], r["gap"], r["seed"], r["completed"],
                 r["collisions"], r["time_to_goal"], r["acceptable"])
                for r in rows])
    logger.info("ab: baseline %d/%d acceptable, assertive %d/%d acceptable",
                arms["baseline"]["acceptable"], arms["baseline"]["runs"],
                arms["assertive"]["acceptable"], arms["assertive"]["runs"])
    return 0


# ------------------------------------------------------------- render-st


def cmd_render_st(args) -> int:
    from .render import render_st
    entries = []
    try:
        with open(args.params) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                if "st" in row:
                    entries.append((row["t"], row["st"]))
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"{args.params}: {e}")
    if not entries:
        raise SchemaError(f"{args.params}: no station-time entries in log")
    if args.t is None:
        t, entry = entries[-1]
    else:
        t, entry = min(entries, key=lambda it: abs(it[0] - args.t))
    render_st(entry, args.out)
    logger.info("rendered station-time diagram at t=%.2f s to %s", t, args.out)
    return 0


# ------------------------------------------------------------ make-seeds


def cmd_make_seeds(args) -> int:
    from .scenarios import seed_scenarios, seed_taskset
    task_dir = os.path.join(args.out, "tasks")
    sc_dir = os.path.join(args.out, "scenarios")
    os.makedirs(task_dir, exist_ok=True)
    os.makedirs(sc_dir, exist_ok=True)
    tasks = seed_taskset()
    for name, lpt in tasks:
        schemas.write_json(os.path.join(task_dir, f"{name}.json"),
                           schemas.dump_lpt(lpt))
    scenarios = seed_scenarios()
    for sc in scenarios:
        schemas.write_json(os.path.join(sc_dir, f"{sc.id}.json"),
                           schemas.dump_scenario(sc))
    logger.info("wrote %d tasks and %d scenarios under %s",
                len(tasks), len(scenarios), args.out)
    return 0


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avplan", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve-lpt", help="solve one local planning task")
    sp.add_argument("--params", required=True, help="task JSON (lpt.v1)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_solve_lpt)

    sp = sub.add_parser("run-taskset", help="solve a directory of tasks")
    sp.add_argument("--params", required=True, help="directory of task JSONs")
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_run_taskset)

    sp = sub.add_parser("regression", help="run simulation scenarios")
    sp.add_argument("--params", help="scenario directory (default: built-in)")
    sp.add_argument("--rules", help="rule config JSON (rules.v1)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_regression)

    sp = sub.add_parser("ab", help="assertive-rule comparison on left turns")
    sp.add_argument("--params", help="optional config JSON (gaps, yield_every, n_seeds)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_ab)

    sp = sub.add_parser("render-st", help="draw a station-time diagram")
    sp.add_argument("--params", required=True, help="simulation log (.jsonl)")
    sp.add_argument("--out", required=True, help="output SVG path")
    sp.add_argument("--t", type=float, help="pick the entry nearest this time")
    sp.set_defaults(func=cmd_render_st)

    sp = sub.add_parser("make-seeds", help="write built-in tasks and scenarios")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_make_seeds)
    return p


def main(argv=None) -> int:
    if not _setup_logging():
        return 1
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as e:
        logger.error("input error: %s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
