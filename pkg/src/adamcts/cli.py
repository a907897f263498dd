"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


from . import harness
from .config import ConfigError, build_scenario, default_config_text, matrix_axes, read_config
from .gridworld import build_mdp, make_env, render, standard_layouts
from .mdp import exact_value_iteration, pessimistic_value_iteration
from .report import SUMMARY_FIELDS, summary_rows, write_results, write_timing

log = logging.getLogger("adamcts")


class UsageError(Exception):
    pass


def _probability(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"p must lie in [0, 1], got {p}")
    return p


def _choice(valid):
    def parse(text):
        if text not in valid:
            raise argparse.ArgumentTypeError(f"invalid choice {text!r}; valid: {', '.join(valid)}")
        return text
    return parse


def _common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    p.add_argument("--config", type=Path, help="INI config file")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--format", choices=("csv", "json", "table"), default="table", help="stdout format")
    p.add_argument("-v", "--verbose", action="count", default=0)
    if scenario:
        p.add_argument("--out", type=Path, default=Path("results"), help="output root directory")
        p.add_argument("--run-id", help="subdirectory name (default: <command>-seed<seed>)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--episodes", type=int)
        p.add_argument("--simulations", type=int, help="search budget per decision")
        p.add_argument("--p-old", type=_probability)
        p.add_argument("--no-figures", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adamcts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    _common(p)
    p.add_argument("--env", type=_choice(harness.ENVIRONMENTS))
    p.add_argument("--planner", type=_choice(harness.PLANNERS))
    p.add_argument("--model-access", type=_choice(harness.MODEL_ACCESS))
    p.add_argument("--p-new", type=_probability)

    for name, text in (("table1", "benchmark matrix"), ("ablation", "ablation matrix")):
        p = sub.add_parser(name, help=f"run the {text}")
        _common(p)
        p.add_argument("--envs", type=lambda s: [_choice(harness.ENVIRONMENTS)(e.strip()) for e in s.split(",")])
        p.add_argument("--p-values", type=lambda s: [_probability(x) for x in s.split(",")])

    p = sub.add_parser("timing", help="per-decision wall time of the adaptive planner and the minimax baseline")
    _common(p)
    p.add_argument("--envs", type=lambda s: [_choice(harness.ENVIRONMENTS)(e.strip()) for e in s.split(",")])
    p.add_argument("--decisions", type=int, default=30)
    p.add_argument("--depth", type=int, default=3)
    p.set_defaults(simulations_default=30_000)

    p = sub.add_parser("envs", help="list the built-in layouts")
    p.add_argument("filter", nargs="?", default="", help="substring filter on layout names")
    p.add_argument("--format", choices=("csv", "json", "table"), default="table")
    p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("oracle", help="print a value table from value iteration")
    p.add_argument("--env", type=_choice(harness.ENVIRONMENTS), required=True)
    p.add_argument("--p", type=_probability, default=0.7)
    p.add_argument("--kind", choices=("exact", "pessimistic"), default="exact")
    p.add_argument("--horizon", type=int, default=200, help="backup depth for the pessimistic oracle")
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--seed", type=int, help="accepted for uniformity; the oracle uses no randomness")
    p.add_argument("--format", choices=("csv", "json", "table"), default="table")
    p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("defaults", help="print a config file holding every default")
    return parser


def _emit(rows: list[dict], fields, fmt: str, stream) -> None:
    if fmt == "json":
        stream.write(json.dumps(rows, indent=2) + "\n")
        return
    if fmt == "csv":
        w = csv.DictWriter(stream, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
        return
    cols = [f for f in fields if any(str(r.get(f, "")) for r in rows)] or list(fields)
    width = {c: max([len(c)] + [len(str(r.get(c, ""))) for r in rows]) for c in cols}
    stream.write("  ".join(c.ljust(width[c]) for c in cols) + "\n")
    for r in rows:
        stream.write("  ".join(str(r.get(c, "")).ljust(width[c]) for c in cols) + "\n")


def _scenario_from_args(args, raw: dict, **scenario_flags) -> harness.ScenarioConfig:
    overrides = {
        "scenario": {"seed": args.seed, "episodes": args.episodes, "p_old": args.p_old, **scenario_flags},
        "search": {"simulations": args.simulations},
    }
    return build_scenario(raw, overrides)


def _run_dir(args, seed: int) -> Path:
    return args.out / (args.run_id or f"{args.command}-seed{seed}")


def cmd_run(args, out) -> int:
    if args.config is None and args.env is None:
        raise UsageError("run needs --config or --env")
    raw = read_config(args.config) if args.config else {}
    cfg = _scenario_from_args(args, raw, env=args.env, planner=args.planner, model_access=args.model_access,
                              p_new=args.p_new)
    log.info("running %s on %s, p %.2f -> %.2f", cfg.label, cfg.env_name, cfg.p_old, cfg.p_new)
    res = harness.run_scenario(cfg, jobs=args.jobs)
    results = [(cfg, res, None)]
    path = write_results(_run_dir(args, cfg.seed_base), results, figures=not args.no_figures)
    _emit(summary_rows(results), SUMMARY_FIELDS, args.format, out)
    log.info("wrote %s", path)
    return 0


def cmd_matrix(args, out) -> int:
    raw = read_config(args.config) if args.config else {}
    base = _scenario_from_args(args, raw)
    envs, p_values = matrix_axes(raw, args.envs, args.p_values)
    runner = harness.run_table1 if args.command == "table1" else harness.run_ablation
    results = runner(base, envs, p_values, jobs=args.jobs)
    path = write_results(_run_dir(args, base.seed_base), results, figures=not args.no_figures)
    _emit(summary_rows(results), SUMMARY_FIELDS, args.format, out)
    log.info("wrote %s", path)
    failed = [r for r in results if r[1] is None]
    for cfg, _, err in failed:
        log.error("%s %s p=%g failed: %s", cfg.env_name, cfg.label, cfg.p_new, err)
    return 1 if failed else 0


def cmd_timing(args, out) -> int:
    raw = read_config(args.config) if args.config else {}
    base = _scenario_from_args(args, raw)
    envs, _ = matrix_axes(raw, args.envs, [0.7])
    if args.decisions < 2:
        raise UsageError("timing needs at least two decisions")
    sims = args.simulations or args.simulations_default
    rows = harness.run_timing(base, envs, args.decisions, sims, args.depth)
    speed = harness.speedup(rows)
    write_timing(_run_dir(args, base.seed_base), rows, speed)
    table = [{"env": r.env_name, "planner": r.planner, "decisions": r.decisions, "mean_seconds": f"{r.mean_seconds:.4g}",
              "std_seconds": f"{r.std_seconds:.4g}", "speedup": f"{speed[r.env_name]:.3f}"} for r in rows]
    _emit(table, ["env", "planner", "decisions", "mean_seconds", "std_seconds", "speedup"], args.format, out)
    return 0


def cmd_envs(args, out) -> int:
    envs = {k: v for k, v in standard_layouts().items() if args.filter in k}
    rows = [{"name": k, "height": e.layout.height, "width": e.layout.width, "slip": e.slip.kind,
             "goal": e.rewards.goal, "hole": e.rewards.hole, "step": e.rewards.step, "layout": "/".join(e.layout.rows)}
            for k, e in envs.items()]
    if args.format != "table":
        _emit(rows, list(rows[0]) if rows else ["name"], args.format, out)
        return 0
    for k, e in envs.items():
        out.write(f"{k}  ({e.layout.height}x{e.layout.width}, {e.slip.kind} slip, "
                  f"goal {e.rewards.goal:g}, hole {e.rewards.hole:g}, step {e.rewards.step:g})\n")
        out.write(render(e.layout) + "\n\n")
    return 0


def cmd_oracle(args, out) -> int:
    if not 0.0 <= args.gamma < 1.0:
        raise UsageError("gamma must lie in [0, 1)")
    env = make_env(args.env, args.p)
    mdp = build_mdp(env, args.gamma)
    if args.kind == "exact":
        V = exact_value_iteration(mdp)
    else:
        if args.horizon < 1:
            raise UsageError("horizon must be at least 1")
        V = pessimistic_value_iteration(mdp, args.horizon)
    layout = env.layout
    if args.format == "table":
        for r in range(layout.height):
            out.write(" ".join(f"{V[layout.state(r, c)]:7.3f}" for c in range(layout.width)) + "\n")
        return 0
    rows = [{"state": s, "row": layout.coords(s)[0], "col": layout.coords(s)[1], "cell": layout.cell(s),
             "value": f"{V[s]:.10g}"} for s in range(layout.n_states)]
    _emit(rows, ["state", "row", "col", "cell", "value"], args.format, out)
    return 0


COMMANDS = {"run": cmd_run, "table1": cmd_matrix, "ablation": cmd_matrix, "timing": cmd_timing, "envs": cmd_envs,
            "oracle": cmd_oracle}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * getattr(args, "verbose", 0), format="%(levelname)s %(message)s")
    if args.command == "defaults":
        out.write(default_config_text())
        return 0
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, ConfigError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"adamcts {args.command}: error: {exc}\n")
        return 2
    except Exception as exc:
        log.exception("run failed")
        sys.stderr.write(f"adamcts {args.command}: failed: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
