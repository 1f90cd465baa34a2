"""Command-line entry points: evolve, transition, sweep, export, stats.

Exit codes: 0 on success, 1 for configuration/usage problems, 2 for
runtime failures such as a broken external evaluator.
"""
from __future__ import annotations

import argparse
import sys

from .evaluator import ProtocolError
from .runner import (
    ALGORITHMS,
    DESK_EVALS,
    EXPORT_KINDS,
    STATS_METRICS,
    SWEEP_P_MORPH,
    SWEEP_SIGMA,
    TRANSITION_EVALS,
    ConfigError,
    RunConfig,
    SweepConfig,
    export_run,
    final_metrics,
    load_config_file,
    run_evolve,
    run_sweep,
    run_transition,
    stats_compare,
)

ENVS = ("flat", "platform", "circular")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems are config errors
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser, evals_default: int) -> None:
    p.add_argument("--algorithm", "-a", choices=ALGORITHMS)
    p.add_argument("--env", "-e", choices=ENVS)
    p.add_argument("--evals", "-n", type=int, default=None,
                   help=f"evaluation budget (default {evals_default})")
    p.add_argument("--seed", "-s", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out", "-o", required=True, help="run output directory")
    p.add_argument("--evaluator", default=None,
                   help="'surrogate' (default) or 'external:CMD'")
    p.add_argument("--p-morph", type=float, default=None, dest="p_morph",
                   help="morphology mutation probability override")
    p.add_argument("--sigma", type=float, default=None,
                   help="controller mutation magnitude override")
    p.add_argument("--p-crossover", type=float, default=None, dest="p_crossover")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel evaluation workers (default 1)")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")


def _build_config(args: argparse.Namespace, evals_default: int) -> RunConfig:
    base: dict = {}
    if args.config:
        base = load_config_file(args.config)
    overrides = {
        "algorithm": args.algorithm,
        "env": args.env,
        "evals": args.evals,
        "seed": args.seed,
        "evaluator": args.evaluator,
        "p_morph_mut": args.p_morph,
        "sigma": args.sigma,
        "p_crossover": args.p_crossover,
        "workers": args.workers,
    }
    merged = dict(base)
    for key, val in overrides.items():
        if val is not None:
            merged[key] = val
    merged["out_dir"] = args.out
    merged.setdefault("evals", evals_default)
    merged.setdefault("seed", 0)
    missing = [k for k in ("algorithm", "env") if k not in merged]
    if missing:
        raise ConfigError(f"missing required settings: {', '.join(missing)}")
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_floats(text: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"{flag} expects comma-separated floats: {exc}") from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="modqd",
                     description="Quality-diversity evolution of modular robots")
    sub = parser.add_subparsers(dest="command", required=True)

    p_evolve = sub.add_parser("evolve", help="run one evolution from scratch")
    _add_common(p_evolve, DESK_EVALS)

    p_trans = sub.add_parser("transition",
                             help="continue a finished run in a new environment")
    p_trans.add_argument("--from", dest="source", required=True,
                         help="source run directory")
    _add_common(p_trans, TRANSITION_EVALS)

    p_sweep = sub.add_parser("sweep", help="mutation-parameter grid sweep")
    p_sweep.add_argument("--algorithm", "-a", choices=ALGORITHMS, required=True)
    p_sweep.add_argument("--env", "-e", choices=ENVS, default="flat")
    p_sweep.add_argument("--out", "-o", required=True)
    p_sweep.add_argument("--evals", "-n", type=int, default=2000,
                         help="budget per sweep run (default 2000)")
    p_sweep.add_argument("--reps", type=int, default=2)
    p_sweep.add_argument("--seed", "-s", type=int, default=0)
    p_sweep.add_argument("--p-values", default=None,
                         help=f"comma-separated grid (default {','.join(map(str, SWEEP_P_MORPH))})")
    p_sweep.add_argument("--sigma-values", default=None,
                         help=f"comma-separated grid (default {','.join(map(str, SWEEP_SIGMA))})")
    p_sweep.add_argument("--workers", type=int, default=1)

    p_export = sub.add_parser("export", help="render CSV/SVG views of finished runs")
    p_export.add_argument("--run", action="append", required=True,
                          help="run directory (repeatable)")
    p_export.add_argument("--what", required=True, choices=EXPORT_KINDS)
    p_export.add_argument("--out", default=None, help="output directory")

    p_stats = sub.add_parser("stats", help="compare groups of runs")
    p_stats.add_argument("--group", action="append", required=True,
                         help="LABEL=DIR1,DIR2,... (repeatable)")
    p_stats.add_argument("--metric", choices=STATS_METRICS, default="best_fitness")
    p_stats.add_argument("--out", default=None, help="optional CSV output path")
    return parser


def _cmd_evolve(args) -> int:
    cfg = _build_config(args, DESK_EVALS)
    run_dir = run_evolve(cfg)
    fm = final_metrics(run_dir)
    print(f"run complete: {run_dir}")
    print(f"  evals={fm['eval']} best_fitness={fm['best_fitness']:.4f} "
          f"coverage={fm['coverage']} qd_score={fm['qd_score']:.4f}")
    return 0


def _cmd_transition(args) -> int:
    cfg = _build_config(args, TRANSITION_EVALS)
    run_dir = run_transition(args.source, cfg)
    fm = final_metrics(run_dir)
    print(f"transition complete: {run_dir}")
    print(f"  evals={fm['eval']} best_fitness={fm['best_fitness']:.4f} "
          f"coverage={fm['coverage']} qd_score={fm['qd_score']:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    sweep = SweepConfig(
        algorithm=args.algorithm, env=args.env, out_dir=args.out,
        p_values=_parse_floats(args.p_values, "--p-values") if args.p_values else SWEEP_P_MORPH,
        sigma_values=(_parse_floats(args.sigma_values, "--sigma-values")
                      if args.sigma_values else SWEEP_SIGMA),
        reps=args.reps, evals=args.evals, seed=args.seed, workers=args.workers)
    report = run_sweep(sweep)
    print(f"sweep complete: {args.out}")
    print(f"  model R^2={report['r_squared']:.4f}")
    pb = report["predicted_best"]
    print(f"  predicted best: p_morph_mut={pb['p_morph_mut']} sigma={pb['sigma']}")
    return 0


def _cmd_export(args) -> int:
    written = export_run(args.run, args.what, args.out)
    for path in written:
        print(path)
    return 0


def _cmd_stats(args) -> int:
    groups: dict[str, list[str]] = {}
    for spec in args.group:
        label, _, dirs = spec.partition("=")
        if not _ or not label or not dirs:
            raise ConfigError(f"--group expects LABEL=DIR1,DIR2,... got {spec!r}")
        groups[label] = [d for d in dirs.split(",") if d]
    rows = stats_compare(groups, args.metric)
    header = ["group_a", "group_b", "n_a", "n_b", "median_a", "median_b",
              "u", "p_raw", "p_holm", "significant"]
    print("\t".join(header))
    lines = [",".join(header)]
    for r in rows:
        print(f"{r['group_a']}\t{r['group_b']}\t{r['n_a']}\t{r['n_b']}\t"
              f"{r['median_a']:.4f}\t{r['median_b']:.4f}\t{r['u']:.1f}\t"
              f"{r['p_raw']:.4g}\t{r['p_holm']:.4g}\t{r['significant']}")
        lines.append(",".join(str(r[h]) for h in header))
    if args.out:
        with open(args.out, "w") as f:
            f.write("\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "evolve": _cmd_evolve,
    "transition": _cmd_transition,
    "sweep": _cmd_sweep,
    "export": _cmd_export,
    "stats": _cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ProtocolError as exc:
        print(f"evaluator protocol error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
