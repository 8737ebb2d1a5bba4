"""Command-line entry point: ``psrl-ssp run | diagnose | plan``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ExperimentConfig, base_instance, diagnose_directory, run_experiment
from .planner import SolverConfig, solve_optimal

# CLI flag -> ExperimentConfig field
RUN_FLAGS = {
    "env": "environment",
    "algo": "algorithm",
    "episodes": "episodes",
    "runs": "replications",
    "env_seed": "env_seed",
    "agent_seed": "agent_seed_base",
    "prior_alpha": "prior_alpha",
    "delta": "delta",
    "cost_floor": "cost_floor",
    "mode": "mode",
    "tolerance": "tolerance",
    "max_iterations": "max_iterations",
    "step_cap": "step_cap",
    "out": "output_dir",
    "workers": "workers",
}


def _cost_floor(text: str):
    return text if text == "auto" else float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psrl-ssp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a replicated regret experiment")
    run.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    run.add_argument("--env", help="random-mdp, gridworld or an instance JSON file")
    run.add_argument("--algo", choices=("psrl", "optimism", "greedy"))
    run.add_argument("--episodes", type=int)
    run.add_argument("--runs", type=int)
    run.add_argument("--env-seed", type=int)
    run.add_argument("--agent-seed", type=int)
    run.add_argument("--prior-alpha", type=float)
    run.add_argument("--delta", type=float)
    run.add_argument("--cost-floor", type=_cost_floor, help="'auto', 0 or an explicit floor")
    run.add_argument("--mode", choices=("frequentist", "bayesian"))
    run.add_argument("--tolerance", type=float)
    run.add_argument("--max-iterations", type=int)
    run.add_argument("--step-cap", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="output directory")

    diag = sub.add_parser("diagnose", help="recompute the theory report from stored traces")
    diag.add_argument("--in", dest="directory", required=True, type=Path)
    diag.add_argument("--delta", type=float)

    plan = sub.add_parser("plan", help="solve an environment and dump its value solution")
    plan.add_argument("--env", required=True)
    plan.add_argument("--env-seed", type=int, default=0)
    plan.add_argument("--tolerance", type=float, default=1e-10)
    plan.add_argument("--out", type=Path)
    return parser


def config_from_args(args) -> ExperimentConfig:
    values = {}
    if args.config is not None:
        values.update(json.loads(args.config.read_text()))
    for flag, name in RUN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            values[name] = value
    return ExperimentConfig.from_dict(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        config = config_from_args(args)
        result = run_experiment(config)
        final = result.final_regrets()
        print(f"{config.algorithm} on {config.environment}: mean final regret {final.mean():.3f} "
              f"over {len(final)} runs")
        print(json.dumps(result.report.to_dict(), indent=2))
    elif args.command == "diagnose":
        report = diagnose_directory(args.directory, args.delta)
        text = json.dumps(report.to_dict(), indent=2)
        (args.directory / "theory_report.json").write_text(text)
        print(text)
    elif args.command == "plan":
        solution = solve_optimal(base_instance(args.env, args.env_seed), SolverConfig(tolerance=args.tolerance))
        text = json.dumps(solution.to_dict(), indent=2)
        if args.out is None:
            print(text)
        else:
            args.out.write_text(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
