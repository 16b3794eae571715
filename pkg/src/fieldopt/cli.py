"""Command-line surface.

Subcommands mirror the run phases, plus ``evaluate`` to score an existing
design file and ``oracle`` to brute-force tiny problems as a reference.
Exit codes: 0 success, 2 spec or configuration error, 3 numerical error,
4 infeasible problem.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .domain import BetweenProblem, WithinProblem, random_start_between
from .engine import STRATEGIES, EngineConfig
from .errors import FieldOptError, SpecError
from .model import ObjectiveConfig
from .oracle import exhaustive_best
from .report import fmt_float, read_design_csv
from .runner import START_STREAM, RunConfig, run, score_design
from .specio import parse_spec

log = logging.getLogger(__name__)

#: Default search strategy per phase; dispatch explores while the spatial
#: phase refines around the population best.
PHASE_STRATEGY = {"between": "rand3", "within": "rand2best"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fieldopt",
        description="Optimize field-trial designs by minimizing prediction "
        "error variance with a permutation differential evolution search.",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress details")
    commands = parser.add_subparsers(dest="command", required=True)

    for phase, title in (
        ("between", "dispatch experimentals across locations"),
        ("within", "arrange entries on each location's plot grid"),
        ("both", "dispatch, then arrange every location"),
    ):
        sub = commands.add_parser(phase, help=title)
        _add_run_arguments(sub)
        sub.set_defaults(handler=_cmd_run, phase=phase)

    evaluate = commands.add_parser(
        "evaluate", help="score an existing design CSV against a spec"
    )
    evaluate.add_argument("--spec", required=True, help="trial spec file")
    evaluate.add_argument("--design", required=True, help="design CSV to score")
    evaluate.add_argument("--k-eigen", type=int, default=3,
                          help="eigenvalues averaged by the score (default 3)")
    evaluate.set_defaults(handler=_cmd_evaluate)

    oracle = commands.add_parser(
        "oracle", help="exhaustively solve a tiny problem for reference"
    )
    oracle.add_argument("--spec", required=True, help="trial spec file")
    oracle.add_argument("--phase", choices=("between", "within"),
                        default="within")
    oracle.add_argument("--location", default=None,
                        help="location to arrange (default: the first)")
    oracle.add_argument("--seed", type=int, default=0,
                        help="seed of the dispatch start design")
    oracle.add_argument("--k-eigen", type=int, default=3)
    oracle.set_defaults(handler=_cmd_oracle)
    return parser


def _add_run_arguments(sub: argparse.ArgumentParser) -> None:
    defaults = EngineConfig()
    sub.add_argument("--spec", required=True, help="trial spec file")
    sub.add_argument("--seed", type=int, default=defaults.seed,
                     help="master seed (default %(default)s)")
    sub.add_argument("--np", dest="pop_size", type=int, default=defaults.pop_size,
                     help="population size (default %(default)s)")
    sub.add_argument("--lambda", dest="locality", type=float,
                     default=defaults.locality,
                     help="locality factor scaling step counts (default %(default)s)")
    sub.add_argument("--strategy", choices=STRATEGIES, default=None,
                     help="proposal strategy (default: rand3 for dispatch, "
                     "rand2best for spatial arrangement)")
    sub.add_argument("--restarts", type=int, default=defaults.restarts,
                     help="independent restarts (default %(default)s)")
    sub.add_argument("--max-evals", type=int, default=defaults.max_evals,
                     help="objective evaluations per restart (default %(default)s)")
    sub.add_argument("--k-eigen", type=int, default=3,
                     help="eigenvalues averaged by the score (default %(default)s)")
    sub.add_argument("--out", default="fieldopt_out",
                     help="output directory (default %(default)s)")
    sub.add_argument("--render", action="store_true",
                     help="write SVG renderings next to the CSV output")
    sub.add_argument("--threads", type=int, default=defaults.threads,
                     help="parallel objective evaluations (default %(default)s)")
    sub.add_argument("--location", default=None,
                     help="restrict the spatial phase to one location")
    sub.add_argument("--dump-matrices", action="store_true",
                     help="write kinship/residual/information matrices")


def _engine_for(args: argparse.Namespace, phase: str) -> EngineConfig:
    strategy = args.strategy or PHASE_STRATEGY[phase]
    return EngineConfig(
        pop_size=args.pop_size,
        locality=args.locality,
        strategy=strategy,
        max_evals=args.max_evals,
        restarts=args.restarts,
        seed=args.seed,
        threads=args.threads,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    primary = "within" if args.phase == "within" else "between"
    config = RunConfig(
        spec_path=args.spec,
        phase=args.phase,
        engine=_engine_for(args, primary),
        engine_within=_engine_for(args, "within") if args.phase == "both" else None,
        objective=ObjectiveConfig(k_eigen=args.k_eigen),
        output_dir=args.out,
        render=args.render,
        location=args.location,
        dump_matrices=args.dump_matrices,
    )
    for solution in run(config):
        label = solution.phase if solution.location is None else (
            f"{solution.phase} {solution.location}"
        )
        print(f"{label}: objective {fmt_float(solution.objective_initial)} -> "
              f"{fmt_float(solution.objective_final)}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    spec = parse_spec(args.spec)
    rows = read_design_csv(args.design)
    if not rows:
        raise SpecError(f"{args.design}: design file holds no rows")
    scores = score_design(spec, rows, ObjectiveConfig(k_eigen=args.k_eigen))
    json.dump({key: float(value) for key, value in scores.items()},
              sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    spec = parse_spec(args.spec)
    objective = ObjectiveConfig(k_eigen=args.k_eigen)
    if args.phase == "between":
        rng = np.random.default_rng(
            np.random.SeedSequence([args.seed, START_STREAM])
        )
        problem = BetweenProblem(spec, random_start_between(spec, rng), objective)
        label = "between"
        generic = problem.problem
    else:
        location = args.location
        if location is None:
            if not spec.locations:
                raise SpecError("spec lists no locations")
            location = spec.locations[0].id
        problem = WithinProblem(spec, location, None, objective)
        label = f"within:{location}"
        generic = problem.problem
    try:
        result = exhaustive_best(generic)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    json.dump(
        {
            "problem": label,
            "best_objective": result.best_value,
            "evaluated": result.evaluated,
            "best_perm": [int(p) for p in result.best_perm],
        },
        sys.stdout,
        indent=2,
    )
    print()
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except FieldOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
