"""Orchestration: wire a trial spec into the engine and write artifacts.

``run`` covers three phases.  ``between`` dispatches experimentals across
locations, ``within`` arranges each location's entries on its grid, and
``both`` chains them so the spatial phase consumes the dispatch phase's
per-location allocations.  Every solution lands in its own directory
under ``output_dir`` with a design CSV, a convergence CSV and a JSON
summary, plus optional renderings and matrix dumps.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    BetweenAssignment,
    BetweenProblem,
    FamilySpreadTable,
    TrialSpec,
    WithinProblem,
    between_capacities,
    check_spread_summary,
    family_adjacency_count,
    family_spread,
    random_start_between,
    spec_kinship,
    spread_imbalance,
)
from .engine import EngineConfig, evolve
from .errors import ConfigError, SpecError
from .model import ObjectiveConfig
from .report import DesignRow, DesignSolution, write_solution
from .specio import parse_spec, save_matrix

log = logging.getLogger(__name__)

PHASES = ("between", "within", "both")

#: Substream label for the random start design, distinct from the engine's
#: restart streams which use SeedSequence(seed) directly.
START_STREAM = 1


@dataclass
class RunConfig:
    """Everything one invocation needs.

    ``engine_within`` lets a chained run drive the spatial phase with its
    own engine settings; ``None`` reuses ``engine``.
    """

    spec_path: str | Path
    phase: str
    engine: EngineConfig = field(default_factory=EngineConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    output_dir: str | Path = "."
    render: bool = False
    location: str | None = None
    dump_matrices: bool = False
    engine_within: EngineConfig | None = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigError(
                f"phase: unknown phase {self.phase!r}, choose from {PHASES}"
            )

    def engine_for(self, phase: str) -> EngineConfig:
        if phase == "within" and self.engine_within is not None:
            return self.engine_within
        return self.engine


def _config_echo(config: RunConfig, engine: EngineConfig) -> dict:
    return {
        "spec": str(config.spec_path),
        "phase": config.phase,
        "pop_size": engine.pop_size,
        "locality": engine.locality,
        "strategy": engine.strategy,
        "max_evals": engine.max_evals,
        "restarts": engine.restarts,
        "seed": engine.seed,
        "threads": engine.threads,
        "objective_mode": config.objective.mode,
        "k_eigen": config.objective.k_eigen,
    }


def _total_evaluations(trace) -> int:
    totals: dict[int, int] = {}
    for record in trace.records:
        totals[record.restart] = max(totals.get(record.restart, 0), record.nfe)
    return sum(totals.values())


def run(config: RunConfig) -> list[DesignSolution]:
    """Optimize per ``config`` and write one directory per solution."""
    spec = parse_spec(config.spec_path)
    out_root = Path(config.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    solutions: list[DesignSolution] = []

    allocations: dict[str, list[str]] | None = None
    if config.phase in ("between", "both"):
        solution, allocations = _run_between(spec, config)
        _write_outputs(
            solution, out_root / "between", config, spec,
            include_timing=config.engine.threads > 1,
        )
        solutions.append(solution)

    if config.phase in ("within", "both"):
        for location_id in _within_locations(spec, config):
            allocation = None if allocations is None else allocations[location_id]
            solution = _run_within(spec, config, location_id, allocation)
            _write_outputs(
                solution, out_root / f"within_{location_id}", config, spec,
                include_timing=config.engine_for("within").threads > 1,
            )
            solutions.append(solution)
    return solutions


def _within_locations(spec: TrialSpec, config: RunConfig) -> list[str]:
    if config.location is not None:
        if config.location not in {loc.id for loc in spec.locations}:
            raise SpecError(f"location {config.location!r} is not in the spec")
        return [config.location]
    return [loc.id for loc in spec.locations]


def _run_between(
    spec: TrialSpec, config: RunConfig
) -> tuple[DesignSolution, dict[str, list[str]]]:
    start_rng = np.random.default_rng(
        np.random.SeedSequence([config.engine.seed, START_STREAM])
    )
    start = random_start_between(spec, start_rng)
    problem = BetweenProblem(spec, start, config.objective)
    identity = np.arange(problem.n_slots)
    objective_initial = problem.evaluate(identity)

    began = time.perf_counter()
    best, trace = evolve(problem.problem, config.engine, seed_members=[identity])
    elapsed = time.perf_counter() - began
    start_assignment = problem.assignment(identity)
    final_assignment = problem.assignment(best.perm)
    table_start = family_spread(start_assignment, spec)
    table_final = family_spread(final_assignment, spec)
    rows = _between_rows(spec, problem, final_assignment)
    solution = DesignSolution(
        phase="between",
        rows=rows,
        objective_initial=objective_initial,
        objective_final=best.fitness,
        trace=trace,
        seed=config.engine.seed,
        config=_config_echo(config, config.engine),
        diagnostics={
            "elapsed_seconds": elapsed,
            "evaluations": _total_evaluations(trace),
            "spread_imbalance_initial": spread_imbalance(table_start),
            "spread_imbalance_final": spread_imbalance(table_final),
            "family_counts": {
                "locations": list(table_final.locations),
                "families": list(table_final.families),
                "initial": np.asarray(table_start.counts).tolist(),
                "final": np.asarray(table_final.counts).tolist(),
            },
        },
    )
    allocations = _allocations_for_within(spec, problem, final_assignment)
    return solution, allocations


def _between_rows(
    spec: TrialSpec, problem: BetweenProblem, assignment: BetweenAssignment
) -> list[DesignRow]:
    rows: list[DesignRow] = []
    for s, genotype_index in enumerate(assignment.slots):
        location_index = int(assignment.slot_location[s])
        genotype = problem.experimentals[int(genotype_index)]
        rows.append(DesignRow(
            phase="between",
            location=spec.locations[location_index].id,
            plot_row=None,
            plot_col=None,
            slot=int(s - problem.offsets[location_index]) + 1,
            genotype=genotype.id,
            family=genotype.family or "",
            role=genotype.role,
        ))
    return rows


def _allocations_for_within(
    spec: TrialSpec, problem: BetweenProblem, assignment: BetweenAssignment
) -> dict[str, list[str]]:
    """Per-location entry lists for the spatial phase: checks, then dispatch."""
    check_ids = [genotype.id for genotype in spec.checks()]
    allocations: dict[str, list[str]] = {}
    for location_index, location in enumerate(spec.locations):
        begin = int(problem.offsets[location_index])
        end = int(problem.offsets[location_index + 1])
        experimental_ids = [
            problem.experimentals[int(g)].id for g in assignment.slots[begin:end]
        ]
        allocations[location.id] = check_ids + experimental_ids
    return allocations


def _run_within(
    spec: TrialSpec,
    config: RunConfig,
    location_id: str,
    allocation: list[str] | None,
) -> DesignSolution:
    problem = WithinProblem(spec, location_id, allocation, config.objective)
    engine = config.engine_for("within")
    identity = np.arange(problem.layout.n_plots)
    objective_initial = problem.evaluate(identity)

    began = time.perf_counter()
    best, trace = evolve(problem.problem, engine, seed_members=[identity])
    elapsed = time.perf_counter() - began

    placement_start = problem.placement(identity)
    placement_final = problem.placement(best.perm)
    spread_start = check_spread_summary(placement_start, problem.layout)
    spread_final = check_spread_summary(placement_final, problem.layout)
    rows = _within_rows(problem, best.perm, location_id)
    return DesignSolution(
        phase="within",
        location=location_id,
        rows=rows,
        objective_initial=objective_initial,
        objective_final=best.fitness,
        trace=trace,
        seed=engine.seed,
        config=_config_echo(config, engine),
        diagnostics={
            "elapsed_seconds": elapsed,
            "evaluations": _total_evaluations(trace),
            "check_spread_initial": {
                "min_pairwise_distance": spread_start.min_pairwise_distance,
                "max_adjacent_run": spread_start.max_adjacent_run,
            },
            "check_spread_final": {
                "min_pairwise_distance": spread_final.min_pairwise_distance,
                "max_adjacent_run": spread_final.max_adjacent_run,
            },
            "family_adjacency_initial": family_adjacency_count(
                placement_start, problem.layout
            ),
            "family_adjacency_final": family_adjacency_count(
                placement_final, problem.layout
            ),
        },
    )


def _within_rows(
    problem: WithinProblem, perm: np.ndarray, location_id: str
) -> list[DesignRow]:
    placement = problem.placement(perm)
    row, col = problem.layout.grid_positions()
    rows: list[DesignRow] = []
    for p in range(problem.layout.n_plots):
        genotype = placement.genotypes[int(placement.plots[p])]
        rows.append(DesignRow(
            phase="within",
            location=location_id,
            plot_row=int(row[p]) + 1,
            plot_col=int(col[p]) + 1,
            slot=p + 1,
            genotype=genotype.id,
            family=genotype.family or "",
            role=genotype.role,
        ))
    return rows


def _write_outputs(
    solution: DesignSolution,
    out_dir: Path,
    config: RunConfig,
    spec: TrialSpec,
    include_timing: bool,
) -> None:
    write_solution(solution, out_dir, include_timing)
    if config.render:
        _render_outputs(solution, out_dir, spec, config)
    if config.dump_matrices:
        _dump_matrices(solution, out_dir, spec, config)
    log.info(
        "%s: objective %.9g -> %.9g (%s)",
        solution.phase if solution.location is None
        else f"{solution.phase} {solution.location}",
        solution.objective_initial,
        solution.objective_final,
        out_dir,
    )


def _render_outputs(
    solution: DesignSolution, out_dir: Path, spec: TrialSpec, config: RunConfig
) -> None:
    from . import render

    render.render_convergence(
        solution.trace, out_dir / "convergence.svg",
        title=f"{solution.phase} search",
    )
    if solution.phase == "between":
        counts = solution.diagnostics["family_counts"]
        for stage in ("initial", "final"):
            table = FamilySpreadTable(
                locations=list(counts["locations"]),
                families=list(counts["families"]),
                counts=np.asarray(counts[stage]),
            )
            render.render_spread(
                table, out_dir / f"spread_{stage}.svg",
                title=f"entries per location and family ({stage})",
            )
    else:
        problem = _rebuild_within(solution, spec, config)
        identity = np.arange(problem.layout.n_plots)
        final = problem.permutation_for([row.genotype for row in solution.rows])
        render.render_layout(
            problem.placement(identity), problem.layout,
            out_dir / "layout_initial.svg",
            title=f"{solution.location} start",
        )
        render.render_layout(
            problem.placement(final), problem.layout,
            out_dir / "layout_final.svg",
            title=f"{solution.location} optimized",
        )


def _rebuild_within(
    solution: DesignSolution, spec: TrialSpec, config: RunConfig
) -> WithinProblem:
    allocation: list[str] = []
    for row in solution.rows:
        if row.genotype not in allocation:
            allocation.append(row.genotype)
    return WithinProblem(spec, solution.location, allocation, config.objective)


def _dump_matrices(
    solution: DesignSolution, out_dir: Path, spec: TrialSpec, config: RunConfig
) -> None:
    matrices = out_dir / "matrices"
    matrices.mkdir(exist_ok=True)
    if solution.phase == "between":
        start = _between_assignment_from_rows(spec, solution.rows)
        problem = BetweenProblem(spec, start, config.objective)
        identity = np.arange(problem.n_slots)
        kinship = spec_kinship(spec, problem.experimentals)
        save_matrix(matrices / "kinship.txt", kinship.values)
        save_matrix(matrices / "information_final.txt", problem.information(identity))
    else:
        problem = _rebuild_within(solution, spec, config)
        final = problem.permutation_for([row.genotype for row in solution.rows])
        kinship = spec_kinship(spec, problem.genotypes)
        save_matrix(matrices / "kinship.txt", kinship.values)
        save_matrix(matrices / "residual.txt", problem.residual)
        incidence = np.zeros((problem.layout.n_plots, len(problem.genotypes)))
        incidence[np.arange(problem.layout.n_plots), problem.entry_gen[final]] = 1.0
        info = incidence.T @ (problem.projection @ incidence)
        info = info / spec.variance.sigma_e2 + problem._g_inv
        save_matrix(matrices / "information_final.txt", info)


def _between_assignment_from_rows(
    spec: TrialSpec, rows: list[DesignRow]
) -> BetweenAssignment:
    """Rebuild a dispatch from design rows, validating slot coverage."""
    capacities = between_capacities(spec)
    location_index = {loc.id: k for k, loc in enumerate(spec.locations)}
    experimental_index = {
        genotype.id: k for k, genotype in enumerate(spec.experimentals())
    }
    offsets = np.concatenate(([0], np.cumsum(capacities)))
    slots = np.full(int(capacities.sum()), -1, dtype=np.intp)
    slot_location = np.repeat(np.arange(len(spec.locations)), capacities)
    for row in rows:
        if row.location not in location_index:
            raise SpecError(f"design row names unknown location {row.location!r}")
        if row.genotype not in experimental_index:
            raise SpecError(
                f"design row names unknown experimental genotype {row.genotype!r}"
            )
        loc = location_index[row.location]
        if not 1 <= row.slot <= capacities[loc]:
            raise SpecError(
                f"location {row.location}: slot {row.slot} outside 1..{capacities[loc]}"
            )
        position = int(offsets[loc]) + row.slot - 1
        if slots[position] != -1:
            raise SpecError(f"location {row.location}: slot {row.slot} filled twice")
        slots[position] = experimental_index[row.genotype]
    if np.any(slots < 0):
        raise SpecError("design rows leave dispatch slots unfilled")
    return BetweenAssignment(slots=slots, slot_location=slot_location)


def score_design(
    spec: TrialSpec, rows: list[DesignRow], objective_cfg: ObjectiveConfig
) -> dict[str, float]:
    """Objective of an existing design file, keyed by phase and location."""
    scores: dict[str, float] = {}
    between_rows = [row for row in rows if row.phase == "between"]
    if between_rows:
        start = _between_assignment_from_rows(spec, between_rows)
        problem = BetweenProblem(spec, start, objective_cfg)
        scores["between"] = problem.evaluate(np.arange(problem.n_slots))
    within_locations: dict[str, list[DesignRow]] = {}
    for row in rows:
        if row.phase == "within":
            within_locations.setdefault(row.location, []).append(row)
    for location_id, location_rows in within_locations.items():
        location_rows = sorted(location_rows, key=lambda r: r.slot)
        allocation: list[str] = []
        for row in location_rows:
            if row.genotype not in allocation:
                allocation.append(row.genotype)
        problem = WithinProblem(spec, location_id, allocation, objective_cfg)
        perm = problem.permutation_for([row.genotype for row in location_rows])
        scores[f"within:{location_id}"] = problem.evaluate(perm)
    return scores
