"""Serialization of finished designs: CSV tables and a JSON summary.

A solution directory holds three files.  ``design.csv`` lists one row per
slot or plot, ``convergence.csv`` carries the per-restart trace, and
``solution.json`` records objectives, the engine configuration and the
spread diagnostics.  Floats in the CSV files are written with nine
significant digits; the JSON keeps full precision so a written solution
reads back with exactly the same objective values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .engine import ConvergenceTrace, TraceRecord
from .errors import SpecError

DESIGN_COLUMNS = ("phase", "location", "plot_row", "plot_col", "slot",
                  "genotype", "family", "role")
CONVERGENCE_COLUMNS = ("restart", "nfe", "best_objective", "elapsed_seconds")

DESIGN_FILE = "design.csv"
CONVERGENCE_FILE = "convergence.csv"
SOLUTION_FILE = "solution.json"


def fmt_float(value: float) -> str:
    """Nine significant digits, enough to carry reported precision."""
    return format(float(value), ".9g")


@dataclass(frozen=True)
class DesignRow:
    """One slot (cross-location phase) or one plot (spatial phase).

    ``plot_row`` and ``plot_col`` are one-based grid coordinates and stay
    ``None`` for the cross-location phase, which has no geometry.  ``slot``
    is the one-based position within the location.
    """

    phase: str
    location: str
    plot_row: int | None
    plot_col: int | None
    slot: int
    genotype: str
    family: str
    role: str


@dataclass
class DesignSolution:
    """A finished optimization run for one phase and location set."""

    phase: str
    rows: list[DesignRow]
    objective_initial: float
    objective_final: float
    trace: ConvergenceTrace
    seed: int
    config: dict
    diagnostics: dict = field(default_factory=dict)
    location: str | None = None

    def __post_init__(self):
        if self.objective_final > self.objective_initial:
            raise ValueError(
                f"final objective {self.objective_final} exceeds the initial "
                f"{self.objective_initial}; the start design was lost"
            )


def write_design_csv(rows: list[DesignRow], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(DESIGN_COLUMNS)
        for row in rows:
            writer.writerow([
                row.phase,
                row.location,
                "" if row.plot_row is None else row.plot_row,
                "" if row.plot_col is None else row.plot_col,
                row.slot,
                row.genotype,
                row.family,
                row.role,
            ])


def _open_for_reading(path: Path | str):
    try:
        return open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc}") from exc


def read_design_csv(path: Path | str) -> list[DesignRow]:
    rows: list[DesignRow] = []
    with _open_for_reading(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != DESIGN_COLUMNS:
            raise SpecError(f"{path}: expected design header {','.join(DESIGN_COLUMNS)}")
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(DESIGN_COLUMNS):
                raise SpecError(f"{path}:{line_no}: expected {len(DESIGN_COLUMNS)} fields")
            phase, location, plot_row, plot_col, slot, genotype, family, role = record
            try:
                rows.append(DesignRow(
                    phase=phase,
                    location=location,
                    plot_row=int(plot_row) if plot_row else None,
                    plot_col=int(plot_col) if plot_col else None,
                    slot=int(slot),
                    genotype=genotype,
                    family=family,
                    role=role,
                ))
            except ValueError as exc:
                raise SpecError(f"{path}:{line_no}: {exc}") from exc
    return rows


def write_convergence_csv(
    trace: ConvergenceTrace, path: Path | str, include_timing: bool = False
) -> None:
    """Write the trace; timings are zeroed unless ``include_timing``.

    Wall-clock readings differ between otherwise identical runs, so the
    reproducible single-threaded artifact stores zeros.  Real timings stay
    available in the solution JSON.
    """
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CONVERGENCE_COLUMNS)
        for record in trace.records:
            elapsed = record.elapsed_seconds if include_timing else 0.0
            writer.writerow([
                record.restart,
                record.nfe,
                fmt_float(record.best_objective),
                fmt_float(elapsed),
            ])


def read_convergence_csv(path: Path | str) -> ConvergenceTrace:
    records: list[TraceRecord] = []
    with _open_for_reading(path) as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != CONVERGENCE_COLUMNS:
            raise SpecError(
                f"{path}: expected convergence header {','.join(CONVERGENCE_COLUMNS)}"
            )
        for line_no, record in enumerate(reader, start=2):
            if len(record) != len(CONVERGENCE_COLUMNS):
                raise SpecError(f"{path}:{line_no}: expected {len(CONVERGENCE_COLUMNS)} fields")
            try:
                records.append(TraceRecord(
                    restart=int(record[0]),
                    nfe=int(record[1]),
                    best_objective=float(record[2]),
                    elapsed_seconds=float(record[3]),
                ))
            except ValueError as exc:
                raise SpecError(f"{path}:{line_no}: {exc}") from exc
    return ConvergenceTrace(records=records)


def write_solution(solution: DesignSolution, out_dir: Path | str,
                   include_timing: bool = False) -> Path:
    """Write the three solution files into ``out_dir`` and return it."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_design_csv(solution.rows, out / DESIGN_FILE)
    write_convergence_csv(solution.trace, out / CONVERGENCE_FILE, include_timing)
    summary = {
        "phase": solution.phase,
        "location": solution.location,
        "seed": solution.seed,
        "objective_initial": solution.objective_initial,
        "objective_final": solution.objective_final,
        "config": solution.config,
        "diagnostics": solution.diagnostics,
    }
    with open(out / SOLUTION_FILE, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return out


def read_solution(out_dir: Path | str) -> DesignSolution:
    out = Path(out_dir)
    with _open_for_reading(out / SOLUTION_FILE) as handle:
        summary = json.load(handle)
    return DesignSolution(
        phase=summary["phase"],
        rows=read_design_csv(out / DESIGN_FILE),
        objective_initial=summary["objective_initial"],
        objective_final=summary["objective_final"],
        trace=read_convergence_csv(out / CONVERGENCE_FILE),
        seed=summary["seed"],
        config=summary["config"],
        diagnostics=summary["diagnostics"],
        location=summary["location"],
    )
