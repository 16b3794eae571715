"""Solution serialization: delimited tables and the JSON summary."""

import math

import pytest

from fieldopt.engine import ConvergenceTrace, TraceRecord
from fieldopt.errors import SpecError
from fieldopt.report import (
    CONVERGENCE_FILE,
    DESIGN_FILE,
    SOLUTION_FILE,
    DesignRow,
    DesignSolution,
    fmt_float,
    read_convergence_csv,
    read_design_csv,
    read_solution,
    write_convergence_csv,
    write_design_csv,
    write_solution,
)


def sample_rows():
    return [
        DesignRow("between", "L1", None, None, 1, "G001", "F1", "experimental"),
        DesignRow("within", "L1", 2, 3, 15, "CH1", "", "check"),
    ]


def sample_trace():
    return ConvergenceTrace(
        records=[
            TraceRecord(0, 25, 1.2345678912345, 0.5),
            TraceRecord(0, 50, 1.1000000001, 1.25),
            TraceRecord(1, 25, 1.3, 2.0),
        ]
    )


def sample_solution():
    return DesignSolution(
        phase="within",
        rows=sample_rows(),
        objective_initial=0.444096188,
        objective_final=0.0660446283951733,
        trace=sample_trace(),
        seed=11,
        config={"pop_size": 25, "strategy": "rand2best"},
        diagnostics={"elapsed_seconds": 3.5},
        location="L1",
    )


class TestFmtFloat:
    def test_nine_significant_digits(self):
        assert fmt_float(1.2345678912345) == "1.23456789"
        assert fmt_float(0.000123456789123) == "0.000123456789"
        assert fmt_float(3.0) == "3"

    def test_round_trips_reported_precision(self):
        value = 28.2841713947
        assert float(fmt_float(value)) == pytest.approx(value, rel=1e-8)


class TestDesignCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "design.csv"
        write_design_csv(sample_rows(), path)
        assert read_design_csv(path) == sample_rows()

    def test_header_line(self, tmp_path):
        path = tmp_path / "design.csv"
        write_design_csv([], path)
        first = path.read_text(encoding="utf-8").splitlines()[0]
        assert first == "phase,location,plot_row,plot_col,slot,genotype,family,role"

    def test_between_rows_leave_coordinates_empty(self, tmp_path):
        path = tmp_path / "design.csv"
        write_design_csv(sample_rows(), path)
        line = path.read_text(encoding="utf-8").splitlines()[1]
        assert line == "between,L1,,,1,G001,F1,experimental"

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "design.csv"
        path.write_text("a,b\n", encoding="utf-8")
        with pytest.raises(SpecError, match="expected design header"):
            read_design_csv(path)

    def test_short_record_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "design.csv"
        write_design_csv(sample_rows(), path)
        with open(path, "a", encoding="utf-8") as handle:
            handle.write("within,L1\n")
        with pytest.raises(SpecError, match=r":4: expected 8 fields"):
            read_design_csv(path)

    def test_non_numeric_slot_rejected(self, tmp_path):
        path = tmp_path / "design.csv"
        path.write_text(
            "phase,location,plot_row,plot_col,slot,genotype,family,role\n"
            "within,L1,1,1,first,G1,F1,experimental\n",
            encoding="utf-8",
        )
        with pytest.raises(SpecError, match=r":2: "):
            read_design_csv(path)


class TestConvergenceCsv:
    def test_round_trip_zeroes_timing_by_default(self, tmp_path):
        path = tmp_path / "convergence.csv"
        write_convergence_csv(sample_trace(), path)
        trace = read_convergence_csv(path)
        assert [r.nfe for r in trace.records] == [25, 50, 25]
        assert all(r.elapsed_seconds == 0.0 for r in trace.records)
        assert trace.records[0].best_objective == pytest.approx(
            1.2345678912345, rel=1e-8
        )

    def test_timing_kept_on_request(self, tmp_path):
        path = tmp_path / "convergence.csv"
        write_convergence_csv(sample_trace(), path, include_timing=True)
        trace = read_convergence_csv(path)
        assert [r.elapsed_seconds for r in trace.records] == [0.5, 1.25, 2.0]

    def test_objectives_use_nine_digits(self, tmp_path):
        path = tmp_path / "convergence.csv"
        write_convergence_csv(sample_trace(), path)
        line = path.read_text(encoding="utf-8").splitlines()[1]
        assert line == "0,25,1.23456789,0"

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("nope\n", encoding="utf-8")
        with pytest.raises(SpecError, match="expected convergence header"):
            read_convergence_csv(path)


class TestDesignSolution:
    def test_regressions_are_rejected(self):
        with pytest.raises(ValueError, match="start design was lost"):
            DesignSolution(
                phase="within",
                rows=[],
                objective_initial=1.0,
                objective_final=2.0,
                trace=ConvergenceTrace(),
                seed=0,
                config={},
            )

    def test_equal_objectives_are_fine(self):
        DesignSolution(
            phase="within",
            rows=[],
            objective_initial=1.0,
            objective_final=1.0,
            trace=ConvergenceTrace(),
            seed=0,
            config={},
        )


class TestSolutionDirectory:
    def test_writes_all_three_files(self, tmp_path):
        out = write_solution(sample_solution(), tmp_path / "run")
        assert (out / DESIGN_FILE).is_file()
        assert (out / CONVERGENCE_FILE).is_file()
        assert (out / SOLUTION_FILE).is_file()

    def test_json_keeps_full_float_precision(self, tmp_path):
        solution = sample_solution()
        out = write_solution(solution, tmp_path)
        loaded = read_solution(out)
        assert loaded.objective_final == solution.objective_final
        assert loaded.objective_initial == solution.objective_initial

    def test_round_trip_preserves_everything_but_timing(self, tmp_path):
        solution = sample_solution()
        out = write_solution(solution, tmp_path)
        loaded = read_solution(out)
        assert loaded.phase == "within"
        assert loaded.location == "L1"
        assert loaded.seed == 11
        assert loaded.config == solution.config
        assert loaded.diagnostics == solution.diagnostics
        assert loaded.rows == solution.rows
        objectives = [
            (r.restart, r.nfe, float(fmt_float(r.best_objective)))
            for r in solution.trace.records
        ]
        assert [
            (r.restart, r.nfe, r.best_objective) for r in loaded.trace.records
        ] == objectives

    def test_json_is_stable_across_writes(self, tmp_path):
        first = write_solution(sample_solution(), tmp_path / "a")
        second = write_solution(sample_solution(), tmp_path / "b")
        assert (first / SOLUTION_FILE).read_bytes() == (
            second / SOLUTION_FILE
        ).read_bytes()
        assert (first / DESIGN_FILE).read_bytes() == (second / DESIGN_FILE).read_bytes()
        assert (first / CONVERGENCE_FILE).read_bytes() == (
            second / CONVERGENCE_FILE
        ).read_bytes()
