"""Command-line interface: argument plumbing, output, exit codes."""

import json

import pytest

from fieldopt.cli import main
from fieldopt.errors import (
    FieldOptError,
    InfeasibleError,
    NumericalError,
    SpecError,
)

RUN_DOC = """\
genotypes:
  - {id: CK, role: check}
  - {id: G1, family: FA}
  - {id: G2, family: FA}
  - {id: G3, family: FB}
  - {id: G4, family: FB}
  - {id: G5, family: FB}
locations:
  - {id: L1, rows: 2, cols: 3}
  - {id: L2, rows: 2, cols: 3}
presence: 2
check_reps: {CK: 1}
kinship: {kind: family_blocks, off_diag: 0.5}
residual: {rho_r: 0.4, rho_c: 0.4}
variance: {h2: 0.8}
fixed_effects: per_location
"""

TINY_WITHIN_DOC = """\
genotypes:
  - {id: CK, role: check}
  - {id: A, family: FA}
  - {id: B, family: FA}
locations:
  - {id: L1, rows: 2, cols: 2}
check_reps: {CK: 2}
residual: {rho_r: 0.4, rho_c: 0.4}
variance: {h2: 0.8}
"""

TINY_BETWEEN_DOC = """\
genotypes:
  - {id: CK, role: check}
  - {id: A, family: FA}
  - {id: B, family: FB}
locations:
  - {id: L1, plots: 3}
  - {id: L2, plots: 3}
presence: 2
check_reps: {CK: 1}
variance: {h2: 0.8}
fixed_effects: per_location
"""

DEFICIT_DOC = RUN_DOC.replace("rows: 2, cols: 3", "rows: 2, cols: 4")

FAST = ["--np", "4", "--max-evals", "30", "--seed", "3"]


def write(tmp_path, text, name="trial.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestRunCommands:
    def test_between_prints_objectives(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        out = tmp_path / "out"
        code = main(["between", "--spec", spec, "--out", str(out), *FAST])
        assert code == 0
        line = capsys.readouterr().out.strip()
        assert line.startswith("between: objective ")
        initial, final = line.split("objective ")[1].split(" -> ")
        assert float(final) <= float(initial)
        assert (out / "between" / "design.csv").is_file()

    def test_within_with_location_filter(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        out = tmp_path / "out"
        code = main(["within", "--spec", spec, "--out", str(out),
                     "--location", "L2", *FAST])
        assert code == 0
        assert capsys.readouterr().out.startswith("within L2: objective ")
        assert not (out / "within_L1").exists()

    def test_both_reports_each_stage(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        out = tmp_path / "out"
        code = main(["both", "--spec", spec, "--out", str(out), *FAST])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert [line.split(":")[0] for line in lines] == [
            "between", "within L1", "within L2",
        ]

    def test_phase_strategy_defaults(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        out = tmp_path / "out"
        assert main(["both", "--spec", spec, "--out", str(out), *FAST]) == 0
        capsys.readouterr()
        between = json.loads((out / "between" / "solution.json").read_text())
        within = json.loads((out / "within_L1" / "solution.json").read_text())
        assert between["config"]["strategy"] == "rand3"
        assert within["config"]["strategy"] == "rand2best"

    def test_engine_flags_are_recorded(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        out = tmp_path / "out"
        code = main(["between", "--spec", spec, "--out", str(out),
                     "--np", "6", "--lambda", "0.3", "--strategy", "dir2best",
                     "--restarts", "2", "--max-evals", "24", "--k-eigen", "2",
                     "--seed", "9"])
        assert code == 0
        capsys.readouterr()
        config = json.loads((out / "between" / "solution.json").read_text())["config"]
        assert config["pop_size"] == 6
        assert config["locality"] == 0.3
        assert config["strategy"] == "dir2best"
        assert config["restarts"] == 2
        assert config["max_evals"] == 24
        assert config["k_eigen"] == 2
        assert config["seed"] == 9


class TestEvaluateCommand:
    def test_scores_match_the_run(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        out = tmp_path / "out"
        assert main(["within", "--spec", spec, "--out", str(out),
                     "--location", "L1", *FAST]) == 0
        run_line = capsys.readouterr().out.strip()
        final = float(run_line.rsplit(" -> ", 1)[1])
        design = str(out / "within_L1" / "design.csv")
        assert main(["evaluate", "--spec", spec, "--design", design]) == 0
        scores = json.loads(capsys.readouterr().out)
        assert scores["within:L1"] == pytest.approx(final, rel=1e-8)

    def test_missing_design_file(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        code = main(["evaluate", "--spec", spec,
                     "--design", str(tmp_path / "absent.csv")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_empty_design_file(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        design = tmp_path / "empty.csv"
        design.write_text(
            "phase,location,plot_row,plot_col,slot,genotype,family,role\n",
            encoding="utf-8",
        )
        code = main(["evaluate", "--spec", spec, "--design", str(design)])
        assert code == 2
        assert "holds no rows" in capsys.readouterr().err


class TestOracleCommand:
    def test_within_enumeration(self, tmp_path, capsys):
        spec = write(tmp_path, TINY_WITHIN_DOC)
        assert main(["oracle", "--spec", spec, "--phase", "within"]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["problem"] == "within:L1"
        assert result["evaluated"] == 24
        assert len(result["best_perm"]) == 4
        assert result["best_objective"] > 0.0

    def test_between_enumeration(self, tmp_path, capsys):
        spec = write(tmp_path, TINY_BETWEEN_DOC)
        assert main(["oracle", "--spec", spec, "--phase", "between"]) == 0
        result = json.loads(capsys.readouterr().out)
        assert result["problem"] == "between"
        assert result["evaluated"] == 16

    def test_refuses_large_problems(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        code = main(["oracle", "--spec", spec, "--phase", "between"])
        assert code == 2
        assert "exhaustive search refused" in capsys.readouterr().err


class TestExitCodes:
    def test_error_hierarchy_pins_process_codes(self):
        assert FieldOptError("x").exit_code == 1
        assert SpecError("x").exit_code == 2
        assert NumericalError("x").exit_code == 3
        assert InfeasibleError("x").exit_code == 4

    def test_missing_spec_exits_two(self, tmp_path, capsys):
        code = main(["between", "--spec", str(tmp_path / "absent.yaml")])
        assert code == 2
        assert "cannot read spec file" in capsys.readouterr().err

    def test_bad_engine_flag_exits_two(self, tmp_path, capsys):
        spec = write(tmp_path, RUN_DOC)
        code = main(["between", "--spec", spec, "--np", "2",
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "pop_size" in capsys.readouterr().err

    def test_capacity_deficit_exits_four(self, tmp_path, capsys):
        spec = write(tmp_path, DEFICIT_DOC)
        code = main(["between", "--spec", spec,
                     "--out", str(tmp_path / "out"), *FAST])
        assert code == 4
        assert "deficit" in capsys.readouterr().err

    def test_unknown_subcommand_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["optimize"])
        assert err.value.code == 2
