"""Spec file parsing, matrix files, and the bundled example specs."""

import collections

import numpy as np
import pytest

from fieldopt.errors import SpecError
from fieldopt.specio import (
    bundled_spec_path,
    load_kinship_file,
    load_matrix,
    parse_spec,
    save_kinship_file,
    save_matrix,
    spec_from_dict,
)

FULL_DOC = """\
genotypes:
  - {id: CK, role: check}
  - {id: A, family: FA}
  - {id: B, family: FA}
  - {id: C, family: FB}
locations:
  - {id: L1, rows: 2, cols: 3}
  - {id: L2, plots: 4}
presence: 2
check_reps: {CK: 2}
kinship: {kind: family_blocks, off_diag: 0.25}
residual: {rho_r: 0.5, rho_c: 0.3, nugget: 0.1}
variance: {h2: 0.8}
fixed_effects: per_location
"""


def write_spec(tmp_path, text, name="trial.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestParseSpec:
    def test_full_document(self, tmp_path):
        spec = parse_spec(write_spec(tmp_path, FULL_DOC))
        assert [g.id for g in spec.genotypes] == ["CK", "A", "B", "C"]
        assert spec.genotypes[0].role == "check"
        assert spec.genotypes[1].family == "FA"
        assert spec.locations[0].layout.n_plots == 6
        assert spec.locations[1].plots == 4
        assert spec.presence == 2
        assert spec.check_reps == {"CK": 2}
        assert spec.kinship_kind == "family_blocks"
        assert spec.kinship_off_diag == 0.25
        assert spec.residual.kind == "ar1xar1"
        assert spec.residual.rho_r == 0.5
        assert spec.residual.nugget == 0.1
        assert spec.variance.sigma_a2 == pytest.approx(4.0)
        assert spec.fixed_effects == "per_location"

    def test_missing_file(self, tmp_path):
        with pytest.raises(SpecError, match="cannot read spec file"):
            parse_spec(tmp_path / "absent.yaml")

    def test_broken_yaml(self, tmp_path):
        path = write_spec(tmp_path, "genotypes: [{id: A,\n")
        with pytest.raises(SpecError, match="cannot parse spec file"):
            parse_spec(path)

    def test_non_mapping_document(self, tmp_path):
        path = write_spec(tmp_path, "- 1\n- 2\n")
        with pytest.raises(SpecError, match="key-value document"):
            parse_spec(path)

    def test_problems_are_aggregated(self):
        with pytest.raises(SpecError) as err:
            spec_from_dict(
                {
                    "surprise": 1,
                    "genotypes": [{"id": ""}, {"id": "A", "role": "weird"}],
                    "locations": [{"id": "L1"}],
                    "presence": True,
                }
            )
        message = str(err.value)
        assert message.startswith("invalid trial spec:")
        assert "surprise: unknown key" in message
        assert "genotypes[0].id" in message
        assert "locations[0]: needs rows/cols or plots" in message
        assert "presence: must be an integer, got True" in message

    def test_defaults(self):
        spec = spec_from_dict(
            {
                "genotypes": [{"id": "A"}, {"id": "B"}],
                "locations": [{"id": "L1", "plots": 2}],
            }
        )
        assert spec.presence == 1
        assert spec.check_reps == {}
        assert spec.kinship_kind == "identity"
        assert spec.residual.kind == "identity"
        assert spec.variance.sigma_a2 == 1.0
        assert spec.fixed_effects == "intercept"
        assert spec.genotypes[0].role == "experimental"

    def test_ragged_layout_keys(self):
        spec = spec_from_dict(
            {
                "genotypes": [{"id": "A"}],
                "locations": [{"id": "L1", "rows": 2, "cols": 3, "last_row_cols": 1}],
            }
        )
        assert spec.locations[0].layout.n_plots == 4

    def test_variance_needs_one_parameterization(self):
        base = {
            "genotypes": [{"id": "A"}],
            "locations": [{"id": "L1", "plots": 1}],
        }
        with pytest.raises(SpecError, match="h2 or sigma_a2, not both"):
            spec_from_dict({**base, "variance": {"h2": 0.5, "sigma_a2": 1.0}})
        with pytest.raises(SpecError, match="needs h2 or sigma_a2"):
            spec_from_dict({**base, "variance": {}})

    def test_explicit_sigma_values(self):
        spec = spec_from_dict(
            {
                "genotypes": [{"id": "A"}],
                "locations": [{"id": "L1", "plots": 1}],
                "variance": {"sigma_a2": 2.5, "sigma_e2": 0.5},
            }
        )
        assert spec.variance.sigma_a2 == 2.5
        assert spec.variance.sigma_e2 == 0.5

    def test_per_block_fixed_effects(self):
        spec = spec_from_dict(
            {
                "genotypes": [{"id": "A"}, {"id": "B"}],
                "locations": [{"id": "L1", "plots": 2}],
                "fixed_effects": {"kind": "per_block", "blocks": ["b1", "b2"]},
            }
        )
        assert spec.fixed_effects == "per_block"
        assert spec.fixed_effect_blocks == ["b1", "b2"]

    def test_per_block_mapping_requires_labels(self):
        with pytest.raises(SpecError, match="fixed_effects.blocks"):
            spec_from_dict(
                {
                    "genotypes": [{"id": "A"}],
                    "locations": [{"id": "L1", "plots": 1}],
                    "fixed_effects": {"kind": "per_block", "blocks": [1, 2]},
                }
            )

    def test_explicit_kinship_loads_relative_to_the_spec(self, tmp_path):
        save_kinship_file(tmp_path / "kin.txt", np.array([[1.0, 0.2], [0.2, 1.0]]))
        doc = """\
genotypes:
  - {id: A}
  - {id: B}
locations:
  - {id: L1, plots: 2}
kinship: {kind: explicit, path: kin.txt}
"""
        spec = parse_spec(write_spec(tmp_path, doc))
        assert spec.kinship_values[0, 1] == 0.2

    def test_explicit_kinship_size_mismatch(self, tmp_path):
        save_kinship_file(tmp_path / "kin.txt", np.eye(2))
        doc = """\
genotypes:
  - {id: A}
  - {id: B}
  - {id: C}
locations:
  - {id: L1, plots: 3}
kinship: {kind: explicit, path: kin.txt}
"""
        with pytest.raises(SpecError, match="matrix is 2x2 but the spec lists 3"):
            parse_spec(write_spec(tmp_path, doc))

    def test_explicit_kinship_needs_a_path(self):
        with pytest.raises(SpecError, match="kinship.path"):
            spec_from_dict(
                {
                    "genotypes": [{"id": "A"}],
                    "locations": [{"id": "L1", "plots": 1}],
                    "kinship": {"kind": "explicit"},
                }
            )


class TestKinshipFiles:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.standard_normal((4, 4))
        values = values + values.T
        path = tmp_path / "kin.txt"
        save_kinship_file(path, values)
        np.testing.assert_array_equal(load_kinship_file(path), values)

    @pytest.mark.parametrize(
        "text,match",
        [
            ("", "is empty"),
            ("x\n1\n", "header must be the size"),
            ("2\n1 0\n", "expected 2 rows, found 1"),
            ("2\n1 0\n0 one\n", "non-numeric"),
            ("2\n1 0 0\n0 1 0\n", "expected 2x2"),
            ("2\n1 0.5\n0 1\n", "not symmetric"),
        ],
    )
    def test_malformed_files(self, tmp_path, text, match):
        path = tmp_path / "kin.txt"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(SpecError, match=match):
            load_kinship_file(path)


class TestMatrixFiles:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        values = rng.standard_normal((3, 5))
        path = tmp_path / "m.txt"
        save_matrix(path, values)
        np.testing.assert_array_equal(load_matrix(path), values)

    def test_vectors_are_saved_as_one_row(self, tmp_path):
        path = tmp_path / "v.txt"
        save_matrix(path, np.array([1.0, 2.0]))
        assert load_matrix(path).shape == (1, 2)

    def test_header_is_checked(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("3\n1 2 3\n", encoding="utf-8")
        with pytest.raises(SpecError, match="rows cols"):
            load_matrix(path)

    def test_shape_is_checked(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("2 2\n1 2\n", encoding="utf-8")
        with pytest.raises(SpecError, match="expected 2x2"):
            load_matrix(path)


class TestBundledSpecs:
    def test_unknown_name(self):
        with pytest.raises(SpecError, match="no bundled spec"):
            bundled_spec_path("phase9_paper")

    def test_dispatch_benchmark_contents(self):
        spec = parse_spec(bundled_spec_path("phase1_paper"))
        assert len(spec.genotypes) == 403
        assert len(spec.experimentals()) == 400
        assert len(spec.checks()) == 3
        families = collections.Counter(g.family for g in spec.experimentals())
        assert families == {"F1": 14, "F2": 187, "F3": 199}
        assert len(spec.locations) == 5
        assert all(loc.layout.n_plots == 300 for loc in spec.locations)
        assert spec.presence == 3
        assert all(spec.check_reps[c.id] == 20 for c in spec.checks())
        assert spec.kinship_kind == "family_blocks"
        assert spec.residual.kind == "identity"
        assert spec.variance.sigma_a2 == pytest.approx(4.0)
        assert spec.fixed_effects == "per_location"

    @pytest.mark.parametrize(
        "name,kinship", [("phase2_paper", "identity"), ("phase2_kinship_paper", "family_blocks")]
    )
    def test_layout_benchmark_contents(self, name, kinship):
        spec = parse_spec(bundled_spec_path(name))
        assert len(spec.experimentals()) == 118
        assert len(spec.checks()) == 3
        families = collections.Counter(g.family for g in spec.genotypes)
        assert families == {"F1": 40, "F2": 40, "F3": 41}
        layout = spec.locations[0].layout
        assert (layout.rows, layout.cols) == (12, 12)
        assert sum(spec.check_reps.values()) == 26
        assert len(spec.experimentals()) + 26 == layout.n_plots
        assert spec.kinship_kind == kinship
        assert spec.residual.rho_r == 0.5 and spec.residual.rho_c == 0.5
        assert spec.fixed_effects == "intercept"
