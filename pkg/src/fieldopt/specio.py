"""Reading and writing the package's plain-text formats.

Trial specs are YAML documents with a fixed key vocabulary.  Kinship
matrices and debug matrix dumps are whitespace-separated text with a
one-line size header.
"""

from __future__ import annotations

import importlib.resources
from pathlib import Path

import numpy as np
import yaml

from .domain import Genotype, Location, TrialSpec
from .errors import SpecError
from .model import FieldLayout, ResidualModel, VarianceComponents


def parse_spec(path: str | Path) -> TrialSpec:
    """Load and validate a trial spec file.

    Every violation is collected and reported in one pass, tagged with the
    path of the offending field.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read spec file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecError(f"cannot parse spec file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SpecError(f"spec file {path} must hold a key-value document")
    return spec_from_dict(data, base_dir=path.parent)


def spec_from_dict(data: dict, base_dir: str | Path = ".") -> TrialSpec:
    """Build a validated TrialSpec from an already-parsed document."""
    problems: list[str] = []
    known = {
        "genotypes",
        "locations",
        "presence",
        "check_reps",
        "kinship",
        "residual",
        "variance",
        "fixed_effects",
    }
    for key in data:
        if key not in known:
            problems.append(f"{key}: unknown key")

    genotypes = _parse_genotypes(data.get("genotypes"), problems)
    locations = _parse_locations(data.get("locations"), problems)
    presence = _parse_int(data.get("presence", 1), "presence", problems)
    check_reps = _parse_check_reps(data.get("check_reps"), problems)
    kinship_kind, off_diag, kinship_path = _parse_kinship(data.get("kinship"), problems)
    residual = _parse_residual(data.get("residual"), problems)
    variance = _parse_variance(data.get("variance"), problems)
    fixed_effects, blocks = _parse_fixed_effects(data.get("fixed_effects"), problems)

    kinship_values = None
    if kinship_kind == "explicit" and kinship_path is not None:
        try:
            kinship_values = load_kinship_file(Path(base_dir) / kinship_path)
        except SpecError as exc:
            problems.append(f"kinship.path: {exc}")

    if problems:
        raise SpecError("invalid trial spec:\n" + "\n".join(problems))

    spec = TrialSpec(
        genotypes=genotypes,
        locations=locations,
        presence=presence,
        check_reps=check_reps,
        kinship_kind=kinship_kind,
        kinship_off_diag=off_diag,
        kinship_values=kinship_values,
        kinship_path=kinship_path,
        residual=residual,
        variance=variance,
        fixed_effects=fixed_effects,
        fixed_effect_blocks=blocks,
    )
    return spec.validate()


def _parse_genotypes(raw, problems: list[str]) -> list[Genotype]:
    if raw is None:
        problems.append("genotypes: missing")
        return []
    if not isinstance(raw, list):
        problems.append("genotypes: must be a list")
        return []
    out: list[Genotype] = []
    for k, entry in enumerate(raw):
        if not isinstance(entry, dict):
            problems.append(f"genotypes[{k}]: must be a mapping")
            continue
        gid = entry.get("id")
        if not isinstance(gid, str) or not gid:
            problems.append(f"genotypes[{k}].id: must be a non-empty string")
            continue
        family = entry.get("family")
        if family is not None and not isinstance(family, str):
            problems.append(f"genotypes[{k}].family: must be a string or null")
            family = None
        role = entry.get("role", "experimental")
        out.append(Genotype(id=gid, family=family, role=role))
    return out


def _parse_locations(raw, problems: list[str]) -> list[Location]:
    if raw is None:
        problems.append("locations: missing")
        return []
    if not isinstance(raw, list):
        problems.append("locations: must be a list")
        return []
    out: list[Location] = []
    for k, entry in enumerate(raw):
        if not isinstance(entry, dict):
            problems.append(f"locations[{k}]: must be a mapping")
            continue
        lid = entry.get("id")
        if not isinstance(lid, str) or not lid:
            problems.append(f"locations[{k}].id: must be a non-empty string")
            continue
        layout = None
        plots = None
        if "rows" in entry or "cols" in entry:
            rows = _parse_int(entry.get("rows"), f"locations[{k}].rows", problems)
            cols = _parse_int(entry.get("cols"), f"locations[{k}].cols", problems)
            last = entry.get("last_row_cols")
            if last is not None:
                last = _parse_int(last, f"locations[{k}].last_row_cols", problems)
            if rows is not None and cols is not None:
                try:
                    layout = FieldLayout(rows=rows, cols=cols, last_row_cols=last)
                except SpecError as exc:
                    problems.append(f"locations[{k}]: {exc}")
        elif "plots" in entry:
            plots = _parse_int(entry.get("plots"), f"locations[{k}].plots", problems)
        else:
            problems.append(f"locations[{k}]: needs rows/cols or plots")
        out.append(Location(id=lid, layout=layout, plots=plots))
    return out


def _parse_check_reps(raw, problems: list[str]) -> dict[str, int]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        problems.append("check_reps: must map check ids to replicate counts")
        return {}
    out: dict[str, int] = {}
    for key, value in raw.items():
        reps = _parse_int(value, f"check_reps.{key}", problems)
        if reps is not None:
            out[str(key)] = reps
    return out


def _parse_kinship(raw, problems: list[str]) -> tuple[str, float, str | None]:
    if raw is None:
        return "identity", 0.5, None
    if not isinstance(raw, dict):
        problems.append("kinship: must be a mapping")
        return "identity", 0.5, None
    kind = raw.get("kind", "identity")
    off_diag = raw.get("off_diag", 0.5)
    path = raw.get("path")
    if not isinstance(off_diag, (int, float)):
        problems.append("kinship.off_diag: must be a number")
        off_diag = 0.5
    if kind == "explicit" and not isinstance(path, str):
        problems.append("kinship.path: explicit kinship needs a file path")
        path = None
    return kind, float(off_diag), path


def _parse_residual(raw, problems: list[str]) -> ResidualModel:
    if raw is None:
        return ResidualModel()
    if not isinstance(raw, dict):
        problems.append("residual: must be a mapping")
        return ResidualModel()
    try:
        return ResidualModel(
            kind=raw.get("kind", "ar1xar1" if ("rho_r" in raw or "rho_c" in raw) else "identity"),
            rho_r=float(raw.get("rho_r", 0.0)),
            rho_c=float(raw.get("rho_c", 0.0)),
            nugget=float(raw.get("nugget", 0.0)),
        )
    except (SpecError, TypeError, ValueError) as exc:
        problems.append(f"residual: {exc}")
        return ResidualModel()


def _parse_variance(raw, problems: list[str]) -> VarianceComponents:
    if raw is None:
        return VarianceComponents(sigma_a2=1.0)
    if not isinstance(raw, dict):
        problems.append("variance: must be a mapping")
        return VarianceComponents(sigma_a2=1.0)
    try:
        if "h2" in raw:
            if "sigma_a2" in raw:
                problems.append("variance: give h2 or sigma_a2, not both")
            return VarianceComponents.from_heritability(float(raw["h2"]))
        if "sigma_a2" in raw:
            return VarianceComponents(
                sigma_a2=float(raw["sigma_a2"]),
                sigma_e2=float(raw.get("sigma_e2", 1.0)),
            )
        problems.append("variance: needs h2 or sigma_a2")
        return VarianceComponents(sigma_a2=1.0)
    except (SpecError, TypeError, ValueError) as exc:
        problems.append(f"variance: {exc}")
        return VarianceComponents(sigma_a2=1.0)


def _parse_fixed_effects(raw, problems: list[str]) -> tuple[str, list[str] | None]:
    if raw is None:
        return "intercept", None
    if isinstance(raw, str):
        return raw, None
    if isinstance(raw, dict):
        kind = raw.get("kind")
        blocks = raw.get("blocks")
        if kind != "per_block":
            problems.append("fixed_effects.kind: mapping form is only for per_block")
            return "intercept", None
        if not isinstance(blocks, list) or not all(isinstance(b, str) for b in blocks):
            problems.append("fixed_effects.blocks: must be a list of labels")
            return "per_block", None
        return "per_block", blocks
    problems.append("fixed_effects: must be a string or a per_block mapping")
    return "intercept", None


def _parse_int(raw, path: str, problems: list[str]) -> int | None:
    if isinstance(raw, bool) or not isinstance(raw, int):
        problems.append(f"{path}: must be an integer, got {raw!r}")
        return None
    return raw


# ---------------------------------------------------------------------------
# Matrix files.


def load_kinship_file(path: str | Path) -> np.ndarray:
    """Symmetric matrix file: a header line ``n`` then n rows of n floats."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise SpecError(f"cannot read kinship file {path}: {exc}") from exc
    rows = [line for line in lines if line.strip()]
    if not rows:
        raise SpecError(f"kinship file {path} is empty")
    try:
        n = int(rows[0].split()[0])
    except ValueError as exc:
        raise SpecError(f"kinship file {path}: header must be the size n") from exc
    if len(rows) - 1 != n:
        raise SpecError(f"kinship file {path}: expected {n} rows, found {len(rows) - 1}")
    try:
        values = np.array([[float(v) for v in row.split()] for row in rows[1:]])
    except ValueError as exc:
        raise SpecError(f"kinship file {path}: non-numeric entry") from exc
    if values.shape != (n, n):
        raise SpecError(f"kinship file {path}: expected {n}x{n} entries, got {values.shape}")
    if not np.array_equal(values, values.T):
        raise SpecError(f"kinship file {path}: matrix is not symmetric")
    return values


def save_kinship_file(path: str | Path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float)
    lines = [str(values.shape[0])]
    lines += [" ".join(format(v, ".17g") for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_matrix(path: str | Path, values: np.ndarray) -> None:
    """Debug dump: header line ``rows cols`` then row-major entries."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    lines = [f"{values.shape[0]} {values.shape[1]}"]
    lines += [" ".join(format(v, ".17g") for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    rows = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not rows:
        raise SpecError(f"matrix file {path} is empty")
    header = rows[0].split()
    if len(header) != 2:
        raise SpecError(f"matrix file {path}: header must be 'rows cols'")
    n_rows, n_cols = int(header[0]), int(header[1])
    values = np.array([[float(v) for v in row.split()] for row in rows[1:]])
    if values.shape != (n_rows, n_cols):
        raise SpecError(
            f"matrix file {path}: expected {n_rows}x{n_cols} entries, got {values.shape}"
        )
    return values


def bundled_spec_path(name: str) -> Path:
    """Path of a spec file shipped with the package (e.g. ``phase1_paper``)."""
    resource = importlib.resources.files("fieldopt") / "specs" / f"{name}.yaml"
    if not resource.is_file():
        raise SpecError(f"no bundled spec named {name!r}")
    return Path(str(resource))
