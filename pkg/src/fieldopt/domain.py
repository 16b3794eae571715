"""Trial specifications and their translation into permutation problems.

Two problem families share the same engine:

* dispatching experimental genotypes across locations (capacity and
  uniqueness constraints, no field geometry, independent residuals), and
* arranging one location's entries on its plot grid (no constraints, a
  spatially correlated residual, checks sharing genetic-effect columns).

Both precompute everything that does not depend on the permutation, so an
evaluation is one small matrix assembly plus a partial eigendecomposition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .engine import STEP_RETRY_FACTOR, PairSampler, PermutationProblem
from .errors import (
    CapacityMismatchError,
    InfeasibleError,
    SpecError,
    StepGenerationStalledError,
)
from .model import (
    DesignMatrices,
    FieldLayout,
    KinshipMatrix,
    ObjectiveConfig,
    ResidualModel,
    VarianceComponents,
    build_kinship_blocks,
    build_projection,
    build_residual,
    kinship_inverse,
    objective_from_downdated_information,
    objective_from_information,
)

log = logging.getLogger(__name__)

ROLES = ("experimental", "check")
FIXED_EFFECT_KINDS = ("intercept", "per_location", "per_block")

#: Attempts to build a random feasible cross-location assignment.
START_ATTEMPTS = 20


@dataclass(frozen=True)
class Genotype:
    id: str
    family: str | None = None
    role: str = "experimental"


@dataclass(frozen=True)
class Location:
    """One trial site: either a plot grid or a bare plot count."""

    id: str
    layout: FieldLayout | None = None
    plots: int | None = None

    def plot_count(self) -> int:
        if self.layout is not None:
            return self.layout.n_plots
        if self.plots is not None:
            return self.plots
        raise SpecError(f"location {self.id}: needs rows/cols or a plot count")


@dataclass
class TrialSpec:
    """Everything a run needs to know about the trial being designed."""

    genotypes: list[Genotype]
    locations: list[Location]
    presence: int = 1
    check_reps: dict[str, int] = field(default_factory=dict)
    kinship_kind: str = "identity"
    kinship_off_diag: float = 0.5
    kinship_values: np.ndarray | None = None
    kinship_path: str | None = None
    residual: ResidualModel = field(default_factory=ResidualModel)
    variance: VarianceComponents = field(
        default_factory=lambda: VarianceComponents(sigma_a2=1.0)
    )
    fixed_effects: str = "intercept"
    fixed_effect_blocks: list[str] | None = None

    def experimentals(self) -> list[Genotype]:
        return [g for g in self.genotypes if g.role == "experimental"]

    def checks(self) -> list[Genotype]:
        return [g for g in self.genotypes if g.role == "check"]

    def genotype_by_id(self) -> dict[str, Genotype]:
        return {g.id: g for g in self.genotypes}

    def location_by_id(self) -> dict[str, Location]:
        return {loc.id: loc for loc in self.locations}

    def reps_of(self, genotype: Genotype) -> int:
        """Entry count of a genotype at one location it is present at."""
        if genotype.role == "check":
            return self.check_reps.get(genotype.id, 1)
        return 1

    def violations(self) -> list[str]:
        """Every broken invariant, tagged with its field path."""
        problems: list[str] = []
        if not self.genotypes:
            problems.append("genotypes: at least one genotype is required")
        seen: set[str] = set()
        for k, genotype in enumerate(self.genotypes):
            if not genotype.id:
                problems.append(f"genotypes[{k}].id: must be non-empty")
            elif genotype.id in seen:
                problems.append(f"genotypes[{k}].id: duplicate id {genotype.id!r}")
            seen.add(genotype.id)
            if genotype.role not in ROLES:
                problems.append(
                    f"genotypes[{k}].role: unknown role {genotype.role!r}, "
                    f"choose from {ROLES}"
                )
        if not self.locations:
            problems.append("locations: at least one location is required")
        seen_locations: set[str] = set()
        for k, location in enumerate(self.locations):
            if location.id in seen_locations:
                problems.append(f"locations[{k}].id: duplicate id {location.id!r}")
            seen_locations.add(location.id)
            if location.layout is None and location.plots is None:
                problems.append(
                    f"locations[{k}]: needs either rows/cols or a plot count"
                )
            if location.plots is not None and location.plots < 1:
                problems.append(f"locations[{k}].plots: must be >= 1, got {location.plots}")
        if self.presence < 1:
            problems.append(f"presence: must be >= 1, got {self.presence}")
        elif self.locations and self.presence > len(self.locations):
            problems.append(
                f"presence: {self.presence} exceeds the location count {len(self.locations)}"
            )
        check_ids = {g.id for g in self.checks()}
        for check_id, reps in self.check_reps.items():
            if check_id not in check_ids:
                problems.append(f"check_reps.{check_id}: not a check genotype")
            if reps < 1:
                problems.append(f"check_reps.{check_id}: must be >= 1, got {reps}")
        if self.kinship_kind not in ("identity", "family_blocks", "explicit"):
            problems.append(
                f"kinship.kind: unknown kind {self.kinship_kind!r}, choose from "
                "('identity', 'family_blocks', 'explicit')"
            )
        if self.kinship_kind == "family_blocks" and not 0.0 <= self.kinship_off_diag < 1.0:
            problems.append(
                f"kinship.off_diag: must lie in [0, 1), got {self.kinship_off_diag}"
            )
        if self.kinship_kind == "explicit":
            if self.kinship_values is None:
                problems.append("kinship.path: explicit kinship needs a matrix file")
            elif self.kinship_values.shape[0] != len(self.genotypes):
                problems.append(
                    f"kinship.path: matrix is {self.kinship_values.shape[0]}x"
                    f"{self.kinship_values.shape[1]} but the spec lists "
                    f"{len(self.genotypes)} genotypes"
                )
        if self.fixed_effects not in FIXED_EFFECT_KINDS:
            problems.append(
                f"fixed_effects: unknown kind {self.fixed_effects!r}, "
                f"choose from {FIXED_EFFECT_KINDS}"
            )
        if self.fixed_effects == "per_block" and not self.fixed_effect_blocks:
            problems.append("fixed_effects.blocks: per_block needs per-plot block labels")
        return problems

    def validate(self) -> "TrialSpec":
        problems = self.violations()
        if problems:
            raise SpecError("invalid trial spec:\n" + "\n".join(problems))
        return self


def spec_kinship(spec: TrialSpec, genotypes: list[Genotype]) -> KinshipMatrix:
    """Kinship matrix restricted to ``genotypes`` in the given order."""
    n = len(genotypes)
    if spec.kinship_kind == "identity":
        return KinshipMatrix(np.eye(n))
    if spec.kinship_kind == "family_blocks":
        values = np.eye(n)
        families: dict[str, list[int]] = {}
        for idx, genotype in enumerate(genotypes):
            if genotype.family is not None:
                families.setdefault(genotype.family, []).append(idx)
        for members in families.values():
            ix = np.ix_(members, members)
            size = len(members)
            values[ix] = build_kinship_blocks([size], spec.kinship_off_diag).values
        return KinshipMatrix(values)
    if spec.kinship_values is None:
        raise SpecError("kinship.path: explicit kinship matrix was not loaded")
    order = {g.id: k for k, g in enumerate(spec.genotypes)}
    idx = [order[g.id] for g in genotypes]
    return KinshipMatrix(spec.kinship_values[np.ix_(idx, idx)])


# ---------------------------------------------------------------------------
# Cross-location dispatch.


@dataclass
class BetweenAssignment:
    """Which experimental genotype occupies each cross-location slot.

    ``slots[s]`` indexes into the spec's experimental genotype list and
    ``slot_location[s]`` is the static location index of slot ``s``.
    """

    slots: np.ndarray
    slot_location: np.ndarray


@dataclass(frozen=True)
class FamilySpreadTable:
    """Per-location counts of experimental entries from each family."""

    locations: list[str]
    families: list[str]
    counts: np.ndarray


def between_capacities(spec: TrialSpec) -> np.ndarray:
    """Experimental slots per location once check replicates are set aside."""
    checks = spec.checks()
    capacities = []
    for location in spec.locations:
        reserved = sum(spec.reps_of(check) for check in checks)
        capacity = location.plot_count() - reserved
        if capacity < 0:
            raise CapacityMismatchError(
                f"location {location.id}: {reserved} check entries exceed "
                f"{location.plot_count()} plots"
            )
        capacities.append(capacity)
    return np.array(capacities, dtype=np.intp)


def slot_locations(spec: TrialSpec) -> np.ndarray:
    """Static slot-to-location map: capacity-many slots per location, in order."""
    return np.repeat(np.arange(len(spec.locations), dtype=np.intp), between_capacities(spec))


def random_start_between(spec: TrialSpec, rng: np.random.Generator) -> BetweenAssignment:
    """Random feasible dispatch of every experimental genotype.

    Each genotype receives ``presence`` distinct locations by a randomized
    round-robin that always prefers the locations with the most remaining
    capacity (random tie-break), then slots within a location are shuffled.
    """
    capacities = between_capacities(spec)
    n_locations = len(spec.locations)
    experimentals = spec.experimentals()
    n_exp = len(experimentals)
    required = n_exp * spec.presence
    total = int(capacities.sum())
    if total != required:
        raise CapacityMismatchError(
            f"presence {spec.presence} x {n_exp} experimentals needs {required} "
            f"slots but the locations offer {total} "
            f"(deficit {required - total})"
        )
    chosen = None
    for _ in range(START_ATTEMPTS):
        remaining = capacities.copy()
        trial = np.zeros((n_exp, n_locations), dtype=bool)
        complete = True
        for g in rng.permutation(n_exp):
            open_locations = np.flatnonzero(remaining > 0)
            if len(open_locations) < spec.presence:
                complete = False
                break
            order = np.lexsort((rng.random(len(open_locations)), -remaining[open_locations]))
            take = open_locations[order[: spec.presence]]
            trial[g, take] = True
            remaining[take] -= 1
        if complete and not remaining.any():
            chosen = trial
            break
    if chosen is None:
        raise InfeasibleError(
            f"no feasible start assignment found in {START_ATTEMPTS} attempts"
        )
    slots = np.empty(total, dtype=np.intp)
    offset = 0
    for loc_index in range(n_locations):
        members = np.flatnonzero(chosen[:, loc_index])
        rng.shuffle(members)
        slots[offset : offset + len(members)] = members
        offset += len(members)
    return BetweenAssignment(slots=slots, slot_location=slot_locations(spec))


class BetweenProblem:
    """Cross-location dispatch as a permutation problem over a start design.

    A permutation ``perm`` places the start design's slot contents so that
    slot ``s`` holds ``start.slots[perm[s]]``.  The residual is independent
    and the fixed effects are the per-location means, so the projection has
    closed form and the information matrix is a rank-``n_locations``
    downdate of a constant matrix.
    """

    def __init__(
        self,
        spec: TrialSpec,
        start: BetweenAssignment,
        objective_cfg: ObjectiveConfig | None = None,
    ):
        spec.validate()
        if len(spec.locations) < 2:
            raise SpecError("cross-location dispatch needs at least two locations")
        self.spec = spec
        self.start = start
        self.experimentals = spec.experimentals()
        self.capacities = between_capacities(spec)
        self.slot_location = slot_locations(spec)
        self.n_slots = int(self.capacities.sum())
        if len(start.slots) != self.n_slots:
            raise SpecError(
                f"start assignment has {len(start.slots)} slots, spec needs {self.n_slots}"
            )
        self.offsets = np.concatenate(([0], np.cumsum(self.capacities)))
        n_genotypes = len(self.experimentals)
        self.objective_cfg = _effective_objective(objective_cfg, n_genotypes)
        kinship = spec_kinship(spec, self.experimentals)
        g_inv = kinship_inverse(kinship) / spec.variance.sigma_a2
        # Z'Z is presence*I for every feasible dispatch.
        self._base = spec.presence / spec.variance.sigma_e2 * np.eye(n_genotypes) + g_inv
        self._base_eigvals, self._base_eigvecs = np.linalg.eigh(self._base)
        self._sigma_e2 = spec.variance.sigma_e2
        self._downdate_scale = np.sqrt(self.capacities * self._sigma_e2)
        # Start-slot indices of each genotype, for expressing fresh random
        # assignments as permutations of the start design.
        self._start_slots_of: list[np.ndarray] = [
            np.flatnonzero(start.slots == g) for g in range(n_genotypes)
        ]
        self.problem = PermutationProblem(
            dimension=self.n_slots,
            evaluate=self.evaluate,
            step_feasible=self.step_feasible,
            initial=self.initial,
            feasible=self.feasible,
            apply_steps=self.apply_steps,
        )

    def contents(self, perm: np.ndarray) -> np.ndarray:
        return self.start.slots[perm]

    def assignment(self, perm: np.ndarray) -> BetweenAssignment:
        return BetweenAssignment(
            slots=self.contents(perm), slot_location=self.slot_location.copy()
        )

    def evaluate(self, perm: np.ndarray) -> float:
        return objective_from_downdated_information(
            self._base_eigvals,
            self._base_eigvecs,
            self._downdate_factor(perm),
            self.objective_cfg,
        )

    def information(self, perm: np.ndarray) -> np.ndarray:
        """Dense information matrix of the dispatch; ``evaluate`` never forms it."""
        factor = self._downdate_factor(perm)
        return self._base - factor @ factor.T

    def _downdate_factor(self, perm: np.ndarray) -> np.ndarray:
        genotype = self.start.slots[perm]
        presence = np.zeros((len(self.capacities), len(self.experimentals)))
        presence[self.slot_location, genotype] = 1.0
        return presence.T / self._downdate_scale[None, :]

    def step_feasible(self, perm: np.ndarray, i: int, j: int) -> bool:
        loc_i = self.slot_location[i]
        loc_j = self.slot_location[j]
        if loc_i == loc_j:
            return True
        gen_i = self.start.slots[perm[i]]
        gen_j = self.start.slots[perm[j]]
        if gen_i == gen_j:
            return True
        window_i = self.start.slots[perm[self.offsets[loc_i] : self.offsets[loc_i + 1]]]
        if np.any(window_i == gen_j):
            return False
        window_j = self.start.slots[perm[self.offsets[loc_j] : self.offsets[loc_j + 1]]]
        return not np.any(window_j == gen_i)

    def feasible(self, perm: np.ndarray) -> bool:
        genotype = self.start.slots[perm]
        for loc_index in range(len(self.capacities)):
            window = genotype[self.offsets[loc_index] : self.offsets[loc_index + 1]]
            if len(np.unique(window)) != len(window):
                return False
        return True

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        """Fresh random dispatch, expressed as a permutation of the start."""
        fresh = random_start_between(self.spec, rng)
        perm = np.empty(self.n_slots, dtype=np.intp)
        used = np.zeros(len(self.experimentals), dtype=np.intp)
        for s, g in enumerate(fresh.slots):
            perm[s] = self._start_slots_of[g][used[g]]
            used[g] += 1
        return perm

    def apply_steps(
        self, base: np.ndarray, n_steps: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Interchange walk with an incremental location-membership table.

        Draws, accepts and rejects exactly as the generic walk does with
        ``step_feasible``, but each check is a table lookup instead of a
        window scan.  A genotype occurs at most once per location in any
        feasible dispatch, so membership flips are unambiguous.
        """
        perm = base.copy()
        if n_steps == 0:
            return perm
        n_genotypes = len(self.experimentals)
        genotype = self.start.slots[perm]
        contents = genotype.tolist()
        slot_location = self.slot_location.tolist()
        membership = np.zeros(len(self.capacities) * n_genotypes, dtype=np.uint8)
        membership[self.slot_location * n_genotypes + genotype] = 1
        present = bytearray(membership.tobytes())
        dim = len(perm)
        limit = STEP_RETRY_FACTOR * dim
        pairs = PairSampler(rng, dim)
        for _ in range(n_steps):
            rejected = 0
            while True:
                i, j = pairs.draw()
                loc_i = slot_location[i]
                loc_j = slot_location[j]
                gen_i = contents[i]
                gen_j = contents[j]
                if loc_i == loc_j or gen_i == gen_j:
                    break
                row_i = loc_i * n_genotypes
                row_j = loc_j * n_genotypes
                if not (present[row_i + gen_j] or present[row_j + gen_i]):
                    present[row_i + gen_i] = 0
                    present[row_j + gen_j] = 0
                    present[row_i + gen_j] = 1
                    present[row_j + gen_i] = 1
                    break
                rejected += 1
                if rejected >= limit:
                    raise StepGenerationStalledError(
                        f"no feasible interchange found after {rejected} rejected pairs",
                        rejected=rejected,
                    )
            perm[i], perm[j] = perm[j], perm[i]
            contents[i], contents[j] = gen_j, gen_i
        return perm


def family_spread(assignment: BetweenAssignment, spec: TrialSpec) -> FamilySpreadTable:
    """Count the experimental entries of every family at every location."""
    experimentals = spec.experimentals()
    families: list[str] = []
    for genotype in experimentals:
        label = genotype.family if genotype.family is not None else "-"
        if label not in families:
            families.append(label)
    family_index = {label: k for k, label in enumerate(families)}
    per_slot = np.array(
        [
            family_index[
                experimentals[g].family if experimentals[g].family is not None else "-"
            ]
            for g in assignment.slots
        ],
        dtype=np.intp,
    )
    counts = np.zeros((len(spec.locations), len(families)), dtype=np.intp)
    np.add.at(counts, (assignment.slot_location, per_slot), 1)
    return FamilySpreadTable(
        locations=[loc.id for loc in spec.locations], families=families, counts=counts
    )


def spread_imbalance(table: FamilySpreadTable) -> float:
    """Sum over families of the coefficient of variation across locations.

    Zero exactly when every family is spread perfectly evenly; a family
    absent everywhere contributes zero.
    """
    total = 0.0
    for f in range(len(table.families)):
        column = table.counts[:, f].astype(float)
        mean = column.mean()
        if mean > 0.0:
            total += column.std() / mean
    return float(total)


# ---------------------------------------------------------------------------
# Within-location layout.


@dataclass
class WithinPlacement:
    """Entry arrangement on one location's grid.

    ``plots[p]`` indexes into ``genotypes`` (the location's genotype list;
    check replicates share one index).
    """

    plots: np.ndarray
    genotypes: list[Genotype]
    layout: FieldLayout


@dataclass(frozen=True)
class CheckSpreadSummary:
    """How well the check plots cover the grid.

    ``min_pairwise_distance`` is the smallest Chebyshev distance between two
    check plots (infinite when fewer than two);``max_adjacent_run`` is the
    longest straight run of consecutive check plots along any row, column,
    or diagonal line.
    """

    min_pairwise_distance: float
    max_adjacent_run: int


class WithinProblem:
    """Spatial arrangement of one location's entries as a permutation problem.

    The entry list expands ``allocation`` in order: experimentals once,
    checks by their replicate counts.  The identity permutation is therefore
    the declared start design (entries on plots row-major in allocation
    order).  Every permutation is feasible.
    """

    def __init__(
        self,
        spec: TrialSpec,
        location_id: str,
        allocation: list[str] | None = None,
        objective_cfg: ObjectiveConfig | None = None,
    ):
        spec.validate()
        location = spec.location_by_id().get(location_id)
        if location is None:
            raise SpecError(f"location {location_id!r} is not in the spec")
        if location.layout is None:
            raise SpecError(f"location {location_id}: layout needs rows/cols")
        self.spec = spec
        self.location = location
        self.layout = location.layout
        by_id = spec.genotype_by_id()
        if allocation is None:
            allocation = [g.id for g in spec.genotypes]
        unknown = [gid for gid in allocation if gid not in by_id]
        if unknown:
            raise SpecError(f"allocation names unknown genotypes: {unknown}")
        if len(set(allocation)) != len(allocation):
            raise SpecError("allocation lists a genotype twice")
        self.genotypes = [by_id[gid] for gid in allocation]
        entry_gen: list[int] = []
        for idx, genotype in enumerate(self.genotypes):
            entry_gen.extend([idx] * spec.reps_of(genotype))
        if len(entry_gen) != self.layout.n_plots:
            raise CapacityMismatchError(
                f"location {location_id}: {len(entry_gen)} entries for "
                f"{self.layout.n_plots} plots"
            )
        self.entry_gen = np.array(entry_gen, dtype=np.intp)
        n_genotypes = len(self.genotypes)
        self.objective_cfg = _effective_objective(objective_cfg, n_genotypes)
        self.residual = build_residual(self.layout, spec.residual)
        self.X = fixed_effect_matrix(spec, self.layout)
        self.projection = build_projection(self.residual, self.X)
        kinship = spec_kinship(spec, self.genotypes)
        self._g_inv = kinship_inverse(kinship) / spec.variance.sigma_a2
        self._sigma_e2 = spec.variance.sigma_e2
        self.problem = PermutationProblem(
            dimension=self.layout.n_plots, evaluate=self.evaluate
        )

    def placement(self, perm: np.ndarray) -> WithinPlacement:
        return WithinPlacement(
            plots=self.entry_gen[perm], genotypes=self.genotypes, layout=self.layout
        )

    def evaluate(self, perm: np.ndarray) -> float:
        genotype = self.entry_gen[perm]
        n = len(genotype)
        incidence = np.zeros((n, len(self.genotypes)))
        incidence[np.arange(n), genotype] = 1.0
        info = incidence.T @ (self.projection @ incidence) / self._sigma_e2
        return objective_from_information(info + self._g_inv, self.objective_cfg)

    def permutation_for(self, plot_genotype_ids: list[str]) -> np.ndarray:
        """Permutation that reproduces an explicit per-plot genotype listing."""
        if len(plot_genotype_ids) != self.layout.n_plots:
            raise SpecError(
                f"{len(plot_genotype_ids)} plot entries for {self.layout.n_plots} plots"
            )
        index = {g.id: k for k, g in enumerate(self.genotypes)}
        entries_of: list[list[int]] = [[] for _ in self.genotypes]
        for e, g in enumerate(self.entry_gen):
            entries_of[g].append(e)
        used = [0] * len(self.genotypes)
        perm = np.empty(self.layout.n_plots, dtype=np.intp)
        for p, gid in enumerate(plot_genotype_ids):
            if gid not in index:
                raise SpecError(f"plot {p}: unknown genotype {gid!r}")
            g = index[gid]
            if used[g] >= len(entries_of[g]):
                raise SpecError(f"plot {p}: too many entries of genotype {gid!r}")
            perm[p] = entries_of[g][used[g]]
            used[g] += 1
        return perm


def fixed_effect_matrix(spec: TrialSpec, layout: FieldLayout) -> np.ndarray:
    """Within-location fixed-effect incidence for the spec's coding."""
    n = layout.n_plots
    if spec.fixed_effects == "per_block":
        labels = spec.fixed_effect_blocks or []
        if len(labels) != n:
            raise SpecError(
                f"fixed_effects.blocks: {len(labels)} labels for {n} plots"
            )
        blocks: list[str] = []
        for label in labels:
            if label not in blocks:
                blocks.append(label)
        x = np.zeros((n, len(blocks)))
        index = {label: k for k, label in enumerate(blocks)}
        for p, label in enumerate(labels):
            x[p, index[label]] = 1.0
        return x
    # Within a single location the per-location coding is an intercept.
    return np.ones((n, 1))


def check_spread_summary(placement: WithinPlacement, layout: FieldLayout) -> CheckSpreadSummary:
    """Distance and adjacency diagnostics of the check plots."""
    roles = np.array([g.role == "check" for g in placement.genotypes], dtype=bool)
    is_check = roles[placement.plots]
    row, col = layout.grid_positions()
    check_rows = row[is_check]
    check_cols = col[is_check]
    if len(check_rows) < 2:
        min_distance = np.inf
    else:
        dr = np.abs(check_rows[:, None] - check_rows[None, :])
        dc = np.abs(check_cols[:, None] - check_cols[None, :])
        chebyshev = np.maximum(dr, dc).astype(float)
        np.fill_diagonal(chebyshev, np.inf)
        min_distance = float(chebyshev.min())
    grid = np.zeros((layout.rows, layout.cols), dtype=bool)
    grid[row[is_check], col[is_check]] = True
    valid = np.zeros((layout.rows, layout.cols), dtype=bool)
    valid[row, col] = True
    max_run = 0
    directions = ((0, 1), (1, 0), (1, 1), (1, -1))
    for r0 in range(layout.rows):
        for c0 in range(layout.cols):
            if not (valid[r0, c0] and grid[r0, c0]):
                continue
            for dr_, dc_ in directions:
                prev_r, prev_c = r0 - dr_, c0 - dc_
                if (
                    0 <= prev_r < layout.rows
                    and 0 <= prev_c < layout.cols
                    and valid[prev_r, prev_c]
                    and grid[prev_r, prev_c]
                ):
                    continue  # not the start of a run in this direction
                length = 0
                r, c = r0, c0
                while (
                    0 <= r < layout.rows
                    and 0 <= c < layout.cols
                    and valid[r, c]
                    and grid[r, c]
                ):
                    length += 1
                    r += dr_
                    c += dc_
                max_run = max(max_run, length)
    return CheckSpreadSummary(min_pairwise_distance=min_distance, max_adjacent_run=max_run)


def family_adjacency_count(placement: WithinPlacement, layout: FieldLayout) -> int:
    """Orthogonally adjacent plot pairs whose genotypes share a family."""
    families: list[str | None] = [g.family for g in placement.genotypes]
    codes = np.full((layout.rows, layout.cols), -1, dtype=np.intp)
    labels: dict[str, int] = {}
    row, col = layout.grid_positions()
    for p in range(layout.n_plots):
        family = families[placement.plots[p]]
        if family is None:
            continue
        code = labels.setdefault(family, len(labels))
        codes[row[p], col[p]] = code
    count = 0
    right = (codes[:, :-1] >= 0) & (codes[:, :-1] == codes[:, 1:])
    down = (codes[:-1, :] >= 0) & (codes[:-1, :] == codes[1:, :])
    count += int(right.sum()) + int(down.sum())
    return count


def assignment_to_design(design, spec: TrialSpec) -> DesignMatrices:
    """Incidence matrices of a dispatch or a placement.

    A ``BetweenAssignment`` yields per-location fixed-effect columns and an
    experimental-genotype Z.  A ``WithinPlacement`` yields the spec's
    within-location fixed effects and a Z whose check replicates share a
    column.
    """
    if isinstance(design, BetweenAssignment):
        n = len(design.slots)
        x = np.zeros((n, len(spec.locations)))
        x[np.arange(n), design.slot_location] = 1.0
        z = np.zeros((n, len(spec.experimentals())))
        z[np.arange(n), design.slots] = 1.0
        return DesignMatrices(X=x, Z=z)
    if isinstance(design, WithinPlacement):
        n = design.layout.n_plots
        x = fixed_effect_matrix(spec, design.layout)
        z = np.zeros((n, len(design.genotypes)))
        z[np.arange(n), design.plots] = 1.0
        return DesignMatrices(X=x, Z=z)
    raise SpecError(f"cannot build design matrices from {type(design).__name__}")


def _effective_objective(cfg: ObjectiveConfig | None, n_genotypes: int) -> ObjectiveConfig:
    """Clamp the eigenvalue count to the genotype count of this problem."""
    cfg = cfg if cfg is not None else ObjectiveConfig()
    if cfg.mode == "truncated_eigen" and cfg.k_eigen > n_genotypes:
        log.info(
            "k_eigen %d exceeds the %d genotypes of this problem; using %d",
            cfg.k_eigen,
            n_genotypes,
            n_genotypes,
        )
        return ObjectiveConfig(k_eigen=n_genotypes, mode=cfg.mode)
    return cfg
