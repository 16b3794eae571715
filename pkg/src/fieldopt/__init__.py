"""Field-trial design search.

Library for minimizing a mixed-model prediction-error-variance criterion
over candidate designs with differential evolution on permutations, in two
phases: dispatching genotypes across locations, then arranging each
location's plots on its grid.
"""

from .engine import (
    ConvergenceTrace,
    EngineConfig,
    Individual,
    PermutationProblem,
    de_step,
    evolve,
    hamming,
    interchange,
    propose,
    select,
)
from .errors import (
    CapacityMismatchError,
    ConfigError,
    FieldOptError,
    InfeasibleError,
    NumericalError,
    RankDeficiencyError,
    SingularMatrixError,
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
    objective,
    pev,
)
from .domain import (
    BetweenAssignment,
    BetweenProblem,
    CheckSpreadSummary,
    FamilySpreadTable,
    Genotype,
    Location,
    TrialSpec,
    WithinPlacement,
    WithinProblem,
    assignment_to_design,
    check_spread_summary,
    family_adjacency_count,
    family_spread,
    random_start_between,
    spread_imbalance,
)
from .oracle import OracleResult, exhaustive_best, kron_ar1_reference, pev_via_mme
from .report import (
    DesignRow,
    DesignSolution,
    read_design_csv,
    read_solution,
    write_solution,
)
from .runner import RunConfig, run, score_design
from .specio import bundled_spec_path, parse_spec

__version__ = "0.1.0"
