"""Builders for the small trial specs the tests share."""

from __future__ import annotations

import numpy as np

from fieldopt.domain import Genotype, Location, TrialSpec
from fieldopt.model import FieldLayout, ResidualModel, VarianceComponents


def toy_within_spec(rho: float = 0.5, h2: float = 0.8,
                    kinship: str = "identity") -> TrialSpec:
    """A 2x3 field holding four experimentals and one check planted twice."""
    return TrialSpec(
        genotypes=[
            Genotype("CK", None, "check"),
            Genotype("A", "FA"),
            Genotype("B", "FA"),
            Genotype("C", "FB"),
            Genotype("D", "FB"),
        ],
        locations=[Location("L1", layout=FieldLayout(rows=2, cols=3))],
        check_reps={"CK": 2},
        kinship_kind=kinship,
        residual=ResidualModel(kind="ar1xar1", rho_r=rho, rho_c=rho),
        variance=VarianceComponents.from_heritability(h2),
        fixed_effects="intercept",
    )


def small_between_spec(presence: int = 2, n_exp: int = 5,
                       plots: int = 6, n_locations: int = 2) -> TrialSpec:
    """Locations with bare plot counts, one check, family-block kinship."""
    genotypes = [Genotype("CK", None, "check")]
    for k in range(n_exp):
        genotypes.append(Genotype(f"G{k + 1}", "FA" if k < 2 else "FB"))
    return TrialSpec(
        genotypes=genotypes,
        locations=[Location(f"L{k + 1}", plots=plots) for k in range(n_locations)],
        presence=presence,
        check_reps={"CK": 1},
        kinship_kind="family_blocks",
        kinship_off_diag=0.5,
        residual=ResidualModel(),
        variance=VarianceComponents.from_heritability(0.8),
        fixed_effects="per_location",
    )


def paper_between_spec() -> TrialSpec:
    """The five-location dispatch benchmark built in memory."""
    genotypes = [Genotype(f"CH{k}", None, "check") for k in (1, 2, 3)]
    n = 0
    for family, size in (("F1", 14), ("F2", 187), ("F3", 199)):
        for _ in range(size):
            n += 1
            genotypes.append(Genotype(f"G{n:03d}", family))
    return TrialSpec(
        genotypes=genotypes,
        locations=[
            Location(f"L{k}", layout=FieldLayout(rows=15, cols=20))
            for k in range(1, 6)
        ],
        presence=3,
        check_reps={"CH1": 20, "CH2": 20, "CH3": 20},
        kinship_kind="family_blocks",
        kinship_off_diag=0.5,
        residual=ResidualModel(),
        variance=VarianceComponents.from_heritability(0.8),
        fixed_effects="per_location",
    )


def random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    """A well-conditioned random symmetric positive definite matrix."""
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)
