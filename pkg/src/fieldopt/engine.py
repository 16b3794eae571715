"""Differential evolution over permutations.

The only move is the pairwise interchange.  A proposal walks away from a
base individual by a number of interchanges proportional (via a locality
factor) to the Hamming distance between two other sampled individuals, so
step sizes shrink as the population converges.  Selection is elitist,
restarts draw fresh populations from per-restart seed substreams, and runs
are bit-reproducible for a fixed seed regardless of the thread count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, InfeasibleError, StepGenerationStalledError

STRATEGIES = ("rand3", "rand2best", "dir2best")

#: Per-interchange resample budget is this factor times the dimension.
STEP_RETRY_FACTOR = 100

#: Attempts to draw a feasible start permutation before giving up.
INITIAL_ATTEMPTS = 100


@dataclass
class PermutationProblem:
    """A minimization problem over permutations of ``dimension`` items.

    ``evaluate`` must be deterministic and side-effect free.
    ``step_feasible(perm, i, j)`` vets one interchange against the current
    working permutation; ``None`` means every interchange is allowed.
    ``initial`` draws a feasible random permutation; ``None`` means a
    uniform shuffle.  ``feasible`` checks a whole permutation and is only
    consulted for externally supplied individuals and by exhaustive search.
    ``apply_steps(base, n_steps, rng)`` optionally replaces the generic
    interchange walk with a problem-aware equivalent; it must follow the
    same sampling and rejection contract as ``de_step``.
    """

    dimension: int
    evaluate: Callable[[np.ndarray], float]
    step_feasible: Callable[[np.ndarray, int, int], bool] | None = None
    initial: Callable[[np.random.Generator], np.ndarray] | None = None
    feasible: Callable[[np.ndarray], bool] | None = None
    apply_steps: Callable[[np.ndarray, int, np.random.Generator], np.ndarray] | None = None

    def random_initial(self, rng: np.random.Generator) -> np.ndarray:
        if self.initial is not None:
            return self.initial(rng)
        return rng.permutation(self.dimension)


@dataclass(frozen=True)
class Individual:
    """A permutation together with its objective value."""

    perm: np.ndarray
    fitness: float


@dataclass(frozen=True)
class EngineConfig:
    """Search settings.  ``max_evals`` is a per-restart budget that counts
    the initial population; a budget below ``pop_size`` truncates it, which
    keeps minimal-budget runs at their warm start."""

    pop_size: int = 25
    locality: float = 0.1
    strategy: str = "rand3"
    max_evals: int = 2000
    restarts: int = 1
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.pop_size < 4:
            raise ConfigError(f"pop_size: population must be >= 4, got {self.pop_size}")
        if self.max_evals < 1:
            raise ConfigError(f"max_evals: must be >= 1, got {self.max_evals}")
        if not 0.0 < self.locality <= 1.0:
            raise ConfigError(f"locality: must lie in (0, 1], got {self.locality}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"strategy: unknown strategy {self.strategy!r}, choose from {STRATEGIES}"
            )
        if self.restarts < 1:
            raise ConfigError(f"restarts: must be >= 1, got {self.restarts}")
        if self.threads < 1:
            raise ConfigError(f"threads: must be >= 1, got {self.threads}")


@dataclass(frozen=True)
class TraceRecord:
    restart: int
    nfe: int
    best_objective: float
    elapsed_seconds: float


@dataclass
class ConvergenceTrace:
    """Best-so-far objective per restart, recorded once per generation."""

    records: list[TraceRecord] = field(default_factory=list)

    def best_objective(self) -> float:
        return min(record.best_objective for record in self.records)

    def restarts(self) -> list[int]:
        seen: dict[int, None] = {}
        for record in self.records:
            seen.setdefault(record.restart, None)
        return list(seen)


def hamming(p: np.ndarray, q: np.ndarray) -> int:
    """Number of positions at which two permutations disagree (never 1)."""
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return int(np.count_nonzero(p != q))


def interchange(p: np.ndarray, i: int, j: int) -> np.ndarray:
    """Copy of ``p`` with the contents of positions ``i`` and ``j`` swapped."""
    if i == j:
        raise ValueError("interchange needs two distinct positions")
    dim = len(p)
    if not (0 <= i < dim and 0 <= j < dim):
        raise ValueError(f"positions out of range for dimension {dim}: {i}, {j}")
    out = p.copy()
    out[i], out[j] = p[j], p[i]
    return out


def steps_from_distance(locality: float, distance: int) -> int:
    """Interchange count for a sampled distance.

    Nearest integer to ``locality * distance``, floored at one whenever the
    distance is nonzero so proposals always move.
    """
    if distance <= 0:
        return 0
    return max(1, int(locality * distance + 0.5))


class PairSampler:
    """Uniform position pairs ``i != j``, drawn from ``rng`` in batches.

    Batching amortizes the generator call overhead over many draws.  Every
    interchange walk must consume pairs through this class so that walks
    with the same seed visit the same pairs regardless of how feasibility
    is checked.
    """

    CHUNK = 1024

    def __init__(self, rng: np.random.Generator, dimension: int):
        if dimension < 2:
            raise ConfigError(
                f"interchange steps need at least two positions, got {dimension}"
            )
        self._rng = rng
        self._dim = dimension
        self._first: list[int] = []
        self._second: list[int] = []
        self._cursor = 0

    def draw(self) -> tuple[int, int]:
        if self._cursor >= len(self._first):
            self._first = self._rng.integers(self._dim, size=self.CHUNK).tolist()
            self._second = self._rng.integers(self._dim - 1, size=self.CHUNK).tolist()
            self._cursor = 0
        i = self._first[self._cursor]
        j = self._second[self._cursor]
        self._cursor += 1
        if j >= i:
            j += 1
        return i, j


def de_step(
    base: np.ndarray,
    n_steps: int,
    problem: PermutationProblem,
    rng: np.random.Generator,
) -> np.ndarray:
    """Apply ``n_steps`` feasibility-preserving interchanges to a copy of ``base``.

    Position pairs are sampled uniformly; a pair rejected by
    ``step_feasible`` is resampled, up to ``STEP_RETRY_FACTOR * dimension``
    times per step.
    """
    perm = base.copy()
    if n_steps == 0:
        return perm
    dim = len(perm)
    limit = STEP_RETRY_FACTOR * dim
    pairs = PairSampler(rng, dim)
    for _ in range(n_steps):
        rejected = 0
        while True:
            i, j = pairs.draw()
            if problem.step_feasible is None or problem.step_feasible(perm, i, j):
                perm[i], perm[j] = perm[j], perm[i]
                break
            rejected += 1
            if rejected >= limit:
                raise StepGenerationStalledError(
                    f"no feasible interchange found after {rejected} rejected pairs",
                    rejected=rejected,
                )
    return perm


def _sample_others(rng: np.random.Generator, size: int, exclude: set, k: int) -> tuple:
    candidates = [i for i in range(size) if i not in exclude]
    if len(candidates) < k:
        raise ConfigError(
            f"population of {size} is too small to sample {k} distinct individuals"
        )
    picked = rng.permutation(len(candidates))[:k]
    return tuple(candidates[int(i)] for i in picked)


def _best_index(population: Sequence[Individual]) -> int:
    return min(range(len(population)), key=lambda i: (population[i].fitness, i))


def propose(
    strategy: str,
    population: Sequence[Individual],
    target_index: int,
    locality: float,
    problem: PermutationProblem,
    rng: np.random.Generator,
) -> Individual:
    """Build and evaluate one trial individual for ``target_index``.

    rand3 walks away from a third random individual by the distance between
    two others; rand2best walks away from the population best; dir2best
    walks away from the better of two random individuals by its partner's
    distance to the best.
    """
    size = len(population)
    if size < 4:
        raise ConfigError(f"strategies need a population of at least 4, got {size}")
    if strategy == "rand3":
        a, b, c = _sample_others(rng, size, {target_index}, 3)
        base = population[c].perm
        distance = hamming(population[a].perm, population[b].perm)
    elif strategy == "rand2best":
        best = _best_index(population)
        a, b = _sample_others(rng, size, {target_index, best}, 2)
        base = population[best].perm
        distance = hamming(population[a].perm, population[b].perm)
    elif strategy == "dir2best":
        best = _best_index(population)
        a, b = _sample_others(rng, size, {target_index, best}, 2)
        if population[b].fitness < population[a].fitness:
            a, b = b, a
        base = population[a].perm
        distance = hamming(population[b].perm, population[best].perm)
    else:
        raise ConfigError(f"strategy: unknown strategy {strategy!r}")
    n_steps = steps_from_distance(locality, distance)
    if problem.apply_steps is not None:
        trial = problem.apply_steps(base, n_steps, rng)
    else:
        trial = de_step(base, n_steps, problem, rng)
    return Individual(perm=trial, fitness=float(problem.evaluate(trial)))


def select(trial: Individual, incumbent: Individual) -> Individual:
    """Elitist replacement; the trial also wins exact ties."""
    return trial if trial.fitness <= incumbent.fitness else incumbent


def _feasible_initial(problem: PermutationProblem, rng: np.random.Generator) -> np.ndarray:
    for _ in range(INITIAL_ATTEMPTS):
        perm = problem.random_initial(rng)
        if problem.feasible is None or problem.feasible(perm):
            return perm
    raise InfeasibleError(
        f"no feasible start permutation found in {INITIAL_ATTEMPTS} attempts"
    )


def evolve(
    problem: PermutationProblem,
    cfg: EngineConfig,
    progress_sink: Callable[[int, int, float, float], None] | None = None,
    seed_members: Sequence[np.ndarray] = (),
) -> tuple[Individual, ConvergenceTrace]:
    """Run the restarted search and return the overall best individual.

    Restart ``r`` consumes substream ``r`` of ``SeedSequence(cfg.seed)``, so
    any restart is reproducible in isolation.  Proposals of one generation
    are built against the generation-start population and each member owns
    its own RNG substream, which makes threaded and serial schedules produce
    identical results.  ``seed_members`` are injected verbatim into the
    first restart's initial population (warm starts).

    The evaluation budget ``cfg.max_evals`` applies per restart and counts
    the initial population.
    """
    t0 = time.perf_counter()
    trace = ConvergenceTrace()
    overall: Individual | None = None
    restart_streams = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None

    def record(restart: int, nfe: int, best_value: float) -> None:
        elapsed = time.perf_counter() - t0
        trace.records.append(TraceRecord(restart, nfe, best_value, elapsed))
        if progress_sink is not None:
            progress_sink(restart, nfe, best_value, elapsed)

    try:
        for restart, stream in enumerate(restart_streams):
            init_rng = np.random.default_rng(stream.spawn(1)[0])
            population: list[Individual] = []
            nfe = 0
            for i in range(cfg.pop_size):
                if restart == 0 and i < len(seed_members):
                    perm = np.array(seed_members[i], dtype=np.intp)
                    if problem.feasible is not None and not problem.feasible(perm):
                        raise InfeasibleError(f"seed member {i} is not feasible")
                else:
                    perm = _feasible_initial(problem, init_rng)
                population.append(Individual(perm=perm, fitness=float(problem.evaluate(perm))))
                nfe += 1
                if nfe >= cfg.max_evals:
                    break
            best = population[_best_index(population)]
            record(restart, nfe, best.fitness)

            while nfe < cfg.max_evals:
                member_streams = stream.spawn(1)[0].spawn(len(population))
                count = min(len(population), cfg.max_evals - nfe)
                snapshot = list(population)

                def build_trial(i: int) -> Individual:
                    rng = np.random.default_rng(member_streams[i])
                    return propose(cfg.strategy, snapshot, i, cfg.locality, problem, rng)

                if pool is None:
                    trials = [build_trial(i) for i in range(count)]
                else:
                    trials = list(pool.map(build_trial, range(count)))
                for i, trial in enumerate(trials):
                    population[i] = select(trial, snapshot[i])
                nfe += count
                best = population[_best_index(population)]
                record(restart, nfe, best.fitness)

            if overall is None or best.fitness < overall.fitness:
                overall = best
    finally:
        if pool is not None:
            pool.shutdown()
    assert overall is not None
    return overall, trace
