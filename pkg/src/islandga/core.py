"""Domain types shared by every module and the user-level operator interfaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Protocol, Sequence

import numpy as np


class ContractViolation(ValueError):
    """An operation was called with inputs outside its precondition."""


class ConfigError(ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True, order=True)
class Genome:
    """Fixed-length binary chromosome."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits:
            raise ContractViolation("genome length must be >= 1")
        if any(b not in (0, 1) for b in bits):
            raise ContractViolation(f"genes must be 0 or 1, got {bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, text: str) -> Genome:
        return cls(tuple(int(c) for c in text))

    def __len__(self) -> int:
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def __str__(self) -> str:
        return "".join(map(str, self.bits))


@dataclass(frozen=True)
class Individual:
    genome: Genome
    fitness: Optional[float] = None
    is_solution: bool = False

    def __post_init__(self):
        if self.fitness is not None:
            f = float(self.fitness)
            if math.isnan(f) or f < 0:
                raise ContractViolation(f"fitness must be a non-negative real, got {self.fitness!r}")
            object.__setattr__(self, "fitness", f)
        if self.is_solution and self.fitness is None:
            raise ContractViolation("is_solution requires a fitness value")

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None

    def with_fitness(self, fitness: float) -> Individual:
        return replace(self, fitness=fitness)

    def marked(self) -> Individual:
        return replace(self, is_solution=True)


Island = list[Individual]


@dataclass(frozen=True)
class PopulationSnapshot:
    generation: int
    islands: tuple[tuple[Individual, ...], ...]

    def __post_init__(self):
        if self.generation < 0:
            raise ContractViolation("generation must be non-negative")
        object.__setattr__(self, "islands", tuple(tuple(isl) for isl in self.islands))

    @property
    def num_islands(self) -> int:
        return len(self.islands)

    def individuals(self) -> list[Individual]:
        return [ind for island in self.islands for ind in island]

    def __len__(self) -> int:
        return sum(len(isl) for isl in self.islands)


@dataclass(frozen=True)
class MigrationPolicy:
    """Migration every ``frequency`` generations of ``migrant_count`` uniformly chosen individuals.

    ``topology`` maps a source island to its destination; ``None`` means the ring
    ``i -> (i + 1) mod J``.
    """

    frequency: int = 1
    migrant_count: int = 1
    topology: Optional[tuple[int, ...]] = None

    def destination(self, island: int, num_islands: int) -> int:
        if self.topology is None:
            return (island + 1) % num_islands
        return self.topology[island]


@dataclass(frozen=True)
class GaConfig:
    islands: int = 1
    population_size: int = 10
    genome_length: int = 8
    max_generations: int = 10
    mutation_probability: float = 0.01
    elitism_enabled: bool = True
    elite_count: int = 1
    migration: Optional[MigrationPolicy] = None
    master_seed: int = 0
    # worker pool size; None means one per available CPU
    threads: Optional[int] = None
    # added to every island index when deriving RNG streams, so a J=1 run can
    # replay island i of a larger run
    seed_island_offset: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.islands < 1:
            raise ConfigError("islands", "must be >= 1")
        if self.population_size < 1:
            raise ConfigError("population_size", "must be >= 1")
        if self.genome_length < 1:
            raise ConfigError("genome_length", "must be >= 1")
        if self.max_generations < 0:
            raise ConfigError("max_generations", "must be >= 0")
        if not 0.0 <= self.mutation_probability <= 1.0:
            raise ConfigError("mutation_probability", "must lie in [0, 1]")
        if not 0 <= self.elite_count <= self.population_size:
            raise ConfigError("elite_count", "must lie in [0, population_size]")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        m = self.migration
        if m is not None:
            if m.frequency < 1:
                raise ConfigError("migration_frequency", "must be >= 1")
            if not 0 <= m.migrant_count <= self.population_size:
                raise ConfigError("migration_count", "must lie in [0, population_size]")
            if m.topology is not None:
                if len(m.topology) != self.islands or any(
                    not 0 <= d < self.islands for d in m.topology
                ):
                    raise ConfigError("migration_topology", "needs one valid destination per island")


# Operator signatures of the user level. Every callable receives its private
# numpy Generator where randomness is involved.

Initialiser = Callable[[int, int, np.random.Generator], list[Individual]]  # (m, count, rng)
FitnessEvaluator = Callable[[Genome], float]
TerminationCriterion = Callable[[Individual], bool]
SelectionOperator = Callable[[Sequence[Individual], int, np.random.Generator], list[tuple[int, int]]]
CrossoverOperator = Callable[[Genome, Genome, np.random.Generator], tuple[Genome, Genome]]
MutationOperator = Callable[[Genome, float, np.random.Generator], Genome]


class ElitismPolicy(Protocol):
    def __call__(
        self,
        previous: Sequence[Individual],
        offspring: Sequence[Individual],
        elite_count: int,
        size: int,
        rng: np.random.Generator,
    ) -> list[Individual]: ...


@dataclass(frozen=True)
class OperatorSuite:
    """The pluggable behaviours of one GA. A ``None`` slot forwards its input unchanged."""

    initialiser: Optional[Initialiser] = None
    fitness_evaluator: Optional[FitnessEvaluator] = None
    termination_criterion: Optional[TerminationCriterion] = None
    selection_operator: Optional[SelectionOperator] = None
    crossover_operator: Optional[CrossoverOperator] = None
    mutation_operator: Optional[MutationOperator] = None
    elitism_policy: Optional[ElitismPolicy] = None
    extras: dict[str, Any] = field(default_factory=dict, compare=False)


def passthrough(record: Any) -> Any:
    """Default behaviour of an unimplemented phase."""
    return record


def ranking_key(ind: Individual) -> tuple[float, tuple[int, ...]]:
    """Sort key realising :func:`compare_individuals` (best first)."""
    if ind.fitness is None:
        raise ContractViolation("cannot rank an individual without fitness")
    return (-ind.fitness, ind.genome.bits)


def compare_individuals(a: Individual, b: Individual) -> int:
    """Return -1 if ``a`` precedes ``b``, 1 if it follows, 0 if equal in rank.

    Higher fitness first; equal fitness falls back to lexicographic genome order.
    """
    ka, kb = ranking_key(a), ranking_key(b)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def best_individual(individuals: Sequence[Individual]) -> Optional[Individual]:
    evaluated = [ind for ind in individuals if ind.evaluated]
    if not evaluated:
        return None
    return min(evaluated, key=ranking_key)
