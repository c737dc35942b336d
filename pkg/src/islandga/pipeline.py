"""One GA generation as a chain job over islands.

Stage layout::

    split -> fitness -> termination_check -> selection      (maps, one task per island)
          -> crossover                                      (reduce, one partition per island)
          -> mutation -> elitism                            (maps, one task per island)

Selection keys each parent by a :class:`CoupleKey`; the shuffle brings both
parents of a couple to the same reducer. When elitism is active (or the island
size is odd) the whole previous island also travels to the reducer under an
:class:`IslandKey` so the elitism phase can choose among old and new individuals.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, NamedTuple, Optional, Protocol, Sequence

import numpy as np

from .core import (
    ConfigError,
    ContractViolation,
    CrossoverOperator,
    ElitismPolicy,
    FitnessEvaluator,
    GaConfig,
    Individual,
    MutationOperator,
    OperatorSuite,
    PopulationSnapshot,
    SelectionOperator,
    TerminationCriterion,
)
from .executor import ChainPlan, LocalExecutor, Record, SeedStreams, TaskContext, map_stage, reduce_stage
from .operators import truncate_or_pad

FITNESS = "fitness"
TERMINATION_CHECK = "termination_check"
SELECTION = "selection"
CROSSOVER = "crossover"
MUTATION = "mutation"
ELITISM = "elitism"
PHASES = (FITNESS, TERMINATION_CHECK, SELECTION, CROSSOVER, MUTATION, ELITISM)


@dataclass(frozen=True)
class IslandKey:
    """Key of records that cross the shuffle without being paired."""

    island: int


@dataclass(frozen=True)
class CoupleKey:
    island: int
    couple_index: int


class PhaseRecord(NamedTuple):
    key: Any
    value: Individual
    offspring_flag: bool = False


@dataclass(frozen=True)
class TerminationFlag:
    generation: int
    island: int
    satisfying_individual: Individual


class FlagStore(Protocol):
    def record(self, flag: TerminationFlag) -> None: ...

    def any_for(self, generation: int) -> bool: ...

    def flags_for(self, generation: int) -> list[TerminationFlag]: ...


class MemoryFlagStore:
    def __init__(self):
        self._flags: dict[tuple[int, int], TerminationFlag] = {}
        self._lock = threading.Lock()

    def record(self, flag: TerminationFlag) -> None:
        with self._lock:
            self._flags.setdefault((flag.generation, flag.island), flag)

    def any_for(self, generation: int) -> bool:
        with self._lock:
            return any(g == generation for g, _ in self._flags)

    def flags_for(self, generation: int) -> list[TerminationFlag]:
        with self._lock:
            return [f for (g, _), f in sorted(self._flags.items()) if g == generation]


def island_partitioner(key: Any, num_partitions: int) -> int:
    return key.island % num_partitions


def split_population(snapshot: PopulationSnapshot, num_islands: int) -> list[list[Record]]:
    """Deal the population into ``num_islands`` contiguous groups, earlier groups taking the remainder."""
    individuals = snapshot.individuals()
    n = len(individuals)
    if num_islands < 1:
        raise ConfigError("islands", "must be >= 1")
    if n < num_islands:
        raise ConfigError("islands", f"{n} individuals cannot fill {num_islands} islands")
    base, extra = divmod(n, num_islands)
    splits, start = [], 0
    for i in range(num_islands):
        size = base + (1 if i < extra else 0)
        splits.append([Record(None, ind) for ind in individuals[start:start + size]])
        start += size
    return splits


def fitness_phase(records: Sequence, evaluator: Optional[FitnessEvaluator]) -> list[Record]:
    """Evaluate every individual that has no fitness yet."""
    out = []
    for i, rec in enumerate(records):
        ind = rec.value
        if evaluator is not None and ind.fitness is None:
            try:
                ind = ind.with_fitness(evaluator(ind.genome))
            except Exception as exc:
                raise RuntimeError(f"fitness evaluation failed for individual {i}: {exc}") from exc
        out.append(Record(rec.key, ind))
    return out


def termination_check_phase(
    records: Sequence,
    criterion: Optional[TerminationCriterion],
    generation: int = 0,
    island: int = 0,
) -> tuple[list[Record], Optional[TerminationFlag]]:
    """Mark satisfying individuals; return a flag carrying the first of them, if any."""
    if criterion is None:
        return [Record(rec.key, rec.value) for rec in records], None
    out, flag = [], None
    for rec in records:
        ind = rec.value
        if criterion(ind):
            ind = ind.marked()
            if flag is None:
                flag = TerminationFlag(generation, island, ind)
        out.append(Record(rec.key, ind))
    return out, flag


def selection_phase(
    records: Sequence,
    selector: SelectionOperator,
    carry_previous: bool,
    rng: np.random.Generator,
    island: int = 0,
    size: Optional[int] = None,
) -> list[Record]:
    """Pick ``size // 2`` couples and key every chosen parent by its couple.

    A parent chosen several times is emitted once per choice. With
    ``carry_previous`` the full island follows under an :class:`IslandKey`.
    """
    individuals = [rec.value for rec in records]
    size = len(individuals) if size is None else size
    num_couples = size // 2
    if num_couples > 0 and len(individuals) < 2:
        raise ContractViolation(
            f"island {island} has {len(individuals)} individual(s), cannot form couples"
        )
    couples = selector(individuals, num_couples, rng)
    if len(couples) != num_couples:
        raise ContractViolation(f"selector returned {len(couples)} couples, expected {num_couples}")
    out = []
    for c, (i, j) in enumerate(couples):
        key = CoupleKey(island, c)
        out.append(Record(key, individuals[i]))
        out.append(Record(key, individuals[j]))
    if carry_previous:
        key = IslandKey(island)
        out.extend(Record(key, ind) for ind in individuals)
    return out


def crossover_phase(
    key: Any,
    parents: Sequence[Individual],
    crossover_op: Optional[CrossoverOperator],
    rng: np.random.Generator,
) -> list[PhaseRecord]:
    if isinstance(key, IslandKey):
        return [PhaseRecord(key, ind, False) for ind in parents]
    if len(parents) != 2:
        raise ContractViolation(f"couple {key} has {len(parents)} parents, expected 2")
    if crossover_op is None:
        return [PhaseRecord(key, ind, True) for ind in parents]
    a, b = crossover_op(parents[0].genome, parents[1].genome, rng)
    return [PhaseRecord(key, Individual(a), True), PhaseRecord(key, Individual(b), True)]


def mutation_phase(
    records: Sequence[PhaseRecord],
    mutation_op: Optional[MutationOperator],
    probability: float,
    rng: np.random.Generator,
) -> list[PhaseRecord]:
    """Mutate offspring only; a changed genome loses any fitness it carried."""
    if mutation_op is None:
        return list(records)
    out = []
    for rec in records:
        if rec.offspring_flag:
            genome = mutation_op(rec.value.genome, probability, rng)
            if genome != rec.value.genome:
                rec = PhaseRecord(rec.key, Individual(genome), True)
        out.append(rec)
    return out


def elitism_phase(
    offspring: Sequence[Individual],
    previous: Sequence[Individual],
    policy: Optional[ElitismPolicy],
    size: int,
    elite_count: int,
    rng: np.random.Generator,
) -> list[Individual]:
    """Choose the definitive island of ``size`` individuals.

    ``policy=None`` means elitism is disabled: offspring are kept, truncated or
    padded with uniformly drawn previous individuals.
    """
    if policy is None:
        return truncate_or_pad(previous, offspring, size, rng)
    return list(policy(previous, offspring, elite_count, size, rng))


def build_generation_plan(
    suite: OperatorSuite,
    config: GaConfig,
    generation: int,
    flags: FlagStore,
) -> ChainPlan:
    size = config.population_size
    carry_previous = config.elitism_enabled or size % 2 == 1
    forwarding = suite.selection_operator is None

    def halted() -> bool:
        return flags.any_for(generation)

    def fitness(records, ctx: TaskContext):
        return fitness_phase(records, suite.fitness_evaluator)

    def check(records, ctx: TaskContext):
        out, flag = termination_check_phase(records, suite.termination_criterion, generation, ctx.index)
        if flag is not None:
            flags.record(flag)
        return out

    def selection(records, ctx: TaskContext):
        if forwarding or halted():
            key = IslandKey(ctx.index)
            return [Record(key, rec.value) for rec in records]
        return selection_phase(records, suite.selection_operator, carry_previous, ctx.rng,
                               ctx.index, size)

    def crossover(key, values, ctx: TaskContext):
        return crossover_phase(key, values, suite.crossover_operator, ctx.rng)

    def mutation(records, ctx: TaskContext):
        if halted():
            return records
        return mutation_phase(records, suite.mutation_operator, config.mutation_probability, ctx.rng)

    def elitism(records, ctx: TaskContext):
        if forwarding or halted():
            return [Record(None, rec.value) for rec in records]
        offspring = [rec.value for rec in records if rec.offspring_flag]
        previous = [rec.value for rec in records if not rec.offspring_flag]
        if config.elitism_enabled and suite.elitism_policy is None:
            return [Record(None, ind) for ind in offspring + previous]
        policy = suite.elitism_policy if config.elitism_enabled else None
        island = elitism_phase(offspring, previous, policy, size, config.elite_count, ctx.rng)
        return [Record(None, ind) for ind in island]

    return ChainPlan(
        pre_maps=(map_stage(FITNESS, fitness), map_stage(TERMINATION_CHECK, check),
                  map_stage(SELECTION, selection)),
        reduce=reduce_stage(CROSSOVER, crossover),
        post_maps=(map_stage(MUTATION, mutation), map_stage(ELITISM, elitism)),
        num_partitions=config.islands,
        partitioner=island_partitioner,
    )


def run_generation(
    snapshot: PopulationSnapshot,
    suite: OperatorSuite,
    config: GaConfig,
    *,
    flags: Optional[FlagStore] = None,
    executor: Optional[LocalExecutor] = None,
) -> tuple[PopulationSnapshot, list[TerminationFlag]]:
    """Run one generation job; returns the next snapshot and this generation's flags.

    The job for input generation ``g`` is generation ``g + 1``: its RNG streams,
    flags and output snapshot all carry that number.
    """
    generation = snapshot.generation + 1
    flags = MemoryFlagStore() if flags is None else flags
    executor = executor or LocalExecutor(config.threads)
    plan = build_generation_plan(suite, config, generation, flags)
    streams = SeedStreams(config.master_seed, generation, config.seed_island_offset)
    splits = split_population(snapshot, config.islands)
    partitions = executor.run_chain(plan, splits, streams)
    islands = [[rec.value for rec in part] for part in partitions]
    return PopulationSnapshot(generation, islands), flags.flags_for(generation)
