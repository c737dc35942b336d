"""Built-in GA behaviours for binary genomes."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .core import (
    ConfigError,
    ContractViolation,
    FitnessEvaluator,
    Genome,
    Individual,
    OperatorSuite,
    ranking_key,
)


def random_bit_initialiser(m: int, count: int, rng: np.random.Generator) -> list[Individual]:
    """``count`` genomes of ``m`` fair-coin genes."""
    if m < 1 or count < 1:
        raise ContractViolation("random_bit_initialiser needs m >= 1 and count >= 1")
    bits = rng.integers(0, 2, size=(count, m))
    return [Individual(Genome(tuple(int(b) for b in row))) for row in bits]


def roulette_wheel_select(
    individuals: Sequence[Individual], num_couples: int, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Fitness-proportionate parent sampling, two independent spins per couple.

    Falls back to uniform sampling when every fitness is zero.
    """
    n = len(individuals)
    if num_couples == 0:
        return []
    if n == 0:
        raise ContractViolation("cannot select from an empty island")
    fitness = np.empty(n)
    for i, ind in enumerate(individuals):
        if ind.fitness is None:
            raise ContractViolation(f"individual {i} has no fitness")
        if ind.fitness < 0:
            raise ContractViolation(f"individual {i} has negative fitness {ind.fitness}")
        fitness[i] = ind.fitness
    draws = 2 * num_couples
    total = float(fitness.sum())
    if total <= 0.0 or not math.isfinite(total):
        picks = rng.integers(0, n, size=draws)
    else:
        wheel = np.cumsum(fitness)
        spins = rng.random(draws) * wheel[-1]
        picks = np.searchsorted(wheel, spins, side="right")
        # rounding can push a spin onto the wheel's end; land on the last non-empty slot
        last = int(np.flatnonzero(fitness > 0)[-1])
        picks = np.minimum(picks, last)
    return [(int(picks[2 * k]), int(picks[2 * k + 1])) for k in range(num_couples)]


def single_point_crossover(p1: Genome, p2: Genome, rng: np.random.Generator) -> tuple[Genome, Genome]:
    m = len(p1)
    if m != len(p2):
        raise ContractViolation(f"parent lengths differ: {m} vs {len(p2)}")
    if m == 1:
        # no interior cut point: the children are copies of the parents
        return p1, p2
    cut = int(rng.integers(1, m))
    return cut_and_splice(p1, p2, cut)


def cut_and_splice(p1: Genome, p2: Genome, cut: int) -> tuple[Genome, Genome]:
    """Children of a single-point crossover at ``cut`` (head of one parent, tail of the other)."""
    a, b = p1.bits, p2.bits
    return Genome(a[:cut] + b[cut:]), Genome(b[:cut] + a[cut:])


def bit_flip_mutation(genome: Genome, p: float, rng: np.random.Generator) -> Genome:
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"mutation probability {p} outside [0, 1]")
    flips = rng.random(len(genome)) < p
    if not flips.any():
        return genome
    return Genome(tuple(b ^ int(f) for b, f in zip(genome.bits, flips)))


def best_n_elitism(
    previous: Sequence[Individual],
    offspring: Sequence[Individual],
    n: int,
    r: int,
    rng: Optional[np.random.Generator] = None,
) -> list[Individual]:
    """Keep the ``n`` best previous individuals in the last slots, offspring first.

    Offspring are unevaluated at this point, so they fill slots in emission order.
    If there are too few offspring to reach ``r`` the next-best previous
    individuals make up the difference.
    """
    if n > r:
        raise ConfigError("elite_count", f"{n} exceeds population size {r}")
    carried = max(n, r - len(offspring))
    ranked = sorted(previous, key=ranking_key)
    if carried > len(ranked):
        raise ContractViolation(f"need {carried} previous individuals, have {len(ranked)}")
    return list(offspring[: r - carried]) + ranked[:carried]


def truncate_or_pad(
    previous: Sequence[Individual],
    offspring: Sequence[Individual],
    r: int,
    rng: np.random.Generator,
) -> list[Individual]:
    """Replacement without elitism: offspring up to ``r``, padded by uniform picks from ``previous``."""
    out = list(offspring[:r])
    shortfall = r - len(out)
    if shortfall > 0:
        if not previous:
            raise ContractViolation("no previous individuals to pad the island with")
        picks = rng.choice(len(previous), size=shortfall, replace=False)
        out += [previous[int(i)] for i in picks]
    return out


class FitnessThreshold:
    """True once an individual's fitness reaches ``threshold`` (inclusive).

    A threshold of ``math.inf`` disables the criterion.
    """

    def __init__(self, threshold: float = math.inf):
        self.threshold = float(threshold)

    def __call__(self, individual: Individual) -> bool:
        return fitness_threshold_criterion(individual, self.threshold)

    def __repr__(self) -> str:
        return f"FitnessThreshold({self.threshold!r})"


def fitness_threshold_criterion(individual: Individual, threshold: float) -> bool:
    if individual.fitness is None:
        raise ContractViolation("termination check needs a fitness value")
    if math.isinf(threshold) and threshold > 0:
        return False
    return individual.fitness >= threshold


def onemax(genome: Genome) -> float:
    return float(sum(genome.bits))


def standard_suite(evaluator: FitnessEvaluator, target: Optional[float] = None) -> OperatorSuite:
    """Roulette wheel, single-point crossover, bit flips and best-N elitism around ``evaluator``."""
    return OperatorSuite(
        initialiser=random_bit_initialiser,
        fitness_evaluator=evaluator,
        termination_criterion=FitnessThreshold(math.inf if target is None else target),
        selection_operator=roulette_wheel_select,
        crossover_operator=single_point_crossover,
        mutation_operator=bit_flip_mutation,
        elitism_policy=best_n_elitism,
    )


def onemax_suite(target: Optional[float] = None) -> OperatorSuite:
    return standard_suite(onemax, target)
