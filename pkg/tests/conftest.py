import math

import numpy as np
import pytest
from hypothesis import strategies as st

from islandga.core import GaConfig, Genome, Individual, PopulationSnapshot
from islandga.operators import onemax_suite


def genome_of(text: str) -> Genome:
    return Genome.from_string(text)


def ind(text: str, fitness=None, solution=False) -> Individual:
    return Individual(genome_of(text), fitness, solution)


EDGE_FITNESS = [0.0, -0.0, 5e-324, 2.2250738585072014e-308, 1.0, 1.0 - 2**-53, 1 / 3,
                1.7976931348623157e308, math.inf]


@st.composite
def snapshots(draw, max_islands=4, max_size=6, max_m=20):
    j = draw(st.integers(1, max_islands))
    m = draw(st.integers(1, max_m))
    gen = draw(st.integers(0, 2**40))
    fitness = st.one_of(st.none(), st.sampled_from(EDGE_FITNESS),
                        st.floats(min_value=0, allow_nan=False, allow_infinity=False))
    islands = []
    for _ in range(j):
        size = draw(st.integers(1, max_size))
        island = []
        for _ in range(size):
            bits = tuple(draw(st.lists(st.integers(0, 1), min_size=m, max_size=m)))
            f = draw(fitness)
            sol = f is not None and draw(st.booleans())
            island.append(Individual(Genome(bits), f, sol))
        islands.append(island)
    return PopulationSnapshot(gen, islands)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return GaConfig(islands=2, population_size=4, genome_length=8, max_generations=5,
                    mutation_probability=0.05, elite_count=1, master_seed=42)


@pytest.fixture
def onemax():
    return onemax_suite()


def _h(counts):
    n = sum(counts)
    return -sum(c / n * math.log2(c / n) for c in counts if c)


def brute_force_threshold(xs, labels):
    """Independent gain-ratio search over midpoint thresholds, plain Python."""
    classes = sorted(set(labels))
    parent = _h([labels.count(c) for c in classes])
    values = sorted(set(xs))
    best = None
    for lo, hi in zip(values, values[1:]):
        t = (lo + hi) / 2
        left = [l for x, l in zip(xs, labels) if x <= t]
        right = [l for x, l in zip(xs, labels) if x > t]
        n = len(xs)
        gain = parent - len(left) / n * _h([left.count(c) for c in classes]) \
            - len(right) / n * _h([right.count(c) for c in classes])
        ratio = gain / _h([len(left), len(right)])
        if best is None or ratio > best[1]:
            best = (t, ratio)
    return best[0]
