import numpy as np
import pytest

from islandga.core import ConfigError, GaConfig, MigrationPolicy, OperatorSuite, PopulationSnapshot
from islandga.driver import (
    RunState,
    StopReason,
    check_termination,
    evolve,
    filter_solutions,
    initialise,
    migrate,
    migration_due,
)
from islandga.executor import SeedStreams
from islandga.operators import FitnessThreshold, onemax_suite
from islandga.persistence import RunDirectory, read_report, read_snapshot, read_solutions
from islandga.pipeline import TerminationFlag

from conftest import ind


class TestInitialise:
    def test_shape_and_reproducible(self):
        config = GaConfig(islands=2, population_size=3, genome_length=4, master_seed=11)
        a = initialise(config, OperatorSuite())
        b = initialise(config, OperatorSuite())
        assert a == b
        assert a.generation == 0 and [len(i) for i in a.islands] == [3, 3]
        assert all(len(i.genome) == 4 and i.fitness is None for i in a.individuals())

    def test_skips_when_snapshot_exists(self, tmp_path):
        config = GaConfig(islands=1, population_size=2, genome_length=3, master_seed=1)
        first = initialise(config, OperatorSuite(), tmp_path)

        def boom(*args):
            raise AssertionError("initialiser must not run")

        assert initialise(config, OperatorSuite(initialiser=boom), tmp_path) == first

    def test_zero_population(self):
        with pytest.raises(ConfigError):
            GaConfig(population_size=0)

    def test_offset_replays_island(self):
        big = initialise(GaConfig(islands=3, population_size=4, genome_length=6, master_seed=5), OperatorSuite())
        one = initialise(GaConfig(islands=1, population_size=4, genome_length=6, master_seed=5,
                                  seed_island_offset=2), OperatorSuite())
        assert one.islands[0] == big.islands[2]


class TestCheckTermination:
    config = GaConfig(max_generations=10)
    flag = TerminationFlag(3, 0, ind("1", 1.0, True))

    def test_counter(self):
        assert check_termination(RunState(self.config, 10, None), []) is StopReason.MAX_GENERATIONS

    def test_flag(self):
        assert check_termination(RunState(self.config, 3, None), [self.flag]) is StopReason.CRITERION_SATISFIED

    def test_continue(self):
        assert check_termination(RunState(self.config, 3, None), []) is None


class FixedPicks:
    """Seeds whose generator yields preset migrant indices."""

    def __init__(self, picks):
        self.picks = picks

    def generator(self):
        picks = self.picks

        class G:
            def choice(self, n, size, replace):
                assert not replace
                return np.array(picks[:size])

        return G()


class TestMigrate:
    snap = PopulationSnapshot(4, [[ind("00"), ind("01")], [ind("10"), ind("11")]])
    a, b = snap.islands[0]
    c, d = snap.islands[1]

    def test_zero(self):
        out = migrate(self.snap, MigrationPolicy(migrant_count=0), [])
        assert out == self.snap

    def test_ring_example(self):
        out = migrate(self.snap, MigrationPolicy(migrant_count=1), [FixedPicks([0]), FixedPicks([0])])
        assert out.islands == ((self.b, self.c), (self.d, self.a))

    def test_single_island(self):
        snap = PopulationSnapshot(1, [[ind("0"), ind("1")]])
        assert migrate(snap, MigrationPolicy(migrant_count=1), SeedStreams(0, 1).seeds("migration", 1)) == snap

    def test_counts_preserved(self):
        rng = np.random.default_rng(0)
        for j in (2, 3, 5):
            snap = PopulationSnapshot(2, [[ind(format(int(x), "06b")) for x in rng.integers(0, 64, 6)]
                                          for _ in range(j)])
            out = migrate(snap, MigrationPolicy(migrant_count=2), SeedStreams(1, 2).seeds("migration", j))
            assert [len(i) for i in out.islands] == [6] * j
            assert sorted(i.genome for i in out.individuals()) == sorted(i.genome for i in snap.individuals())

    def test_custom_topology(self):
        out = migrate(self.snap, MigrationPolicy(migrant_count=1, topology=(0, 0)),
                      [FixedPicks([1]), FixedPicks([0])])
        assert out.islands == ((self.a, self.b, self.c), (self.d,))

    def test_too_many(self):
        with pytest.raises(ConfigError):
            migrate(self.snap, MigrationPolicy(migrant_count=3), SeedStreams(0, 1).seeds("migration", 2))

    def test_due(self):
        policy = MigrationPolicy(frequency=3, migrant_count=1)
        assert [g for g in range(1, 10) if migration_due(g, policy)] == [3, 6, 9]
        assert not migration_due(3, None)


class TestFilter:
    def test_partition(self):
        hi, lo = ind("1", 0.95), ind("0", 0.5)
        snap = PopulationSnapshot(1, [[hi], [lo]])
        assert filter_solutions(snap, FitnessThreshold(0.9)) == ([hi], [lo])
        assert filter_solutions(snap, FitnessThreshold(0.99)) == ([], [hi, lo])
        assert filter_solutions(snap, FitnessThreshold(0.1)) == ([hi, lo], [])


class TestEvolve:
    def test_zero_generations(self, tmp_path):
        config = GaConfig(islands=1, population_size=4, genome_length=4, max_generations=0)
        report = evolve(config, onemax_suite(), tmp_path)
        assert report.generations == 0 and report.stop_reason is StopReason.MAX_GENERATIONS
        assert RunDirectory(tmp_path).generations() == [0]

    def test_satisfied_first_generation(self, tmp_path):
        config = GaConfig(islands=2, population_size=4, genome_length=4, max_generations=100, master_seed=3)
        report = evolve(config, onemax_suite(target=1), tmp_path)
        assert report.generations == 1 and report.stop_reason is StopReason.CRITERION_SATISFIED
        sols = read_solutions(tmp_path / "solutions.pop")
        assert sols and all(s.is_solution and s.fitness >= 1 for s in sols)
        rep = read_report(tmp_path / "report.txt")
        assert rep["stop_reason"] == "criterion_satisfied" and rep["generations"] == "1"
        assert int(rep["solutions"]) + int(rep["non_solutions"]) == 8

    def test_never_satisfied(self, tmp_path):
        config = GaConfig(islands=2, population_size=4, genome_length=6, max_generations=5, master_seed=3)
        report = evolve(config, onemax_suite(target=99), tmp_path)
        assert report.generations == 5 and report.executed == 5
        assert report.stop_reason is StopReason.MAX_GENERATIONS
        assert not (tmp_path / "solutions.pop").exists()
        assert RunDirectory(tmp_path).generations() == list(range(6))

    def test_resume_matches_uninterrupted(self, tmp_path):
        base = dict(islands=2, population_size=6, genome_length=10, master_seed=8,
                    migration=MigrationPolicy(frequency=2, migrant_count=1))
        evolve(GaConfig(max_generations=6, **base), onemax_suite(), tmp_path / "full")
        evolve(GaConfig(max_generations=3, **base), onemax_suite(), tmp_path / "split")
        report = evolve(GaConfig(max_generations=6, **base), onemax_suite(), tmp_path / "split")
        assert report.executed == 3
        for g in range(7):
            assert (tmp_path / "full" / "generations" / f"gen-{g:06d}.pop").read_bytes() == \
                   (tmp_path / "split" / "generations" / f"gen-{g:06d}.pop").read_bytes()

    def test_migration_moves_individuals(self, tmp_path):
        config = GaConfig(islands=3, population_size=4, genome_length=8, max_generations=2, master_seed=2,
                          migration=MigrationPolicy(frequency=1, migrant_count=2))
        evolve(config, onemax_suite(), tmp_path)
        snap = read_snapshot(tmp_path / "generations" / "gen-000002.pop")
        assert [len(i) for i in snap.islands] == [4, 4, 4]

    def test_report_best_is_best_seen(self, tmp_path):
        config = GaConfig(islands=1, population_size=6, genome_length=8, max_generations=4, master_seed=4)
        report = evolve(config, onemax_suite(), tmp_path)
        fits = [i.fitness for g in range(5)
                for i in read_snapshot(tmp_path / "generations" / f"gen-{g:06d}.pop").individuals()
                if i.fitness is not None]
        assert report.best.fitness == max(fits)
        assert read_report(tmp_path / "report.txt")["best_fitness"] == repr(max(fits))
