"""Run orchestration: initialise, loop over generation jobs, migrate, filter solutions."""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .core import (
    ConfigError,
    GaConfig,
    Individual,
    MigrationPolicy,
    OperatorSuite,
    PopulationSnapshot,
    TerminationCriterion,
    best_individual,
    ranking_key,
)
from .executor import LocalExecutor, PhaseError, SeedStreams, TaskSeed
from .operators import random_bit_initialiser
from .persistence import (
    DirectoryFlagStore,
    PathLike,
    RunDirectory,
    read_snapshot,
    write_report,
    write_snapshot,
    write_solutions,
)
from .pipeline import TerminationFlag, run_generation

log = logging.getLogger(__name__)

INIT = "init"
MIGRATION = "migration"


class StopReason(str, enum.Enum):
    MAX_GENERATIONS = "max_generations"
    CRITERION_SATISFIED = "criterion_satisfied"


@dataclass
class RunState:
    config: GaConfig
    current_generation: int
    run_dir: RunDirectory
    flags_seen: bool = False


@dataclass
class RunReport:
    run_dir: Path
    final_snapshot: Path
    generations: int
    best: Optional[Individual]
    stop_reason: StopReason
    solutions: Optional[int] = None
    non_solutions: Optional[int] = None
    elapsed_seconds: float = 0.0
    # generation jobs run by this call (differs from ``generations`` on resume)
    executed: int = 0

    def as_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason.value,
            "generations": self.generations,
            "best_fitness": None if self.best is None else self.best.fitness,
            "best_genome": None if self.best is None else str(self.best.genome),
            "final_snapshot": str(self.final_snapshot),
            "solutions": self.solutions,
            "non_solutions": self.non_solutions,
            "elapsed_seconds": round(self.elapsed_seconds, 6),
        }


def _persist(run_dir: RunDirectory, snapshot: PopulationSnapshot, config: GaConfig) -> Path:
    path = run_dir.generation_path(snapshot.generation)
    write_snapshot(path, snapshot, config.master_seed, config.population_size)
    return path


def initialise(config: GaConfig, suite: OperatorSuite, run_dir: Optional[PathLike] = None) -> PopulationSnapshot:
    """Generation-0 population: J islands of r individuals.

    When ``run_dir`` already holds a generation-0 snapshot it is loaded instead.
    """
    rd = RunDirectory(run_dir) if run_dir is not None else None
    if rd is not None and rd.generation_path(0).exists():
        return read_snapshot(rd.generation_path(0))
    make = suite.initialiser or random_bit_initialiser
    streams = SeedStreams(config.master_seed, 0, config.seed_island_offset)
    islands = []
    for i in range(config.islands):
        try:
            island = make(config.genome_length, config.population_size, streams.seed(INIT, i).generator())
        except Exception as exc:
            raise PhaseError(INIT, i, exc, 0) from exc
        if len(island) != config.population_size:
            raise ConfigError("population_size", f"initialiser produced {len(island)} individuals")
        islands.append(island)
    snapshot = PopulationSnapshot(0, islands)
    if rd is not None:
        rd.create()
        _persist(rd, snapshot, config)
    return snapshot


def check_termination(state: RunState, flags: Sequence[TerminationFlag]) -> Optional[StopReason]:
    """``None`` means continue. A flag wins over the generation counter."""
    if flags:
        return StopReason.CRITERION_SATISFIED
    if state.current_generation >= state.config.max_generations:
        return StopReason.MAX_GENERATIONS
    return None


def migration_due(generation: int, policy: Optional[MigrationPolicy]) -> bool:
    return policy is not None and policy.migrant_count > 0 and generation % policy.frequency == 0


def migrate(snapshot: PopulationSnapshot, policy: MigrationPolicy, seeds: Sequence[TaskSeed]) -> PopulationSnapshot:
    """Move ``migrant_count`` uniformly chosen individuals from each island to its destination.

    All picks are made against the pre-migration islands; migrants are appended
    to their destination in source-island order.
    """
    num = snapshot.num_islands
    k = policy.migrant_count
    if k == 0 or num == 1:
        return snapshot
    staying: list[list[Individual]] = []
    arriving: list[list[Individual]] = [[] for _ in range(num)]
    for i, island in enumerate(snapshot.islands):
        if k > len(island):
            raise ConfigError("migration_count", f"{k} exceeds size {len(island)} of island {i}")
        rng = seeds[i].generator()
        picks = [int(p) for p in rng.choice(len(island), size=k, replace=False)]
        chosen = set(picks)
        staying.append([ind for j, ind in enumerate(island) if j not in chosen])
        arriving[policy.destination(i, num)].extend(island[p] for p in picks)
    return PopulationSnapshot(snapshot.generation, [s + a for s, a in zip(staying, arriving)])


def filter_solutions(
    snapshot: PopulationSnapshot, criterion: TerminationCriterion
) -> tuple[list[Individual], list[Individual]]:
    solutions, rest = [], []
    for ind in snapshot.individuals():
        (solutions if criterion(ind) else rest).append(ind)
    return solutions, rest


def _resume_or_initialise(config: GaConfig, suite: OperatorSuite, rd: RunDirectory) -> PopulationSnapshot:
    latest = rd.latest_generation()
    if latest is None:
        return initialise(config, suite, rd.root)
    snapshot = read_snapshot(rd.generation_path(latest))
    if snapshot.num_islands != config.islands:
        raise ConfigError("islands", f"run directory holds {snapshot.num_islands} islands")
    return snapshot


def evolve(config: GaConfig, suite: OperatorSuite, run_dir: PathLike) -> RunReport:
    """Drive a full run in ``run_dir`` and write ``report.txt``.

    Resumes from the newest persisted generation if the directory already has one.
    """
    started = time.perf_counter()
    rd = RunDirectory(run_dir)
    rd.create()
    snapshot = _resume_or_initialise(config, suite, rd)
    flags_store = DirectoryFlagStore(rd)
    executor = LocalExecutor(config.threads)
    state = RunState(config, snapshot.generation, rd)
    best = best_individual(snapshot.individuals())
    executed = 0

    reason = check_termination(state, flags_store.flags_for(state.current_generation))
    while reason is None:
        snapshot, flags = run_generation(snapshot, suite, config, flags=flags_store, executor=executor)
        executed += 1
        state.current_generation = snapshot.generation
        state.flags_seen = bool(flags)
        _persist(rd, snapshot, config)
        gen_best = best_individual(snapshot.individuals())
        if gen_best is not None and (best is None or ranking_key(gen_best) < ranking_key(best)):
            best = gen_best
        log.info("generation %d done, best %s", snapshot.generation,
                 None if best is None else best.fitness)
        reason = check_termination(state, flags)
        if reason is None and migration_due(state.current_generation, config.migration):
            streams = SeedStreams(config.master_seed, state.current_generation, config.seed_island_offset)
            snapshot = migrate(snapshot, config.migration, streams.seeds(MIGRATION, config.islands))
            _persist(rd, snapshot, config)

    report = RunReport(
        run_dir=rd.root,
        final_snapshot=rd.generation_path(snapshot.generation),
        generations=snapshot.generation,
        best=best,
        stop_reason=reason,
        executed=executed,
    )
    if reason is StopReason.CRITERION_SATISFIED:
        criterion = suite.termination_criterion
        solutions, rest = filter_solutions(snapshot, criterion)
        write_solutions(rd.solutions_path, solutions, snapshot.generation)
        write_solutions(rd.non_solutions_path, rest, snapshot.generation)
        report.solutions, report.non_solutions = len(solutions), len(rest)
    report.elapsed_seconds = time.perf_counter() - started
    write_report(rd.report_path, report.as_dict())
    return report
