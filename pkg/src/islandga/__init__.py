"""Island-model genetic algorithms executed as chained map-shuffle-reduce jobs."""

from .core import (
    ConfigError,
    ContractViolation,
    GaConfig,
    Genome,
    Individual,
    MigrationPolicy,
    OperatorSuite,
    PopulationSnapshot,
    compare_individuals,
)
from .driver import RunReport, StopReason, evolve, initialise
from .operators import onemax_suite, standard_suite
from .pipeline import run_generation

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractViolation",
    "GaConfig",
    "Genome",
    "Individual",
    "MigrationPolicy",
    "OperatorSuite",
    "PopulationSnapshot",
    "RunReport",
    "StopReason",
    "compare_individuals",
    "evolve",
    "initialise",
    "onemax_suite",
    "run_generation",
    "standard_suite",
]
