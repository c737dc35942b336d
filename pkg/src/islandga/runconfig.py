"""Flat ``key = value`` run configuration files.

Example::

    # GA
    islands = 2
    population_size = 32
    genome_length = 16
    max_generations = 100
    mutation_probability = 0.05
    elitism = true
    elite_count = 1
    seed = 7
    migration_frequency = 5
    migration_count = 2
    # problem
    problem = onemax
    target = 16
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .core import ConfigError, GaConfig, MigrationPolicy, OperatorSuite
from .fss import DatasetError, fss_operator_suite, load_dataset, split_train_test
from .operators import onemax_suite

PROBLEMS = ("onemax", "fss")


def _int(v: str) -> int:
    return int(v, 10)


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _topology(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.split(","))


KEYS: dict[str, Callable[[str], object]] = {
    "islands": _int,
    "population_size": _int,
    "genome_length": _int,
    "max_generations": _int,
    "mutation_probability": float,
    "elitism": _bool,
    "elite_count": _int,
    "seed": _int,
    "threads": _int,
    "migration_frequency": _int,
    "migration_count": _int,
    "migration_topology": _topology,
    "problem": str,
    "target": float,
    "train": str,
    "train_ratio": float,
    "folds": _int,
    "run_dir": str,
}


def parse_config(text: str) -> dict[str, object]:
    settings: dict[str, object] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(key or f"line {n}", "expected key = value")
        if key not in KEYS:
            raise ConfigError(key, "unknown configuration key")
        try:
            settings[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    return settings


def format_config(settings: dict[str, object]) -> str:
    lines = []
    for key, value in settings.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, tuple):
            value = ",".join(map(str, value))
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path: Path) -> dict[str, object]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    settings = parse_config(text)
    train = settings.get("train")
    if isinstance(train, str) and not Path(train).is_absolute():
        settings["train"] = str((Path(path).parent / train).resolve())
    return settings


@dataclass
class Run:
    config: GaConfig
    suite: OperatorSuite
    settings: dict[str, object]


def build_run(settings: dict[str, object], threads: Optional[int] = None) -> Run:
    """Turn parsed settings into a GA configuration plus the problem's operator suite."""
    problem = settings.get("problem", "onemax")
    if problem not in PROBLEMS:
        raise ConfigError("problem", f"must be one of {', '.join(PROBLEMS)}")
    target = settings.get("target")
    if target is not None and math.isnan(target):
        raise ConfigError("target", "must be a number")

    genome_length = settings.get("genome_length", 8)
    if problem == "fss":
        if "train" not in settings:
            raise ConfigError("train", "required for problem fss")
        data = load_dataset(settings["train"])
        if "train_ratio" in settings:
            data, _test = split_train_test(data, settings["train_ratio"])
        genome_length = len(data.attributes)
        if genome_length < 1:
            raise DatasetError("dataset has no attributes besides the class")
        suite = fss_operator_suite(data, settings.get("folds", 5), target)
    else:
        suite = onemax_suite(target)

    migration = None
    if settings.get("migration_count", 0) > 0:
        migration = MigrationPolicy(
            frequency=settings.get("migration_frequency", 1),
            migrant_count=settings["migration_count"],
            topology=settings.get("migration_topology"),
        )
    config = GaConfig(
        islands=settings.get("islands", 1),
        population_size=settings.get("population_size", 10),
        genome_length=genome_length,
        max_generations=settings.get("max_generations", 10),
        mutation_probability=settings.get("mutation_probability", 0.01),
        elitism_enabled=settings.get("elitism", True),
        elite_count=settings.get("elite_count", 1 if settings.get("elitism", True) else 0),
        migration=migration,
        master_seed=settings.get("seed", 0),
        threads=threads if threads is not None else settings.get("threads"),
    )
    return Run(config, suite, settings)
