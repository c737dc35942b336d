"""Embedded map-shuffle-reduce engine.

A job follows the chain pattern ``(MAP)+ (REDUCE) (MAP)*``: the pre-maps run once
per input split, a single shuffle routes records to ``R`` partitions, the reduce
runs once per key group, and the post-maps run per partition. Tasks of one stage
run concurrently on a bounded thread pool; every task draws from its own seeded
RNG stream, so results never depend on scheduling.
"""

from __future__ import annotations

import dataclasses
import os
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 2**64 - 1


class Record(NamedTuple):
    key: Any
    value: Any


class PhaseError(RuntimeError):
    """A user function failed inside a task. Carries the phase and task index."""

    def __init__(self, phase: str, index: int, cause: BaseException, generation: Optional[int] = None):
        where = f"phase {phase!r}, task {index}"
        if generation is not None:
            where = f"generation {generation}, {where}"
        super().__init__(f"{where}: {cause}")
        self.phase = phase
        self.index = index
        self.generation = generation
        self.cause = cause


@dataclass(frozen=True)
class TaskSeed:
    """Identifies one private RNG stream: (master seed, generation, phase, index)."""

    master_seed: int
    generation: int
    phase: str
    index: int

    def generator(self) -> np.random.Generator:
        phase_code = zlib.crc32(self.phase.encode("utf-8"))
        seq = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(self.generation, phase_code, self.index),
        )
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class SeedStreams:
    """Factory for the task seeds of one generation."""

    master_seed: int
    generation: int
    index_offset: int = 0

    def seed(self, phase: str, index: int) -> TaskSeed:
        return TaskSeed(self.master_seed, self.generation, phase, index + self.index_offset)

    def seeds(self, phase: str, count: int) -> list[TaskSeed]:
        return [self.seed(phase, i) for i in range(count)]


@dataclass
class TaskContext:
    """Handed to every map/reduce invocation."""

    phase: str
    index: int
    seed: TaskSeed
    _rng: Optional[np.random.Generator] = None

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = self.seed.generator()
        return self._rng


MapFn = Callable[[list, TaskContext], list]
ReduceFn = Callable[[Any, list, TaskContext], list]


@dataclass(frozen=True)
class Stage:
    name: str
    fn: Callable
    kind: str = "map"

    def __post_init__(self):
        if self.kind not in ("map", "reduce"):
            raise ValueError(f"unknown stage kind {self.kind!r}")


def map_stage(name: str, fn: MapFn) -> Stage:
    return Stage(name, fn, "map")


def reduce_stage(name: str, fn: ReduceFn) -> Stage:
    return Stage(name, fn, "reduce")


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def key_bytes(key: Any) -> bytes:
    """Canonical, platform-independent byte encoding of a record key."""
    if key is None:
        return b"N"
    if isinstance(key, bool):
        return b"B1" if key else b"B0"
    if isinstance(key, int):
        return b"I" + str(key).encode("ascii")
    if isinstance(key, float):
        return b"F" + struct.pack("<d", key)
    if isinstance(key, str):
        return b"S" + key.encode("utf-8")
    if isinstance(key, bytes):
        return b"Y" + key
    if dataclasses.is_dataclass(key) and not isinstance(key, type):
        parts = [type(key).__name__.encode("utf-8")]
        parts += [key_bytes(getattr(key, f.name)) for f in dataclasses.fields(key)]
        return b"D" + _join(parts)
    if isinstance(key, tuple):
        return b"T" + _join(key_bytes(k) for k in key)
    raise TypeError(f"unsupported key type {type(key).__name__}")


def _join(parts: Iterable[bytes]) -> bytes:
    out = bytearray()
    for p in parts:
        out += struct.pack("<I", len(p))
        out += p
    return bytes(out)


def default_partition(key: Any, num_partitions: int) -> int:
    """FNV-1a 64-bit hash of the key's canonical bytes, modulo ``num_partitions``."""
    if num_partitions < 1:
        raise ValueError("num_partitions must be >= 1")
    return fnv1a_64(key_bytes(key)) % num_partitions


@dataclass(frozen=True)
class ChainPlan:
    pre_maps: tuple[Stage, ...]
    reduce: Stage
    post_maps: tuple[Stage, ...] = ()
    num_partitions: int = 1
    partitioner: Callable[[Any, int], int] = default_partition

    def __post_init__(self):
        object.__setattr__(self, "pre_maps", tuple(self.pre_maps))
        object.__setattr__(self, "post_maps", tuple(self.post_maps))
        if not self.pre_maps:
            raise ValueError("chain needs at least one map before the reduce")
        if not isinstance(self.reduce, Stage) or self.reduce.kind != "reduce":
            raise ValueError("chain needs exactly one reduce stage")
        for stage in self.pre_maps + self.post_maps:
            if stage.kind != "map":
                raise ValueError(f"stage {stage.name!r}: only one reduce allowed per chain")
        if self.num_partitions < 1:
            raise ValueError("num_partitions must be >= 1")

    @classmethod
    def from_stages(cls, stages: Sequence[Stage], **kwargs) -> ChainPlan:
        """Build a plan from a flat stage list, validating ``(MAP)+(REDUCE)(MAP)*``."""
        reduces = [i for i, s in enumerate(stages) if s.kind == "reduce"]
        if len(reduces) != 1:
            raise ValueError(f"chain needs exactly one reduce stage, got {len(reduces)}")
        r = reduces[0]
        return cls(tuple(stages[:r]), stages[r], tuple(stages[r + 1:]), **kwargs)


def shuffle(
    mapped: Sequence[Sequence[Record]],
    partitioner: Callable[[Any, int], int],
    num_partitions: int,
) -> list[list[tuple[Any, list]]]:
    """Group values by key into ``num_partitions`` groups.

    Keys inside a partition appear in order of first emission; values under a key
    are ordered by (source split, emission order).
    """
    groups: list[dict[Any, list]] = [{} for _ in range(num_partitions)]
    for split in mapped:
        for record in split:
            key, value = record[0], record[1]
            p = partitioner(key, num_partitions)
            if not 0 <= p < num_partitions:
                raise ValueError(f"partitioner returned {p} for {num_partitions} partitions")
            groups[p].setdefault(key, []).append(value)
    return [list(g.items()) for g in groups]


class LocalExecutor:
    """Runs chain jobs on a thread pool of ``max_workers`` threads."""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers or os.cpu_count() or 1

    def _run_tasks(self, phase: str, fn: Callable[[int], list], count: int,
                   generation: Optional[int] = None) -> list[list]:
        def guarded(i: int) -> list:
            try:
                return list(fn(i))
            except PhaseError:
                raise
            except Exception as exc:
                raise PhaseError(phase, i, exc, generation) from exc

        if count == 0:
            return []
        if self.max_workers == 1 or count == 1:
            return [guarded(i) for i in range(count)]
        with ThreadPoolExecutor(max_workers=min(self.max_workers, count)) as pool:
            futures = [pool.submit(guarded, i) for i in range(count)]
            # results are collected in split order; the first failing split wins
            return [f.result() for f in futures]

    def run_map_tasks(self, splits: Sequence[list], map_fn: MapFn, seeds: Sequence[TaskSeed],
                      phase: str = "map", generation: Optional[int] = None) -> list[list]:
        if len(seeds) != len(splits):
            raise ValueError("need exactly one seed per split")

        def task(i: int) -> list:
            return map_fn(list(splits[i]), TaskContext(phase, i, seeds[i]))

        return self._run_tasks(phase, task, len(splits), generation)

    def run_reduce_tasks(self, groups: Sequence[list[tuple[Any, list]]], reduce_fn: ReduceFn,
                         seeds: Sequence[TaskSeed], phase: str = "reduce",
                         generation: Optional[int] = None) -> list[list]:
        if len(seeds) != len(groups):
            raise ValueError("need exactly one seed per partition")

        def task(i: int) -> list:
            ctx = TaskContext(phase, i, seeds[i])
            out: list = []
            for key, values in groups[i]:
                out.extend(reduce_fn(key, values, ctx))
            return out

        return self._run_tasks(phase, task, len(groups), generation)

    def run_chain(self, plan: ChainPlan, splits: Sequence[list], streams: SeedStreams) -> list[list]:
        """Execute ``plan`` over ``splits`` and return one record list per partition.

        Chained maps pass their output to the next map in memory. All tasks of one
        stage finish before the next stage starts, which makes side effects of a
        stage (such as a raised termination flag) visible to every task of the
        following stage.
        """
        gen = streams.generation
        data = [list(s) for s in splits]
        for stage in plan.pre_maps:
            data = self.run_map_tasks(data, stage.fn, streams.seeds(stage.name, len(data)),
                                      stage.name, gen)
        groups = shuffle(data, plan.partitioner, plan.num_partitions)
        data = self.run_reduce_tasks(groups, plan.reduce.fn,
                                     streams.seeds(plan.reduce.name, len(groups)),
                                     plan.reduce.name, gen)
        for stage in plan.post_maps:
            data = self.run_map_tasks(data, stage.fn, streams.seeds(stage.name, len(data)),
                                      stage.name, gen)
        return data
