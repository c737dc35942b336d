"""On-disk formats for populations, termination flags, solutions and run reports.

All binary files are little-endian and start with a 4-byte magic plus a ``u16``
format version. An individual is encoded as::

    genome bits   ceil(m / 8) bytes, MSB first, zero padding
    flags         u8: bit 0 = fitness present, bit 1 = is_solution
    fitness       f64, only when bit 0 is set (raw IEEE-754 bits)

Snapshot (``.pop``)::

    "IGAP" u16 version, u32 J, u32 r, u32 m, u64 generation, u64 master_seed
    J x (u32 count, count x individual)

Solution list (``solutions.pop`` / ``non_solutions.pop``)::

    "IGAS" u16 version, u64 generation, u32 m, u32 count, count x individual

Flag (``.flag``)::

    "IGAF" u16 version, u64 generation, u32 island, u32 m, individual
"""

from __future__ import annotations

import os
import re
import struct
import threading
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

from .core import ContractViolation, Genome, Individual, PopulationSnapshot
from .pipeline import TerminationFlag

FORMAT_VERSION = 1
SNAPSHOT_MAGIC = b"IGAP"
SOLUTIONS_MAGIC = b"IGAS"
FLAG_MAGIC = b"IGAF"

_HAS_FITNESS = 0x01
_IS_SOLUTION = 0x02

PathLike = Union[str, os.PathLike]


class SnapshotFormatError(ValueError):
    """Malformed or incompatible file. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int, path: Optional[PathLike] = None):
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")
        self.offset = offset
        self.path = path


class _Reader:
    def __init__(self, data: bytes, path: Optional[PathLike]):
        self.data = data
        self.pos = 0
        self.path = path

    def fail(self, message: str, offset: Optional[int] = None):
        raise SnapshotFormatError(message, self.pos if offset is None else offset, self.path)

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            self.fail(f"truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))

    def header(self, magic: bytes) -> None:
        got = self.take(4, "magic")
        if got != magic:
            self.fail(f"bad magic {got!r}, expected {magic!r}", 0)
        (version,) = self.unpack("<H", "format version")
        if version != FORMAT_VERSION:
            self.fail(f"unsupported format version {version}", 4)

    def individual(self, m: int) -> Individual:
        start = self.pos
        raw = self.take((m + 7) // 8, "genome")
        (flags,) = self.unpack("<B", "individual flags")
        if flags & ~(_HAS_FITNESS | _IS_SOLUTION):
            self.fail(f"unknown individual flags {flags:#04x}", self.pos - 1)
        fitness = None
        if flags & _HAS_FITNESS:
            (fitness,) = self.unpack("<d", "fitness")
        bits = tuple((raw[i // 8] >> (7 - i % 8)) & 1 for i in range(m))
        try:
            return Individual(Genome(bits), fitness, bool(flags & _IS_SOLUTION))
        except ContractViolation as exc:
            self.fail(f"invalid individual: {exc}", start)

    def done(self) -> None:
        if self.pos != len(self.data):
            self.fail(f"{len(self.data) - self.pos} trailing bytes")


def _pack_individual(ind: Individual, m: int) -> bytes:
    if len(ind.genome) != m:
        raise ContractViolation(f"genome length {len(ind.genome)} differs from header m={m}")
    raw = bytearray((m + 7) // 8)
    for i, b in enumerate(ind.genome.bits):
        if b:
            raw[i // 8] |= 0x80 >> (i % 8)
    flags = (_HAS_FITNESS if ind.fitness is not None else 0) | (_IS_SOLUTION if ind.is_solution else 0)
    out = bytes(raw) + struct.pack("<B", flags)
    if ind.fitness is not None:
        out += struct.pack("<d", ind.fitness)
    return out


def _genome_length(individuals: Iterable[Individual]) -> int:
    lengths = {len(ind.genome) for ind in individuals}
    if len(lengths) > 1:
        raise ContractViolation(f"mixed genome lengths {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def _atomic_write(path: PathLike, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def encode_snapshot(snapshot: PopulationSnapshot, master_seed: int = 0,
                    population_size: Optional[int] = None) -> bytes:
    if snapshot.num_islands < 1:
        raise ContractViolation("snapshot needs at least one island")
    if any(len(island) == 0 for island in snapshot.islands):
        raise ContractViolation("snapshot islands must not be empty")
    r = population_size if population_size is not None else max(len(i) for i in snapshot.islands)
    m = _genome_length(snapshot.individuals())
    out = bytearray(SNAPSHOT_MAGIC)
    out += struct.pack("<HIIIQQ", FORMAT_VERSION, snapshot.num_islands, r, m,
                       snapshot.generation, master_seed)
    for island in snapshot.islands:
        out += struct.pack("<I", len(island))
        for ind in island:
            out += _pack_individual(ind, m)
    return bytes(out)


def decode_snapshot(data: bytes, path: Optional[PathLike] = None) -> tuple[PopulationSnapshot, dict]:
    """Parse snapshot bytes; returns the snapshot and its header fields."""
    rd = _Reader(data, path)
    rd.header(SNAPSHOT_MAGIC)
    num_islands, r, m, generation, master_seed = rd.unpack("<IIIQQ", "snapshot header")
    if num_islands < 1:
        rd.fail("island count must be >= 1", 6)
    if r < 1 or m < 1:
        rd.fail(f"invalid header r={r}, m={m}", 10)
    islands = []
    for i in range(num_islands):
        offset = rd.pos
        (count,) = rd.unpack("<I", f"size of island {i}")
        if count == 0:
            rd.fail(f"island {i} is empty", offset)
        islands.append([rd.individual(m) for _ in range(count)])
    rd.done()
    header = {"islands": num_islands, "population_size": r, "genome_length": m,
              "generation": generation, "master_seed": master_seed}
    return PopulationSnapshot(generation, islands), header


def write_snapshot(path: PathLike, snapshot: PopulationSnapshot, master_seed: int = 0,
                   population_size: Optional[int] = None) -> None:
    _atomic_write(path, encode_snapshot(snapshot, master_seed, population_size))


def read_snapshot(path: PathLike) -> PopulationSnapshot:
    return decode_snapshot(Path(path).read_bytes(), path)[0]


def read_snapshot_header(path: PathLike) -> dict:
    return decode_snapshot(Path(path).read_bytes(), path)[1]


def write_solutions(path: PathLike, individuals: Sequence[Individual], generation: int = 0) -> None:
    m = _genome_length(individuals)
    out = bytearray(SOLUTIONS_MAGIC)
    out += struct.pack("<HQII", FORMAT_VERSION, generation, m, len(individuals))
    for ind in individuals:
        out += _pack_individual(ind, m)
    _atomic_write(path, bytes(out))


def read_solutions(path: PathLike) -> list[Individual]:
    rd = _Reader(Path(path).read_bytes(), path)
    rd.header(SOLUTIONS_MAGIC)
    _generation, m, count = rd.unpack("<QII", "solutions header")
    if count and m < 1:
        rd.fail("genome length must be >= 1", 14)
    out = [rd.individual(m) for _ in range(count)]
    rd.done()
    return out


def write_flag(path: PathLike, flag: TerminationFlag) -> None:
    ind = flag.satisfying_individual
    m = len(ind.genome)
    out = FLAG_MAGIC + struct.pack("<HQII", FORMAT_VERSION, flag.generation, flag.island, m)
    _atomic_write(path, out + _pack_individual(ind, m))


def read_flag(path: PathLike) -> TerminationFlag:
    rd = _Reader(Path(path).read_bytes(), path)
    rd.header(FLAG_MAGIC)
    generation, island, m = rd.unpack("<QII", "flag header")
    if m < 1:
        rd.fail("genome length must be >= 1", 18)
    ind = rd.individual(m)
    rd.done()
    return TerminationFlag(generation, island, ind)


def write_report(path: PathLike, report: Mapping[str, Any]) -> None:
    """``key=value`` per line, in the mapping's order. Overwrites."""
    lines = []
    for key, value in report.items():
        if value is None:
            text = "-"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key}={text}")
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_report(path: PathLike) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            out[key] = value
    return out


class RunDirectory:
    """Layout of one run's artifacts."""

    CONFIG = "run.cfg"
    REPORT = "report.txt"
    SOLUTIONS = "solutions.pop"
    NON_SOLUTIONS = "non_solutions.pop"
    _GEN_RE = re.compile(r"^gen-(\d{6})\.pop$")

    def __init__(self, root: PathLike):
        self.root = Path(root)

    @property
    def generations_dir(self) -> Path:
        return self.root / "generations"

    @property
    def flags_dir(self) -> Path:
        return self.root / "flags"

    def create(self) -> None:
        self.generations_dir.mkdir(parents=True, exist_ok=True)
        self.flags_dir.mkdir(parents=True, exist_ok=True)

    def generation_path(self, generation: int) -> Path:
        return self.generations_dir / f"gen-{generation:06d}.pop"

    def flag_path(self, generation: int, island: int) -> Path:
        return self.flags_dir / f"gen-{generation:06d}-island-{island:03d}.flag"

    @property
    def solutions_path(self) -> Path:
        return self.root / self.SOLUTIONS

    @property
    def non_solutions_path(self) -> Path:
        return self.root / self.NON_SOLUTIONS

    @property
    def report_path(self) -> Path:
        return self.root / self.REPORT

    @property
    def config_path(self) -> Path:
        return self.root / self.CONFIG

    def generations(self) -> list[int]:
        if not self.generations_dir.is_dir():
            return []
        found = (self._GEN_RE.match(p.name) for p in self.generations_dir.iterdir())
        return sorted(int(m.group(1)) for m in found if m)

    def latest_generation(self) -> Optional[int]:
        gens = self.generations()
        return gens[-1] if gens else None


class DirectoryFlagStore:
    """Flag store backed by one file per (generation, island) under ``flags/``."""

    def __init__(self, run_dir: RunDirectory):
        self.run_dir = run_dir
        run_dir.flags_dir.mkdir(parents=True, exist_ok=True)

    def record(self, flag: TerminationFlag) -> None:
        path = self.run_dir.flag_path(flag.generation, flag.island)
        if not path.exists():
            write_flag(path, flag)

    def _paths(self, generation: int) -> list[Path]:
        return sorted(self.run_dir.flags_dir.glob(f"gen-{generation:06d}-island-*.flag"))

    def any_for(self, generation: int) -> bool:
        return bool(self._paths(generation))

    def flags_for(self, generation: int) -> list[TerminationFlag]:
        return [read_flag(p) for p in self._paths(generation)]
