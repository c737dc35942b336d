"""Command line: ``islandga init|run|filter|stats``.

Exit codes: 0 success, 2 configuration/usage error, 3 data error, 4 phase error.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path
from statistics import fmean
from typing import Optional, Sequence

from .core import ConfigError, ContractViolation, PopulationSnapshot
from .driver import evolve, filter_solutions, initialise
from .executor import PhaseError, Record
from .fss import DatasetError
from .operators import FitnessThreshold
from .persistence import RunDirectory, SnapshotFormatError, read_snapshot, write_solutions
from .pipeline import fitness_phase
from .runconfig import Run, build_run, format_config, load_config

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_PHASE = 4


class UsageError(Exception):
    pass


def _run_dir(args, settings: Optional[dict] = None) -> RunDirectory:
    path = args.run_dir or (settings or {}).get("run_dir")
    if not path:
        raise UsageError("no run directory: pass --run-dir or set run_dir in the config")
    return RunDirectory(path)


def _load(args) -> tuple[Run, RunDirectory]:
    if args.config is None:
        raise UsageError("--config is required")
    settings = load_config(Path(args.config))
    rd = _run_dir(args, settings)
    return build_run(settings, args.threads), rd


def _save_config(rd: RunDirectory, run: Run) -> None:
    rd.root.mkdir(parents=True, exist_ok=True)
    settings = {k: v for k, v in run.settings.items() if k != "run_dir"}
    rd.config_path.write_text(format_config(settings), encoding="utf-8")


def _wipe(rd: RunDirectory) -> None:
    for d in (rd.generations_dir, rd.flags_dir):
        if d.exists():
            shutil.rmtree(d)
    for f in (rd.solutions_path, rd.non_solutions_path, rd.report_path):
        f.unlink(missing_ok=True)


def cmd_init(args) -> int:
    run, rd = _load(args)
    if rd.generations():
        if not args.force:
            raise UsageError(f"{rd.root} already holds a population; use --force to start over")
        _wipe(rd)
    _save_config(rd, run)
    initialise(run.config, run.suite, rd.root)
    print(rd.generation_path(0))
    return EXIT_OK


def cmd_run(args) -> int:
    if args.config is None and args.run_dir and RunDirectory(args.run_dir).config_path.exists():
        args.config = str(RunDirectory(args.run_dir).config_path)
    run, rd = _load(args)
    if not rd.config_path.exists():
        _save_config(rd, run)
    evolve(run.config, run.suite, rd.root)
    sys.stdout.write(rd.report_path.read_text(encoding="utf-8"))
    return EXIT_OK


def _final_snapshot(rd: RunDirectory) -> PopulationSnapshot:
    latest = rd.latest_generation()
    if latest is None:
        raise FileNotFoundError(f"no snapshot in {rd.generations_dir}")
    return read_snapshot(rd.generation_path(latest))


def _evaluate_missing(snapshot: PopulationSnapshot, rd: RunDirectory, threads) -> PopulationSnapshot:
    if all(ind.evaluated for ind in snapshot.individuals()):
        return snapshot
    if not rd.config_path.exists():
        raise UsageError(f"final population has unevaluated individuals and {rd.config_path} is missing")
    run = build_run(load_config(rd.config_path), threads)
    islands = [
        [rec.value for rec in fitness_phase([Record(None, i) for i in island], run.suite.fitness_evaluator)]
        for island in snapshot.islands
    ]
    return PopulationSnapshot(snapshot.generation, islands)


def cmd_filter(args) -> int:
    rd = _run_dir(args)
    if args.threshold is None:
        raise UsageError("--threshold is required")
    snapshot = _evaluate_missing(_final_snapshot(rd), rd, args.threads)
    solutions, rest = filter_solutions(snapshot, FitnessThreshold(args.threshold))
    write_solutions(rd.solutions_path, solutions, snapshot.generation)
    write_solutions(rd.non_solutions_path, rest, snapshot.generation)
    print(f"solutions={len(solutions)}\t{rd.solutions_path}")
    print(f"non_solutions={len(rest)}\t{rd.non_solutions_path}")
    return EXIT_OK


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else repr(float(value))


def stats_rows(rd: RunDirectory) -> list[str]:
    rows = []
    for g in rd.generations():
        inds = read_snapshot(rd.generation_path(g)).individuals()
        fit = [ind.fitness for ind in inds if ind.fitness is not None]
        best = max(fit) if fit else None
        mean = fmean(fit) if fit else None
        solved = sum(ind.is_solution for ind in inds)
        rows.append(f"{g}\t{_fmt(best)}\t{_fmt(mean)}\t{solved}\t{len(fit)}/{len(inds)}")
    return rows


def cmd_stats(args) -> int:
    rd = _run_dir(args)
    rows = stats_rows(rd)
    if not rows:
        raise FileNotFoundError(f"no snapshots in {rd.generations_dir}")
    print("generation\tbest_fitness\tmean_fitness\tsolutions\tevaluated")
    for row in rows:
        print(row)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="islandga", description="Island-model GA on a map-shuffle-reduce engine.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", metavar="PATH")
        p.add_argument("--run-dir", metavar="PATH")
        p.add_argument("--threads", metavar="N", type=int)

    p = sub.add_parser("init", help="create the generation-0 population")
    common(p)
    p.add_argument("--force", action="store_true", help="discard an existing run directory's results")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="evolve until a stopping condition holds")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("filter", help="split the final population by a fitness threshold")
    common(p, config=False)
    p.add_argument("--threshold", type=float, metavar="X")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("stats", help="per-generation fitness table")
    common(p, config=False)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"islandga: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, SnapshotFormatError, FileNotFoundError, ContractViolation) as exc:
        print(f"islandga: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PhaseError as exc:
        print(f"islandga: phase error: {exc}", file=sys.stderr)
        return EXIT_PHASE


if __name__ == "__main__":
    sys.exit(main())
