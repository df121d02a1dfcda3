from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NoReturn, Optional

import pandas as pd

from hyperfanout._constants._constants import (
    BenchKeys,
    Defaults,
    IdType,
    InputFormat,
    MoveMode,
    PartitionMode,
    ReportKeys,
)
from hyperfanout._logging import logger
from hyperfanout._utils import PathLike, open_text
from hyperfanout.graph import BipartiteGraph, EdgeList, build_graph
from hyperfanout.io import (
    generate_planted,
    read_hypergraph,
    read_partition,
    write_edge_list,
    write_hmetis,
    write_partition,
)
from hyperfanout.metrics import MetricsReport, evaluate
from hyperfanout.objective import ScoreFunction
from hyperfanout.recurse import PartitionRun, run_direct, run_recursive
from hyperfanout.refine import RefineParams

__all__ = ["RunConfig", "main", "cmd_partition", "cmd_evaluate", "cmd_generate", "cmd_bench"]

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

_PLANTED_PREFIX = "planted:"


@dataclass(frozen=True)
class RunConfig:
    """Configuration of one partitioning run; every field has a command-line flag of the same name."""

    input: str
    k: int
    format: InputFormat = InputFormat.HMETIS
    id_type: IdType = IdType.INT
    mode: PartitionMode = PartitionMode.RECURSIVE
    arity: int = Defaults.ARITY
    p: float = Defaults.P
    epsilon: float = Defaults.EPSILON
    max_iterations: Optional[int] = None
    converged_move_fraction: float = Defaults.CONVERGED_MOVE_FRACTION
    seed: int = Defaults.SEED
    workers: int = Defaults.WORKERS
    move_mode: MoveMode = Defaults.MOVE_MODE
    penalty: float = Defaults.PENALTY
    final_fanout_approximation: bool = True
    initial_partition: Optional[str] = None
    output: Optional[str] = None
    report: Optional[str] = None
    trace: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "format", InputFormat(self.format))
        object.__setattr__(self, "id_type", IdType(self.id_type))
        object.__setattr__(self, "mode", PartitionMode(self.mode))
        object.__setattr__(self, "move_mode", MoveMode(self.move_mode))

    @property
    def iterations(self) -> int:
        """Iteration limit, per level in recursive mode."""
        if self.max_iterations is not None:
            return self.max_iterations
        if self.mode == PartitionMode.DIRECT:
            return Defaults.MAX_ITERATIONS_DIRECT
        return Defaults.MAX_ITERATIONS_PER_LEVEL

    def refine_params(self) -> RefineParams:
        return RefineParams(
            score=ScoreFunction.p_fanout(self.p),
            max_iterations=self.iterations,
            converged_move_fraction=self.converged_move_fraction,
            epsilon=self.epsilon,
            move_mode=self.move_mode,
            seed=self.seed,
            penalty=self.penalty,
            workers=self.workers,
        )

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        fields = cls.__dataclass_fields__
        return cls(**{name: getattr(args, name) for name in fields if hasattr(args, name)})


def _load_graph(source: str, fmt: InputFormat, id_type: IdType, seed: int = Defaults.SEED) -> BipartiteGraph:
    if source.startswith(_PLANTED_PREFIX):
        return build_graph(_planted(source, seed))
    return build_graph(read_hypergraph(source, fmt, id_type))


def _planted(source: str, seed: int) -> EdgeList:
    fields = source[len(_PLANTED_PREFIX) :].split(":")
    if len(fields) != 5:
        raise ValueError(f"Expected `planted:GROUPS:VERTICES:QUERIES:DEGREE:NOISE`, found {source!r}.")
    try:
        groups, vertices, queries, degree = (int(x) for x in fields[:4])
        noise = float(fields[4])
    except ValueError:
        raise ValueError(f"Invalid planted instance {source!r}.") from None
    return generate_planted(groups, vertices, queries, degree, noise, seed)


def _partition(graph: BipartiteGraph, config: RunConfig) -> PartitionRun:
    params = config.refine_params()
    if config.mode == PartitionMode.DIRECT:
        initial = None
        if config.initial_partition is not None:
            initial = read_partition(config.initial_partition, graph, config.k)
        return run_direct(graph, config.k, params, initial)
    if config.initial_partition is not None:
        raise ValueError("`--initial-partition` is only supported in direct mode.")
    return run_recursive(
        graph, config.k, config.arity, params, final_fanout_approximation=config.final_fanout_approximation
    )


def _write_report(report: MetricsReport, path: Optional[PathLike]) -> None:
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    with open_text(path, "w") as f:
        f.write(text)


@contextmanager
def _staged(*targets: Optional[PathLike]) -> Iterator[list[Optional[Path]]]:
    """
    Yield temporary paths next to ``targets`` that replace them only once the block has completed.

    On any error the temporary files are removed and no target is touched. ``None`` targets stay ``None``.
    """
    final = [None if target is None else Path(target) for target in targets]
    # the prefix keeps the suffix, so `.gz` outputs are still compressed
    staged = [None if path is None else path.with_name(f".{os.getpid()}.{path.name}") for path in final]
    try:
        yield staged
    except BaseException:
        for path in staged:
            if path is not None and path.exists():
                path.unlink()
        raise
    for tmp, path in zip(staged, final):
        if tmp is not None and path is not None:
            os.replace(tmp, path)


def cmd_partition(config: RunConfig) -> int:
    """
    Partition a hypergraph and write the partition, its report and the iteration trace.

    Nothing is written unless the run succeeds. The report goes to stdout when no report path is given.
    """
    if config.output is None:
        raise ValueError("An output path is required.")
    graph = _load_graph(config.input, config.format, config.id_type, config.seed)
    start = time.perf_counter()
    run = _partition(graph, config)
    report = evaluate(graph, run.state, config.p)
    logger.info(
        f"Partitioned into k={config.k} buckets in {run.iterations} iterations and "
        f"{time.perf_counter() - start:.2f}s: average fanout {report.average_fanout:.4f}."
    )

    with _staged(config.output, config.trace, config.report) as (output, trace, report_path):
        write_partition(output, run.state, graph.data_ids)
        if trace is not None:
            run.trace.to_csv(trace, index=False)
        if report_path is not None:
            _write_report(report, report_path)
    logger.info(f"Wrote partition to {config.output}.")
    if config.trace is not None:
        logger.info(f"Wrote trace to {config.trace}.")
    if config.report is None:
        _write_report(report, None)
    else:
        logger.info(f"Wrote report to {config.report}.")
    return EXIT_OK


def cmd_evaluate(
    input: str,
    partition: str,
    p: float = Defaults.P,
    *,
    format: InputFormat = InputFormat.HMETIS,
    id_type: IdType = IdType.INT,
    k: Optional[int] = None,
    report: Optional[str] = None,
    seed: int = Defaults.SEED,
) -> int:
    """Evaluate a partition file, possibly produced by another tool, against a hypergraph."""
    graph = _load_graph(input, InputFormat(format), IdType(id_type), seed)
    state = read_partition(partition, graph, k)
    _write_report(evaluate(graph, state, p), report)
    if report is not None:
        logger.info(f"Wrote report to {report}.")
    return EXIT_OK


def cmd_generate(
    output: str,
    groups: int,
    vertices: int,
    queries: int,
    degree: int,
    noise: float,
    *,
    seed: int = Defaults.SEED,
    format: InputFormat = InputFormat.EDGE_LIST,
) -> int:
    """Write a planted-partition instance as an edge list or an hMetis file."""
    edges = generate_planted(groups, vertices, queries, degree, noise, seed)
    if InputFormat(format) == InputFormat.HMETIS:
        write_hmetis(output, build_graph(edges))
    elif InputFormat(format) == InputFormat.EDGE_LIST:
        write_edge_list(output, edges)
    else:
        raise ValueError(f"Cannot write instances in {format!r} format.")
    logger.info(f"Wrote planted instance to {output}.")
    return EXIT_OK


def cmd_bench(
    instances: Sequence[str],
    ks: Sequence[int],
    ps: Sequence[float],
    modes: Sequence[PartitionMode],
    seeds: Sequence[int],
    output: str,
    **overrides: Any,
) -> int:
    """
    Run every combination of instance, ``k``, ``p``, mode and seed and write one CSV row per run.

    Instances are file paths or inline planted instances ``planted:GROUPS:VERTICES:QUERIES:DEGREE:NOISE``, which
    are regenerated for every seed. Rows hold the report fields (without bucket sizes), the iteration count and
    the wall time.
    """
    rows: list[dict[str, Any]] = []
    for instance in instances:
        for seed in seeds:
            config = RunConfig(input=instance, k=2, seed=seed, **overrides)
            graph = _load_graph(instance, config.format, config.id_type, seed)
            for k in ks:
                for p in ps:
                    for mode in modes:
                        cell = dataclasses.replace(config, k=k, p=p, mode=PartitionMode(mode))
                        start = time.perf_counter()
                        run = _partition(graph, cell)
                        elapsed = (time.perf_counter() - start) * 1000.0
                        row = evaluate(graph, run.state, p).to_dict()
                        row.pop(ReportKeys.BUCKET_SIZES.v)
                        row.update(
                            {
                                BenchKeys.INSTANCE.v: instance,
                                BenchKeys.MODE.v: PartitionMode(mode).v,
                                BenchKeys.SEED.v: seed,
                                BenchKeys.ITERATIONS.v: run.iterations,
                                BenchKeys.ELAPSED_MS.v: elapsed,
                            }
                        )
                        rows.append(row)
                        logger.info(
                            f"{instance} k={k} p={p} {PartitionMode(mode).v} seed={seed}: "
                            f"fanout {row[ReportKeys.AVERAGE_FANOUT.v]:.4f} in {elapsed:.0f}ms"
                        )
    columns = BenchKeys.values() + [key for key in ReportKeys.values() if key != ReportKeys.BUCKET_SIZES]
    pd.DataFrame(rows, columns=columns).to_csv(output, index=False)
    logger.info(f"Wrote {len(rows)} benchmark rows to {output}.")
    return EXIT_OK


def _add_input(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("input", help="Hypergraph file, or `planted:GROUPS:VERTICES:QUERIES:DEGREE:NOISE`.")
    parser.add_argument("--format", default=InputFormat.HMETIS.v, choices=InputFormat.values(), help="Input format.")
    parser.add_argument("--id-type", default=IdType.INT.v, choices=IdType.values(), help="Edge-list id type.")


def _add_run(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--arity", type=int, default=Defaults.ARITY, help="Split arity r of recursive mode.")
    parser.add_argument("--epsilon", type=float, default=Defaults.EPSILON, help="Allowed imbalance.")
    parser.add_argument(
        "--max-iterations",
        type=int,
        default=None,
        help=f"Iteration limit (default {Defaults.MAX_ITERATIONS_DIRECT} direct, "
        f"{Defaults.MAX_ITERATIONS_PER_LEVEL} per recursion level).",
    )
    parser.add_argument(
        "--converged-move-fraction",
        type=float,
        default=Defaults.CONVERGED_MOVE_FRACTION,
        help="Stop once fewer than this fraction of vertices moves.",
    )
    parser.add_argument("--workers", type=int, default=Defaults.WORKERS, help="Engine threads.")
    parser.add_argument("--move-mode", default=Defaults.MOVE_MODE.v, choices=MoveMode.values(), help="Move mode.")
    parser.add_argument(
        "--no-final-fanout-approximation",
        dest="final_fanout_approximation",
        action="store_false",
        help="Use plain p-fanout at every recursion level.",
    )


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors with the invalid-input exit status."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="hyperfanout", description="Balanced k-way hypergraph partitioning minimizing query fanout."
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log every iteration.")
    verbosity.add_argument("--quiet", action="store_true", help="Only log warnings and errors.")
    sub = parser.add_subparsers(dest="command", required=True)

    part = sub.add_parser("partition", help="Partition a hypergraph.")
    _add_input(part)
    part.add_argument("--k", type=int, required=True, help="Number of buckets.")
    part.add_argument("--mode", default=PartitionMode.RECURSIVE.v, choices=PartitionMode.values())
    part.add_argument("--p", type=float, default=Defaults.P, help="Probability of the p-fanout objective.")
    part.add_argument("--seed", type=int, default=Defaults.SEED)
    part.add_argument("--penalty", type=float, default=Defaults.PENALTY, help="Cost of leaving the initial bucket.")
    part.add_argument("--initial-partition", default=None, help="Partition file to start from (direct mode).")
    part.add_argument("--output", required=True, help="Partition file to write.")
    part.add_argument("--report", default=None, help="JSON report path (default: stdout).")
    part.add_argument("--trace", default=None, help="Per-iteration trace CSV path.")
    _add_run(part)
    part.set_defaults(handler=lambda args: cmd_partition(RunConfig.from_args(args)))

    ev = sub.add_parser("evaluate", help="Evaluate a partition file.")
    _add_input(ev)
    ev.add_argument("--partition", required=True, help="Partition file to evaluate.")
    ev.add_argument("--p", type=float, default=Defaults.P)
    ev.add_argument("--k", type=int, default=None, help="Number of buckets (default: largest bucket id + 1).")
    ev.add_argument("--report", default=None, help="JSON report path (default: stdout).")
    ev.add_argument("--seed", type=int, default=Defaults.SEED, help="Seed of inline planted instances.")
    ev.set_defaults(
        handler=lambda args: cmd_evaluate(
            args.input,
            args.partition,
            args.p,
            format=args.format,
            id_type=args.id_type,
            k=args.k,
            report=args.report,
            seed=args.seed,
        )
    )

    gen = sub.add_parser("generate", help="Write a planted-partition instance.")
    gen.add_argument("--groups", type=int, required=True)
    gen.add_argument("--vertices", type=int, required=True, help="Data vertices per group.")
    gen.add_argument("--queries", type=int, required=True, help="Queries per group.")
    gen.add_argument("--degree", type=int, required=True, help="Neighbors per query.")
    gen.add_argument("--noise", type=float, default=0.0, help="Probability of an outside-group neighbor.")
    gen.add_argument("--seed", type=int, default=Defaults.SEED)
    gen.add_argument(
        "--format", default=InputFormat.EDGE_LIST.v, choices=[InputFormat.EDGE_LIST.v, InputFormat.HMETIS.v]
    )
    gen.add_argument("--output", required=True)
    gen.set_defaults(
        handler=lambda args: cmd_generate(
            args.output,
            args.groups,
            args.vertices,
            args.queries,
            args.degree,
            args.noise,
            seed=args.seed,
            format=args.format,
        )
    )

    bench = sub.add_parser("bench", help="Run a grid of partitioning runs and write a CSV.")
    bench.add_argument("--instance", action="append", required=True, help="Instance; repeat for several.")
    bench.add_argument("--format", default=InputFormat.HMETIS.v, choices=InputFormat.values())
    bench.add_argument("--id-type", default=IdType.INT.v, choices=IdType.values())
    bench.add_argument("--k", type=int, nargs="+", default=[2])
    bench.add_argument("--p", type=float, nargs="+", default=[Defaults.P])
    bench.add_argument(
        "--mode", nargs="+", default=[PartitionMode.RECURSIVE.v], choices=PartitionMode.values()
    )
    bench.add_argument("--seeds", type=int, nargs="+", default=[Defaults.SEED])
    bench.add_argument("--output", required=True, help="CSV path.")
    _add_run(bench)
    bench.set_defaults(
        handler=lambda args: cmd_bench(
            args.instance,
            args.k,
            args.p,
            args.mode,
            args.seeds,
            args.output,
            format=args.format,
            id_type=args.id_type,
            arity=args.arity,
            epsilon=args.epsilon,
            max_iterations=args.max_iterations,
            converged_move_fraction=args.converged_move_fraction,
            workers=args.workers,
            move_mode=args.move_mode,
            final_fanout_approximation=args.final_fanout_approximation,
        )
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the ``hyperfanout`` command.

    Returns
    -------
    ``0`` on success, ``1`` on invalid input, ``2`` on I/O errors. Usage errors exit with ``1`` through
    :class:`SystemExit`.
    """
    args = _build_parser().parse_args(argv)
    logger.setLevel(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)
    try:
        return int(args.handler(args))
    except OSError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_IO
    except ValueError as e:
        logger.error(str(e))
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
