"""Command-line entry point: gen, solve, verify, bench and check-tiers.

Exit codes: 0 success, 1 verification mismatch, 2 usage or validation error,
3 configuration error, 4 I/O error.
"""

import argparse
import itertools
import logging
import sys
import time
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from .bench import (
    DEFAULT_LADDER, desk_sweep, emit_csv, emit_table, gflops, improvement_table,
    ladder_groups, ladder_is_monotonic, load_plan, run_bench,
)
from .config import Config
from .errors import (
    BenchError, BlockSizeError, CorruptPathMatrix, DimensionMismatch, ElementKindMismatch,
    InvalidPath, MatrixFormatError, ThreadPoolError,
)
from .kernel import tile_relax_variant_check
from .matrix import generate_graph, read_intermediate, read_matrix, write_intermediate, write_matrix
from .models import (
    AffinityGranularity, AffinityPolicy, BenchPlan, ElemKind, GraphSpec, KernelTier, SchedulerMode,
    SolveConfig, SyncMechanism,
)
from .reference import check_paths, fw_classic
from .scheduler import solve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else Config.LOG_LEVEL,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )


def _choices(enum_cls) -> List[str]:
    return [member.value for member in enum_cls]


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        field = ".".join(str(loc) for loc in item["loc"]) or "value"
        parts.append(f"{field}: {item['msg']}")
    return "; ".join(parts)


def cmd_gen(args: argparse.Namespace) -> int:
    """Generate a random graph and write it to a matrix file."""
    try:
        spec = GraphSpec(n=args.n, null_fraction=args.null_fraction, weight_min=args.wmin,
                         weight_max=args.wmax, seed=args.seed, integral=not args.continuous)
    except ValidationError as e:
        print(f"error: invalid graph spec: {_validation_message(e)}", file=sys.stderr)
        return EXIT_USAGE

    d = generate_graph(spec, ElemKind(args.elem_kind))
    try:
        write_matrix(args.out, d)
    except OSError as e:
        logger.error(f"Cannot write {args.out}: {e}")
        return EXIT_IO

    print(f"n={d.n} elem_kind={d.elem_kind.value} seed={spec.seed} "
          f"infinite_fraction={d.infinite_fraction():.4f} -> {args.out}")
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    """Close a matrix file with the blocked solver."""
    try:
        d = read_matrix(args.input)
    except (OSError, MatrixFormatError) as e:
        logger.error(f"Cannot read {args.input}: {e}")
        return EXIT_IO

    try:
        cfg = SolveConfig(bs=args.bs, threads=args.threads, tier=args.tier, mode=args.mode, sync=args.sync,
                          affinity=args.affinity, granularity=args.granularity,
                          track_paths=args.paths is not None, elem_kind=d.elem_kind)
    except ValidationError as e:
        print(f"error: invalid solve config: {_validation_message(e)}", file=sys.stderr)
        return EXIT_USAGE

    started = time.perf_counter()
    try:
        solution = solve(d, cfg)
    except BlockSizeError as e:
        print(f"error: {e}; choose a block size that divides {d.n}", file=sys.stderr)
        return EXIT_CONFIG
    except ThreadPoolError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    wall = time.perf_counter() - started

    try:
        write_matrix(args.out, solution.distances)
        if args.paths is not None:
            write_intermediate(args.paths, solution.paths)
    except OSError as e:
        logger.error(f"Cannot write results: {e}")
        return EXIT_IO

    print(f"n={d.n} bs={cfg.bs} T={cfg.threads} tier={cfg.tier.value} mode={cfg.mode.value} "
          f"sync={cfg.sync.value} wall={wall:.4f}s compute={solution.seconds:.4f}s "
          f"gflops={gflops(d.n, solution.seconds):.3f}")
    return EXIT_OK


def _path_pairs(n: int, limit: int, seed: int):
    if n * n <= limit:
        return ((i, j) for i in range(n) for j in range(n))
    rng = np.random.Generator(np.random.PCG64(seed))
    cells = rng.integers(0, n, size=(limit, 2))
    return ((int(i), int(j)) for i, j in cells)


def cmd_verify(args: argparse.Namespace) -> int:
    """Recompute the oracle for `original` and compare with `closed`."""
    try:
        original = read_matrix(args.original)
        closed = read_matrix(args.closed)
    except (OSError, MatrixFormatError) as e:
        logger.error(f"Cannot read input: {e}")
        return EXIT_IO

    if original.n != closed.n or original.elem_kind is not closed.elem_kind:
        print(f"error: {args.original} is n={original.n}/{original.elem_kind.value} but "
              f"{args.closed} is n={closed.n}/{closed.elem_kind.value}", file=sys.stderr)
        return EXIT_USAGE

    expected = fw_classic(original)[0]
    if args.rtol == 0.0:
        cell = expected.first_difference(closed)
    else:
        close = np.isclose(closed.data, expected.data, rtol=args.rtol, atol=0.0)
        bad = np.argwhere(~close)
        cell = (int(bad[0][0]), int(bad[0][1])) if bad.size else None
    if cell is not None:
        print(f"MISMATCH at ({cell[0]}, {cell[1]}): expected {expected[cell]}, got {closed[cell]}")
        return EXIT_MISMATCH

    if args.paths is not None:
        try:
            p = read_intermediate(args.paths, expect_n=original.n)
        except (DimensionMismatch, ElementKindMismatch) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_USAGE
        except (OSError, MatrixFormatError) as e:
            logger.error(f"Cannot read {args.paths}: {e}")
            return EXIT_IO
        pairs = _path_pairs(original.n, Config.PATH_CHECK_PAIRS, seed=0)
        try:
            bad_path = check_paths(original, closed, p, pairs, rtol=args.rtol)
        except (CorruptPathMatrix, InvalidPath) as e:
            print(f"MISMATCH in paths: {e}")
            return EXIT_MISMATCH
        if bad_path is not None:
            i, j, want, got = bad_path
            print(f"MISMATCH in path ({i}, {j}): distance {want}, path cost {got}")
            return EXIT_MISMATCH

    print(f"OK n={original.n} elem_kind={original.elem_kind.value}")
    return EXIT_OK


def _plan_from_flags(args: argparse.Namespace) -> BenchPlan:
    graph = GraphSpec(n=(args.sizes or [512])[0], null_fraction=args.null_fraction, seed=args.seed)
    axes = (args.sizes, args.bs, args.threads, args.tiers, args.modes, args.elem_kinds)
    if not any(axes):
        plan = desk_sweep(graph)
        return plan.model_copy(update={"reps": args.reps or plan.reps})

    logical = Config.logical_cores()
    configs = []
    for elem_kind, threads, bs, tier, mode in itertools.product(
            args.elem_kinds or [ElemKind.F32.value], args.threads or [logical], args.bs or [64],
            args.tiers or [KernelTier.UNROLLED.value], args.modes or [SchedulerMode.BARRIER.value]):
        if mode == SchedulerMode.DEP_DRIVEN.value:
            syncs = args.syncs or _choices(SyncMechanism)
        else:
            syncs = [SyncMechanism.SEMAPHORE.value]
        for sync in syncs:
            configs.append(SolveConfig(bs=bs, threads=threads, tier=tier, mode=mode, sync=sync,
                                       affinity=args.affinity, elem_kind=elem_kind,
                                       track_paths=args.track_paths))
    return BenchPlan(graph=graph, sizes=args.sizes or [graph.n], configs=configs,
                     reps=args.reps or Config.BENCH_REPS)


def cmd_bench(args: argparse.Namespace) -> int:
    """Run a sweep, print the GFLOPS table and ladder, optionally write CSV."""
    try:
        plan = load_plan(args.sweep_file) if args.sweep_file else _plan_from_flags(args)
    except ValidationError as e:
        print(f"error: invalid sweep: {_validation_message(e)}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"Cannot read sweep file: {e}")
        return EXIT_IO

    logger.info(f"Running {len(plan.configs)} configs x {len(plan.sizes or [plan.graph.n])} sizes, "
                f"{plan.reps} reps each")
    try:
        records = run_bench(plan.configs, plan.graph, reps=plan.reps, sizes=plan.sizes,
                            verify_cap=args.verify_cap, warmup=False if args.no_warmup else None)
    except BenchError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    print(emit_table(records))
    for n, elem_kind in ladder_groups(records):
        ladder = improvement_table(records, DEFAULT_LADDER, n=n, elem_kind=elem_kind)
        if ladder["gflops"].notna().sum() > 1:
            print()
            print(f"ladder n={n} elem_kind={elem_kind.value}")
            print(ladder.to_string(index=False, na_rep="-", float_format=lambda v: f"{v:.3f}"))
            print(f"monotonic: {ladder_is_monotonic(ladder)}")

    if args.csv:
        try:
            emit_csv(records, args.csv)
        except OSError as e:
            logger.error(f"Cannot write {args.csv}: {e}")
            return EXIT_IO

    failed = [r for r in records if r.verified is False]
    return EXIT_MISMATCH if failed else EXIT_OK


def cmd_check_tiers(args: argparse.Namespace) -> int:
    """Differential-test every tier against the baseline kernel."""
    status = EXIT_OK
    for tier in list(KernelTier)[1:]:
        report = tile_relax_variant_check(tier, trials=args.trials, bs=args.bs,
                                          elem_kind=ElemKind(args.elem_kind), seed=args.seed)
        if report.clean:
            print(f"{tier.value:20s} clean ({report.trials} trials, bs={report.bs}, {report.elem_kind.value})")
        else:
            print(f"{tier.value:20s} MISMATCH {report.mismatch.model_dump()}")
            status = EXIT_MISMATCH
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockfw", description="Blocked Floyd-Warshall APSP solver and benchmark")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a random graph")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--null-fraction", type=float, default=0.30)
    gen.add_argument("--wmin", type=float, default=1.0)
    gen.add_argument("--wmax", type=float, default=100.0)
    gen.add_argument("--seed", type=int, default=42)
    gen.add_argument("--continuous", action="store_true", help="draw real-valued weights")
    gen.add_argument("--elem-kind", choices=_choices(ElemKind), default=ElemKind.F32.value)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    slv = sub.add_parser("solve", help="solve a matrix file")
    slv.add_argument("--in", dest="input", required=True)
    slv.add_argument("--out", required=True)
    slv.add_argument("--bs", type=int, default=64)
    slv.add_argument("--threads", type=int, default=Config.logical_cores())
    slv.add_argument("--tier", choices=_choices(KernelTier), default=KernelTier.UNROLLED.value)
    slv.add_argument("--mode", choices=_choices(SchedulerMode), default=SchedulerMode.BARRIER.value)
    slv.add_argument("--sync", choices=_choices(SyncMechanism), default=SyncMechanism.SEMAPHORE.value)
    slv.add_argument("--affinity", choices=_choices(AffinityPolicy), default=AffinityPolicy.NONE.value)
    slv.add_argument("--granularity", choices=_choices(AffinityGranularity),
                     default=AffinityGranularity.FINE.value)
    slv.add_argument("--paths", metavar="FILE", help="also write the intermediate matrix")
    slv.set_defaults(func=cmd_solve)

    ver = sub.add_parser("verify", help="check a closed matrix against the oracle")
    ver.add_argument("--original", required=True)
    ver.add_argument("--closed", required=True)
    ver.add_argument("--paths", metavar="FILE")
    ver.add_argument("--rtol", type=float, default=0.0, help="relative tolerance; 0 means bitwise")
    ver.set_defaults(func=cmd_verify)

    bch = sub.add_parser("bench", help="run a benchmark sweep")
    bch.add_argument("--sweep-file", help="JSON sweep (graph, sizes, configs, reps)")
    bch.add_argument("--sizes", type=int, nargs="+")
    bch.add_argument("--bs", type=int, nargs="+")
    bch.add_argument("--threads", type=int, nargs="+")
    bch.add_argument("--tiers", choices=_choices(KernelTier), nargs="+")
    bch.add_argument("--modes", choices=_choices(SchedulerMode), nargs="+")
    bch.add_argument("--syncs", choices=_choices(SyncMechanism), nargs="+")
    bch.add_argument("--elem-kinds", choices=_choices(ElemKind), nargs="+")
    bch.add_argument("--affinity", choices=_choices(AffinityPolicy), default=AffinityPolicy.NONE.value)
    bch.add_argument("--track-paths", action="store_true")
    bch.add_argument("--null-fraction", type=float, default=0.30)
    bch.add_argument("--reps", type=int)
    bch.add_argument("--seed", type=int, default=42)
    bch.add_argument("--verify-cap", type=int)
    bch.add_argument("--no-warmup", action="store_true")
    bch.add_argument("--csv")
    bch.set_defaults(func=cmd_bench)

    chk = sub.add_parser("check-tiers", help="differential-test kernel tiers")
    chk.add_argument("--trials", type=int, default=1000)
    chk.add_argument("--bs", type=int, default=32)
    chk.add_argument("--elem-kind", choices=_choices(ElemKind), default=ElemKind.F32.value)
    chk.add_argument("--seed", type=int, default=0)
    chk.set_defaults(func=cmd_check_tiers)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    configure_logging(args.verbose)
    try:
        Config.validate()
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return args.func(args)
    except Exception as e:
        logger.error(f"Unhandled error: {e}", exc_info=True)
        return EXIT_CONFIG
