"""Benchmark harness: repeated timed solves, GFLOPS, ladders and reports."""

import logging
import math
import socket
import statistics
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import Config
from .errors import BenchError
from .kernel import vector_width_report
from .matrix import DistanceMatrix, generate_graph
from .models import (
    BenchPlan, BenchRecord, ElemKind, GraphSpec, KernelTier, SchedulerMode,
    SolveConfig, SyncMechanism,
)
from .reference import fw_classic
from .scheduler import solve

logger = logging.getLogger(__name__)

# Stable CSV column order; documented in the README.
CSV_COLUMNS = [
    "n", "bs", "threads", "tier", "mode", "sync", "elem_kind", "affinity", "granularity",
    "track_paths", "variant", "reps", "mean_seconds", "gflops", "speedup_vs_barrier", "verified",
    "repetitions", "null_fraction", "weight_min", "weight_max", "seed",
    "hostname", "physical_cores", "logical_cores", "vector_width",
]

DEFAULT_LADDER = [tier.value for tier in KernelTier]


def gflops(n: int, seconds: float) -> float:
    """2 * n^3 / (seconds * 1e9): one add and one min per inner iteration."""
    if not seconds > 0:
        raise ValueError(f"seconds must be positive, got {seconds}")
    return 2.0 * n ** 3 / (seconds * 1e9)


def desk_sweep(graph: Optional[GraphSpec] = None) -> BenchPlan:
    """Scaled-down image of the published sweep.

    Sizes 512/1024/2048, BS 32/64/128, T in {1, physical, logical}, both element
    kinds; the kernel ladder in barrier mode plus both dependency-driven flavors
    on the top tier.
    """
    graph = graph or GraphSpec(n=512)
    thread_counts = sorted({1, Config.physical_cores(), Config.logical_cores()})
    configs = []
    for elem_kind in ElemKind:
        for threads in thread_counts:
            for bs in (32, 64, 128):
                for tier in KernelTier:
                    configs.append(SolveConfig(bs=bs, threads=threads, tier=tier, elem_kind=elem_kind))
                for sync in SyncMechanism:
                    configs.append(SolveConfig(bs=bs, threads=threads, tier=KernelTier.UNROLLED,
                                               mode=SchedulerMode.DEP_DRIVEN, sync=sync, elem_kind=elem_kind))
    return BenchPlan(graph=graph, sizes=[512, 1024, 2048], configs=configs)


def _host_metadata() -> Dict[str, object]:
    return {
        "hostname": socket.gethostname(),
        "physical_cores": Config.physical_cores(),
        "logical_cores": Config.logical_cores(),
        "vector_width": vector_width_report(),
    }


def _agrees(got: DistanceMatrix, want: DistanceMatrix, exact: bool) -> bool:
    if exact:
        return got.bitwise_equal(want)
    rtol = 1e-5 if got.elem_kind is ElemKind.F32 else 1e-9
    return bool(np.allclose(got.data, want.data, rtol=rtol, atol=0.0))


def _measure(d: DistanceMatrix, cfg: SolveConfig, reps: int, warmup: bool) -> Tuple[List[float], DistanceMatrix]:
    if warmup:
        solve(d, cfg)
    timings = []
    last = None
    for _ in range(reps):
        solution = solve(d, cfg)
        timings.append(solution.seconds)
        last = solution.distances
    return timings, last


def run_bench(sweep: Sequence[SolveConfig], graph: GraphSpec, reps: Optional[int] = None,
              sizes: Optional[Iterable[int]] = None, verify_cap: Optional[int] = None,
              warmup: Optional[bool] = None) -> List[BenchRecord]:
    """Time every config on every size, one solve at a time.

    The graph is generated once per (n, elem_kind, seed). Each config gets an
    untimed warm-up run when enabled, then `reps` timed runs; the record keeps
    every timing and their mean. For n within the verification cap the output
    is compared with the oracle. With integer weights every config on the same
    graph must also reproduce the first config's output bit for bit.
    """
    reps = reps if reps is not None else Config.BENCH_REPS
    verify_cap = verify_cap if verify_cap is not None else Config.VERIFY_CAP
    warmup = Config.BENCH_WARMUP if warmup is None else warmup
    sizes = list(sizes) if sizes else [graph.n]
    host = _host_metadata()

    graphs: Dict[Tuple[int, ElemKind], DistanceMatrix] = {}
    oracles: Dict[Tuple[int, ElemKind], DistanceMatrix] = {}
    references: Dict[Tuple[int, ElemKind], DistanceMatrix] = {}
    records: List[BenchRecord] = []

    for n in sizes:
        spec = GraphSpec(**{**graph.model_dump(), "n": n})
        for cfg in sweep:
            key = (n, cfg.elem_kind)
            if key not in graphs:
                graphs[key] = generate_graph(spec, cfg.elem_kind)
            d = graphs[key]
            echo = {"n": n, **cfg.model_dump(mode="json")}

            try:
                timings, output = _measure(d, cfg, reps, warmup)
            except Exception as e:
                logger.error(f"Benchmark config failed: {echo}: {e}")
                raise BenchError(echo, e) from e

            verified = None
            exact = spec.draws_integers
            if key not in references:
                references[key] = output
            elif exact and not output.bitwise_equal(references[key]):
                logger.error(f"Output of {cfg.variant} (bs={cfg.bs}, T={cfg.threads}) differs from the "
                             f"first config on n={n}")
                verified = False
            if n <= verify_cap and verified is None:
                if key not in oracles:
                    oracles[key] = fw_classic(d)[0]
                verified = _agrees(output, oracles[key], exact)
                if not verified:
                    logger.error(f"Oracle mismatch for {echo}")

            mean = statistics.fmean(timings)
            record = BenchRecord(
                n=n, bs=cfg.bs, threads=cfg.threads, tier=cfg.tier, mode=cfg.mode, sync=cfg.sync,
                elem_kind=cfg.elem_kind, affinity=cfg.affinity, granularity=cfg.granularity,
                track_paths=cfg.track_paths, repetitions=timings, mean_seconds=mean,
                gflops=gflops(n, mean), verified=verified, null_fraction=spec.null_fraction,
                weight_min=spec.weight_min, weight_max=spec.weight_max, seed=spec.seed, **host,
            )
            records.append(record)
            logger.info(f"n={n} bs={cfg.bs} T={cfg.threads} {record.variant} {cfg.elem_kind.value}: "
                        f"{mean:.4f}s mean, {record.gflops:.3f} GFLOPS")

    _attach_barrier_speedups(records)
    return records


def _attach_barrier_speedups(records: List[BenchRecord]) -> None:
    def key(r: BenchRecord):
        return (r.n, r.bs, r.threads, r.tier, r.elem_kind, r.affinity, r.granularity, r.track_paths)

    barrier = {key(r): r.gflops for r in records if r.mode is SchedulerMode.BARRIER}
    for record in records:
        if record.mode is SchedulerMode.DEP_DRIVEN and key(record) in barrier:
            record.speedup_vs_barrier = record.gflops / barrier[key(record)]


def ladder_groups(records: Sequence[BenchRecord]) -> List[Tuple[int, ElemKind]]:
    """Distinct (n, elem_kind) pairs in first-seen order; a ladder never mixes them."""
    return list(dict.fromkeys((r.n, r.elem_kind) for r in records))


def improvement_table(records: Sequence[BenchRecord], ladder: Sequence[str] = DEFAULT_LADDER,
                      n: Optional[int] = None, elem_kind: Optional[ElemKind] = None) -> pd.DataFrame:
    """Step-by-step and cumulative GFLOPS ratios along `ladder` (variant labels).

    Only records of one (n, elem_kind) group take part: the given one, or the
    first group in `records` when neither is given. Each step uses its best
    record. A step with no record stays NaN, and so do the ratios that would
    need it.
    """
    if records and n is None and elem_kind is None:
        n, elem_kind = records[0].n, records[0].elem_kind
    best: Dict[str, float] = {}
    for r in records:
        if (n is not None and r.n != n) or (elem_kind is not None and r.elem_kind is not elem_kind):
            continue
        best[r.variant] = max(best.get(r.variant, 0.0), r.gflops)

    rows = []
    previous = math.nan
    first = best.get(ladder[0], math.nan) if ladder else math.nan
    for step in ladder:
        value = best.get(step, math.nan)
        rows.append({
            "variant": step,
            "gflops": value,
            "ratio": value / previous if previous else math.nan,
            "cumulative": value / first if first else math.nan,
        })
        previous = value
    table = pd.DataFrame(rows, columns=["variant", "gflops", "ratio", "cumulative"])
    table["improved"] = table["ratio"] >= 1.0
    return table


def ladder_is_monotonic(table: pd.DataFrame) -> bool:
    """True when every measured step is at least as fast as the one before it."""
    ratios = table["ratio"].dropna()
    return bool((ratios >= 1.0).all())


def records_frame(records: Sequence[BenchRecord]) -> pd.DataFrame:
    rows = []
    for r in records:
        row = r.model_dump(mode="json")
        row["reps"] = len(r.repetitions)
        row["repetitions"] = ";".join(f"{t:.9f}" for t in r.repetitions)
        rows.append(row)
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def emit_csv(records: Sequence[BenchRecord], path) -> None:
    """One row per record in CSV_COLUMNS order; timings joined with ';'."""
    records_frame(records).to_csv(Path(path), index=False)
    logger.info(f"Wrote {len(records)} benchmark rows to {path}")


def emit_table(records: Sequence[BenchRecord]) -> str:
    """GFLOPS grouped by (elem kind, n, T, BS) with one column per variant; '*' marks each column's best."""
    if not records:
        return "(no records)"
    frame = records_frame(records)
    order = list(dict.fromkeys(frame["variant"]))
    pivot = frame.pivot_table(index=["elem_kind", "n", "threads", "bs"], columns="variant",
                              values="gflops", aggfunc="max")
    pivot = pivot[[v for v in order if v in pivot.columns]]

    rendered = pivot.copy().astype(object)
    for column in pivot.columns:
        best = pivot[column].max()
        for idx, value in pivot[column].items():
            if pd.isna(value):
                rendered.at[idx, column] = "-"
            else:
                rendered.at[idx, column] = f"{value:.3f}{'*' if value == best else ' '}"
    return rendered.to_string()


def load_plan(path) -> BenchPlan:
    """Read a JSON sweep file into a BenchPlan."""
    return BenchPlan.model_validate_json(Path(path).read_text())
