"""Blocked Floyd-Warshall rounds over a pool of worker threads.

A solve runs R = n / BS rounds. Round k relaxes the pivot tile (k, k), then
the pivot-row tiles (k, j) and pivot-column tiles (i, k), then every remaining
tile (i, j) from its pivot-column tile (i, k) and pivot-row tile (k, j).

Barrier mode separates those groups with full barriers. Dependency-driven mode
keeps the barrier after the pivot tile and at round end, but lets a remaining
tile start as soon as its own two dependencies are done.
"""

import logging
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, List, NamedTuple, Optional, Tuple

import numpy as np

from .affinity import apply_affinity
from .config import Config
from .deps import DependencyTable, make_dependency_table
from .errors import BlockSizeError, ThreadPoolError
from .events import END, START, EventLog
from .kernel import TileKernel, make_kernel
from .matrix import NONE, DistanceMatrix, IntermediateMatrix, TiledMatrix, from_tiled, to_tiled
from .models import SchedulerMode, SolveConfig

logger = logging.getLogger(__name__)

Task = Tuple[int, int, int]  # (phase, tile row, tile column)


@dataclass
class Instrumentation:
    """Test-only hooks; none of them changes results."""
    event_log: Optional[EventLog] = None
    max_delay: float = 0.0  # seconds of random sleep injected before each tile relaxation
    audit: bool = False  # check post/wait accounting at every round end
    seed: int = 0
    round_hook: Optional[Callable[[int, Optional[DependencyTable]], None]] = field(default=None, repr=False)


class Solution(NamedTuple):
    distances: DistanceMatrix
    paths: Optional[IntermediateMatrix]
    seconds: float  # rounds only: excludes tiling and pool start-up


@dataclass
class Worker:
    index: int
    kernel: TileKernel
    rng: random.Random


class WorkerPool:
    """Exactly `threads` long-lived workers that run one job at a time.

    ``run(job)`` hands the same callable to every worker and returns once all
    of them are done, which makes it a full barrier. ``sync()`` is a barrier
    among the workers inside a job.
    """

    def __init__(self, threads: int, kernel_factory: Callable[[], TileKernel],
                 seed: int = 0, name: str = "blockfw"):
        self.threads = threads
        self.workers = [Worker(w, kernel_factory(), random.Random(seed + w)) for w in range(threads)]
        self._start = threading.Barrier(threads + 1)
        self._finish = threading.Barrier(threads + 1)
        self._sync = threading.Barrier(threads)
        self._job: Optional[Callable[[Worker], None]] = None
        self._errors: List[BaseException] = []
        self._lock = threading.Lock()
        self._abort_hooks: List[Callable[[], None]] = []
        self.aborted = False
        self._threads: List[threading.Thread] = []

        try:
            for worker in self.workers:
                thread = threading.Thread(target=self._loop, args=(worker,),
                                          name=f"{name}-{worker.index}", daemon=True)
                thread.start()
                self._threads.append(thread)
        except RuntimeError as e:
            self._start.abort()
            raise ThreadPoolError(f"could not start {threads} workers: {e}") from e

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()

    def on_abort(self, hook: Callable[[], None]) -> None:
        self._abort_hooks.append(hook)

    def _loop(self, worker: Worker) -> None:
        while True:
            try:
                self._start.wait()
            except threading.BrokenBarrierError:
                return
            job = self._job
            if job is None:
                return
            try:
                job(worker)
            except BaseException as e:
                self._fail(e)
            try:
                self._finish.wait()
            except threading.BrokenBarrierError:
                return

    def _fail(self, error: BaseException) -> None:
        with self._lock:
            self._errors.append(error)
            first = not self.aborted
            self.aborted = True
        if first:
            logger.error(f"Worker failed, aborting pool: {error!r}")
            self._sync.abort()
            for hook in self._abort_hooks:
                hook()

    def run(self, job: Callable[[Worker], None]) -> None:
        if self.aborted:
            raise ThreadPoolError("pool was aborted by an earlier failure")
        self._job = job
        self._start.wait()
        self._finish.wait()
        if self._errors:
            raise self._errors[0]

    def sync(self) -> None:
        self._sync.wait()

    def close(self) -> None:
        self._job = None
        if not self._start.broken:
            self._start.wait()
        for thread in self._threads:
            thread.join()


class _Tracer:
    """Event recording and delay injection around each tile, when instrumented."""

    def __init__(self, instrumentation: Optional[Instrumentation]):
        self.log = instrumentation.event_log if instrumentation else None
        self.max_delay = instrumentation.max_delay if instrumentation else 0.0

    def start(self, worker: Worker, k: int, phase: int, block: Tuple[int, int]) -> None:
        if self.max_delay:
            time.sleep(worker.rng.uniform(0.0, self.max_delay))
        if self.log is not None:
            self.log.record(worker.index, k, phase, block, START)

    def end(self, worker: Worker, k: int, phase: int, block: Tuple[int, int]) -> None:
        if self.log is not None:
            self.log.record(worker.index, k, phase, block, END)


def _pivot_phase(k: int, pool: WorkerPool, tiled: TiledMatrix, paths: Optional[TiledMatrix],
                 tracer: _Tracer) -> None:
    """Relax the pivot tile, its rows split among the workers for each pivot index."""
    bs = tiled.bs
    tile = tiled.tiles[k][k]
    pc = paths.tiles[k][k] if paths is not None else None
    k_base = k * bs

    if pool.threads == 1:
        def solo(worker: Worker) -> None:
            tracer.start(worker, k, 1, (k, k))
            worker.kernel.relax(tile, tile, tile, pc, k_base)
            tracer.end(worker, k, 1, (k, k))
        pool.run(solo)
        return

    bounds = np.linspace(0, bs, min(pool.threads, bs) + 1).astype(int)
    row_ranges = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    pivot_row = np.empty(bs, dtype=tile.dtype)

    def shared(worker: Worker) -> None:
        rows = row_ranges[worker.index] if worker.index < len(row_ranges) else None
        if worker.index == 0:
            tracer.start(worker, k, 1, (k, k))
        for kk in range(bs):
            if worker.index == 0:
                pivot_row[:] = tile[kk]
            pool.sync()
            if rows is not None:
                worker.kernel.step(tile[rows], tile[rows, kk], pivot_row,
                                   pc[rows] if pc is not None else None, k_base + kk)
            pool.sync()
        if worker.index == 0:
            tracer.end(worker, k, 1, (k, k))

    pool.run(shared)


def _pivot_line_tasks(k: int, r: int) -> List[Task]:
    """Pivot-row and pivot-column tiles, interleaved."""
    tasks: List[Task] = []
    for x in range(r):
        if x != k:
            tasks.append((2, k, x))
            tasks.append((3, x, k))
    return tasks


def _remaining_tasks(k: int, r: int) -> List[Task]:
    """Remaining tiles ordered so each one follows the pivot-line tiles it needs."""
    others = [x for x in range(r) if x != k]
    rank = {x: pos for pos, x in enumerate(others)}
    cells = [(i, j) for i in others for j in others]
    cells.sort(key=lambda c: (max(rank[c[0]], rank[c[1]]), rank[c[0]], rank[c[1]]))
    return [(4, i, j) for i, j in cells]


def _run_task(worker: Worker, task: Task, k: int, tiled: TiledMatrix, paths: Optional[TiledMatrix],
              tracer: _Tracer, deps: Optional[DependencyTable]) -> None:
    phase, bi, bj = task
    if phase == 4 and deps is not None:
        deps.await_dependencies((bi, bj))

    tracer.start(worker, k, phase, (bi, bj))
    worker.kernel.relax(tiled.tiles[bi][bj], tiled.tiles[bi][k], tiled.tiles[k][bj],
                        paths.tiles[bi][bj] if paths is not None else None, k * tiled.bs)
    tracer.end(worker, k, phase, (bi, bj))

    if deps is not None:
        if phase == 2:
            deps.post_column(k, bj)
        elif phase == 3:
            deps.post_row(bi, k)


def _drain(pool: WorkerPool, queue: Deque[Task], k: int, tiled: TiledMatrix,
           paths: Optional[TiledMatrix], tracer: _Tracer,
           deps: Optional[DependencyTable] = None) -> Callable[[Worker], None]:
    """Job that pulls one tile at a time from the shared FIFO until it is empty."""
    def job(worker: Worker) -> None:
        while not pool.aborted:
            try:
                task = queue.popleft()
            except IndexError:
                return
            _run_task(worker, task, k, tiled, paths, tracer, deps)
    return job


def run_round_barrier(k: int, pool: WorkerPool, tiled: TiledMatrix, cfg: SolveConfig,
                      paths: Optional[TiledMatrix] = None, tracer: Optional[_Tracer] = None) -> None:
    """Round k with a full barrier after the pivot tile, the pivot lines, and the rest."""
    tracer = tracer or _Tracer(None)
    _pivot_phase(k, pool, tiled, paths, tracer)
    pool.run(_drain(pool, deque(_pivot_line_tasks(k, tiled.r)), k, tiled, paths, tracer))
    pool.run(_drain(pool, deque(_remaining_tasks(k, tiled.r)), k, tiled, paths, tracer))


def run_round_depdriven(k: int, pool: WorkerPool, tiled: TiledMatrix, cfg: SolveConfig,
                        deps: DependencyTable, paths: Optional[TiledMatrix] = None,
                        tracer: Optional[_Tracer] = None) -> None:
    """Round k where remaining tiles wait only on their own two pivot-line tiles.

    One FIFO holds the pivot-line tasks ahead of every remaining-tile task, so a
    worker only blocks once no pivot-line task is left to take; the workers
    holding those tasks never block, hence the round always completes.
    """
    tracer = tracer or _Tracer(None)
    _pivot_phase(k, pool, tiled, paths, tracer)
    queue = deque(_pivot_line_tasks(k, tiled.r) + _remaining_tasks(k, tiled.r))
    pool.run(_drain(pool, queue, k, tiled, paths, tracer, deps))


def reset_deps(deps: DependencyTable, k: int) -> None:
    deps.reset(k)


def solve(d: DistanceMatrix, cfg: SolveConfig,
          instrumentation: Optional[Instrumentation] = None) -> Solution:
    """All-pairs shortest distances (and intermediates when `cfg.track_paths`)."""
    if d.n % cfg.bs:
        raise BlockSizeError(d.n, cfg.bs)
    if d.elem_kind is not cfg.elem_kind:
        d = DistanceMatrix(d.data, elem_kind=cfg.elem_kind)

    alignment = Config.TILE_ALIGNMENT if cfg.tier.aligned else 0
    tiled = to_tiled(d, cfg.bs, alignment)
    paths = None
    if cfg.track_paths:
        paths = TiledMatrix.from_array(np.full((d.n, d.n), NONE, dtype=np.int32), cfg.bs, alignment)

    audit = bool(instrumentation and instrumentation.audit)
    deps = make_dependency_table(cfg.sync, tiled.r, audit) if cfg.mode is SchedulerMode.DEP_DRIVEN else None
    tracer = _Tracer(instrumentation)
    seed = instrumentation.seed if instrumentation else 0
    round_hook = instrumentation.round_hook if instrumentation else None
    dtype = d.elem_kind.dtype

    with WorkerPool(cfg.threads, lambda: make_kernel(cfg.tier, cfg.bs, dtype, alignment), seed) as pool:
        if deps is not None:
            pool.on_abort(deps.abort)
        apply_affinity(pool, cfg.affinity, cfg.granularity)

        started = time.perf_counter()
        for k in range(tiled.r):
            if deps is None:
                run_round_barrier(k, pool, tiled, cfg, paths, tracer)
            else:
                reset_deps(deps, k)
                run_round_depdriven(k, pool, tiled, cfg, deps, paths, tracer)
                if audit:
                    deps.check_round_end()
            if round_hook is not None:
                round_hook(k, deps)
            logger.debug(f"round {k + 1}/{tiled.r} done")
        seconds = time.perf_counter() - started

    distances = from_tiled(tiled)
    intermediates = IntermediateMatrix(paths.to_array(), copy=False) if paths is not None else None
    logger.debug(f"Solved n={d.n} bs={cfg.bs} T={cfg.threads} tier={cfg.tier.value} "
                 f"mode={cfg.mode.value} in {seconds:.4f}s")
    return Solution(distances, intermediates, seconds)
