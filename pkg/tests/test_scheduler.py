"""Tests for the blocked solver, its worker pool and its schedulers."""

import itertools
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockfw import affinity, scheduler
from blockfw.affinity import affinity_plan, apply_affinity
from blockfw.errors import BlockSizeError
from blockfw.events import EventLog
from blockfw.kernel import TileKernel, make_kernel
from blockfw.matrix import generate_graph
from blockfw.models import (
    AffinityGranularity, AffinityPolicy, ElemKind, GraphSpec, KernelTier, SchedulerMode, SolveConfig,
    SyncMechanism,
)
from blockfw.reference import check_paths, fw_classic
from blockfw.scheduler import Instrumentation, WorkerPool, solve

SCHEDULES = [
    (SchedulerMode.BARRIER, SyncMechanism.SEMAPHORE),
    (SchedulerMode.DEP_DRIVEN, SyncMechanism.SEMAPHORE),
    (SchedulerMode.DEP_DRIVEN, SyncMechanism.CONDVAR),
]


@pytest.fixture(scope="module")
def oracle64():
    d = generate_graph(GraphSpec(n=64, seed=11))
    return d, fw_classic(d)[0]


class TestWorkerPool:
    """Persistent worker threads."""

    def test_runs_job_on_every_worker(self):
        seen = []
        lock = threading.Lock()

        def job(worker):
            with lock:
                seen.append(worker.index)

        with WorkerPool(4, lambda: make_kernel(KernelTier.BASELINE, 4, np.float32)) as pool:
            pool.run(job)
            pool.run(job)
        assert sorted(seen) == [0, 0, 1, 1, 2, 2, 3, 3]

    def test_sync_is_a_barrier(self):
        stamps = []
        lock = threading.Lock()

        def job(worker):
            with lock:
                stamps.append(("before", worker.index))
            worker_pool.sync()
            with lock:
                stamps.append(("after", worker.index))

        with WorkerPool(3, lambda: make_kernel(KernelTier.BASELINE, 4, np.float32)) as worker_pool:
            worker_pool.run(job)
        assert [kind for kind, _ in stamps[:3]] == ["before"] * 3

    def test_failure_propagates(self):
        def job(worker):
            if worker.index == 1:
                raise RuntimeError("boom")
            worker_pool.sync()

        with WorkerPool(3, lambda: make_kernel(KernelTier.BASELINE, 4, np.float32)) as worker_pool:
            with pytest.raises(RuntimeError, match="boom"):
                worker_pool.run(job)
            assert worker_pool.aborted


class TestSolve:
    """Blocked solver against the classic oracle."""

    @pytest.mark.parametrize("mode,sync", SCHEDULES)
    @pytest.mark.parametrize("bs", [8, 16, 32, 64])
    @pytest.mark.parametrize("threads", [1, 2, 4, 8])
    def test_matches_oracle(self, oracle64, mode, sync, bs, threads):
        d, want = oracle64
        cfg = SolveConfig(bs=bs, threads=threads, mode=mode, sync=sync)
        got = solve(d, cfg).distances
        assert got.first_difference(want) is None

    @pytest.mark.parametrize("tier", list(KernelTier))
    def test_every_tier(self, oracle64, tier):
        d, want = oracle64
        assert solve(d, SolveConfig(bs=16, threads=3, tier=tier)).distances.bitwise_equal(want)

    @pytest.mark.parametrize("mode,sync", SCHEDULES)
    @pytest.mark.parametrize("elem_kind", list(ElemKind))
    def test_element_kinds(self, elem_kind, mode, sync):
        d = generate_graph(GraphSpec(n=48, seed=6), elem_kind)
        cfg = SolveConfig(bs=12, threads=4, mode=mode, sync=sync, elem_kind=elem_kind)
        got = solve(d, cfg).distances
        assert got.elem_kind is elem_kind
        assert got.bitwise_equal(fw_classic(d)[0])

    def test_casts_to_configured_kind(self, graph32):
        got = solve(graph32, SolveConfig(bs=8, threads=2, elem_kind=ElemKind.F64)).distances
        assert got.elem_kind is ElemKind.F64

    def test_block_size_must_divide(self, oracle64):
        with pytest.raises(BlockSizeError):
            solve(oracle64[0], SolveConfig(bs=48, threads=2))

    def test_more_threads_than_tiles(self, graph32):
        got = solve(graph32, SolveConfig(bs=16, threads=8, mode=SchedulerMode.DEP_DRIVEN)).distances
        assert got.bitwise_equal(fw_classic(graph32)[0])

    def test_single_vertex(self):
        d = generate_graph(GraphSpec(n=1))
        assert solve(d, SolveConfig(bs=1, threads=2)).distances[0, 0] == 0.0

    def test_input_untouched(self, graph32):
        before = graph32.copy_data()
        solve(graph32, SolveConfig(bs=8, threads=2))
        np.testing.assert_array_equal(graph32.data, before)

    def test_seconds_reported(self, graph32):
        assert solve(graph32, SolveConfig(bs=8, threads=2)).seconds > 0

    @given(r=st.integers(1, 5), bs=st.integers(1, 8), threads=st.integers(1, 5),
           seed=st.integers(0, 2**32 - 1), schedule=st.sampled_from(SCHEDULES),
           null_fraction=st.sampled_from([0.0, 0.3, 0.9]))
    @settings(max_examples=30, deadline=None)
    def test_property(self, r, bs, threads, seed, schedule, null_fraction):
        d = generate_graph(GraphSpec(n=r * bs, seed=seed, null_fraction=null_fraction))
        mode, sync = schedule
        got = solve(d, SolveConfig(bs=bs, threads=threads, mode=mode, sync=sync)).distances
        assert got.bitwise_equal(fw_classic(d)[0])


def _sweep_cases(n):
    block_sizes = [bs for bs in (8, 16, 32, 64, 128) if n % bs == 0]
    if n >= 512:
        block_sizes, thread_counts = [bs for bs in block_sizes if bs >= 64], [1, 8]
    else:
        thread_counts = [1, 2, 4, 8]
    for bs, threads, tier, (mode, sync) in itertools.product(block_sizes, thread_counts, KernelTier, SCHEDULES):
        yield SolveConfig(bs=bs, threads=threads, tier=tier, mode=mode, sync=sync)


@pytest.mark.slow
class TestOracleSweep:
    """Every tier, schedule, block size and thread count against the oracle."""

    @pytest.mark.parametrize("elem_kind", list(ElemKind))
    @pytest.mark.parametrize("n", [16, 64, 128, 512])
    def test_sweep(self, n, elem_kind):
        d = generate_graph(GraphSpec(n=n, seed=n), elem_kind)
        want = fw_classic(d)[0]
        for cfg in _sweep_cases(n):
            cfg = cfg.model_copy(update={"elem_kind": elem_kind})
            got = solve(d, cfg).distances
            assert got.first_difference(want) is None, cfg


class TestPaths:
    """Intermediate matrix maintained by the blocked solver."""

    def test_paths_off_by_default(self, graph32):
        assert solve(graph32, SolveConfig(bs=8, threads=2)).paths is None

    @pytest.mark.parametrize("mode,sync", SCHEDULES)
    def test_paths_reconstruct_distances(self, graph64, mode, sync):
        solution = solve(graph64, SolveConfig(bs=16, threads=4, mode=mode, sync=sync, track_paths=True))
        solution.paths.check_invariants(solution.distances)
        assert check_paths(graph64, solution.distances, solution.paths) is None

    def test_paths_are_deterministic(self, graph64):
        reference = solve(graph64, SolveConfig(bs=16, threads=1, tier=KernelTier.BASELINE, track_paths=True))
        for tier, (mode, sync), threads in itertools.product(KernelTier, SCHEDULES, (2, 4)):
            cfg = SolveConfig(bs=16, threads=threads, tier=tier, mode=mode, sync=sync, track_paths=True)
            solution = solve(graph64, cfg)
            assert solution.paths.bitwise_equal(reference.paths), cfg
            assert solution.distances.bitwise_equal(reference.distances), cfg

    def test_path_tracking_leaves_distances_alone(self, graph64):
        plain = solve(graph64, SolveConfig(bs=16, threads=2)).distances
        tracked = solve(graph64, SolveConfig(bs=16, threads=2, track_paths=True)).distances
        assert plain.bitwise_equal(tracked)


class TestDependencyDriven:
    """Ordering and accounting of the dependency-driven scheduler."""

    @pytest.mark.parametrize("sync", list(SyncMechanism))
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_happens_before_under_delays(self, graph64, sync, seed):
        log = EventLog()
        cfg = SolveConfig(bs=16, threads=4, mode=SchedulerMode.DEP_DRIVEN, sync=sync)
        got = solve(graph64, cfg, Instrumentation(event_log=log, max_delay=0.002, seed=seed)).distances
        assert log.happens_before_violations() == []
        assert got.bitwise_equal(fw_classic(graph64)[0])

    @pytest.mark.slow
    @pytest.mark.parametrize("sync", list(SyncMechanism))
    def test_happens_before_at_scale(self, sync):
        d = generate_graph(GraphSpec(n=256, seed=21))
        want = fw_classic(d)[0]
        cfg = SolveConfig(bs=32, threads=8, mode=SchedulerMode.DEP_DRIVEN, sync=sync)
        early = 0
        for seed in range(100):
            log = EventLog()
            got = solve(d, cfg, Instrumentation(event_log=log, max_delay=0.0005, seed=seed, audit=True)).distances
            assert log.happens_before_violations() == [], seed
            assert got.bitwise_equal(want), seed
            early += log.early_phase4_starts()
        assert early > 0

    def test_event_log_is_complete(self, graph32):
        log = EventLog()
        solve(graph32, SolveConfig(bs=8, threads=2, mode=SchedulerMode.DEP_DRIVEN), Instrumentation(event_log=log))
        # R rounds of R * R tiles, one start and one end each
        assert len(log) == 2 * 4 * 16

    def test_remaining_tiles_start_early(self, graph64):
        early = 0
        for seed in range(5):
            log = EventLog()
            cfg = SolveConfig(bs=8, threads=4, mode=SchedulerMode.DEP_DRIVEN)
            solve(graph64, cfg, Instrumentation(event_log=log, max_delay=0.002, seed=seed))
            early += log.early_phase4_starts()
            if early:
                break
        assert early > 0

    def test_barrier_never_starts_early(self, graph64):
        log = EventLog()
        solve(graph64, SolveConfig(bs=8, threads=4), Instrumentation(event_log=log, max_delay=0.001))
        assert log.early_phase4_starts() == 0
        assert log.happens_before_violations() == []

    @pytest.mark.parametrize("sync", list(SyncMechanism))
    def test_accounting_audit(self, graph64, sync):
        rounds = []

        def hook(k, deps):
            rounds.append((k, deps.posts, deps.waits, deps.expected_operations()))

        cfg = SolveConfig(bs=16, threads=3, mode=SchedulerMode.DEP_DRIVEN, sync=sync)
        solve(graph64, cfg, Instrumentation(audit=True, round_hook=hook))
        assert [k for k, *_ in rounds] == [0, 1, 2, 3]
        assert all(posts == waits == expected == 18 for _, posts, waits, expected in rounds)

    @pytest.mark.slow
    def test_no_deadlock(self):
        d = generate_graph(GraphSpec(n=64, seed=3))
        failures = []

        def stress():
            try:
                for bs, sync in itertools.product((4, 8, 16, 32), SyncMechanism):
                    r = 64 // bs
                    for threads in sorted({1, 3, 7, min(2 * r * r, 64)}):
                        cfg = SolveConfig(bs=bs, threads=threads, mode=SchedulerMode.DEP_DRIVEN, sync=sync)
                        solve(d, cfg, Instrumentation(max_delay=0.0005))
            except Exception as e:
                failures.append(e)

        thread = threading.Thread(target=stress, daemon=True)
        thread.start()
        thread.join(timeout=300)
        assert not thread.is_alive(), "dependency-driven solve did not finish"
        assert failures == []


class ExplodingKernel(TileKernel):
    def relax(self, c, a, b, pc=None, k_base=0):
        raise RuntimeError("kernel failure")


class TestFailure:
    """A failing worker aborts the solve instead of hanging it."""

    @pytest.mark.parametrize("mode,sync", SCHEDULES)
    def test_kernel_failure_is_raised(self, monkeypatch, graph32, mode, sync):
        monkeypatch.setattr(scheduler, "make_kernel", lambda tier, bs, dtype, alignment: ExplodingKernel(bs, dtype))
        result = []

        def run():
            try:
                solve(graph32, SolveConfig(bs=8, threads=3, mode=mode, sync=sync))
            except RuntimeError as e:
                result.append(e)

        thread = threading.Thread(target=run, daemon=True)
        thread.start()
        thread.join(timeout=30)
        assert not thread.is_alive()
        assert len(result) == 1 and "kernel failure" in str(result[0])


class TestAffinity:
    """Worker placement."""

    def test_none(self):
        assert affinity_plan(AffinityPolicy.NONE, AffinityGranularity.FINE, 3) == [None, None, None]

    def test_scatter_spreads_across_cores(self):
        plan = affinity_plan(AffinityPolicy.SCATTER, AffinityGranularity.FINE, 4, physical=8, logical=16)
        assert plan == [{0}, {2}, {4}, {6}]

    def test_scatter_oversubscribed(self):
        plan = affinity_plan(AffinityPolicy.SCATTER, AffinityGranularity.FINE, 16, physical=8, logical=16)
        assert plan == [{w // 2} for w in range(16)]

    def test_compact_fills_consecutive_cpus(self):
        plan = affinity_plan(AffinityPolicy.COMPACT, AffinityGranularity.FINE, 4, physical=8, logical=16)
        assert plan == [{0}, {1}, {2}, {3}]

    def test_compact_wraps(self):
        plan = affinity_plan(AffinityPolicy.COMPACT, AffinityGranularity.FINE, 10, physical=4, logical=8)
        assert plan[8] == {0} and plan[9] == {1}

    def test_core_granularity(self):
        plan = affinity_plan(AffinityPolicy.SCATTER, AffinityGranularity.CORE, 2, physical=4, logical=8,
                             siblings=lambda cpu: {cpu, cpu + 4})
        assert plan == [{0, 4}, {2, 6}]

    def test_pinning_failure_degrades(self, monkeypatch, caplog):
        original = {0}
        restored = []

        def fake_set(pid, cpus):
            if cpus is original:
                restored.append(pid)
                return
            raise OSError("not permitted")

        monkeypatch.setattr(affinity.os, "sched_getaffinity", lambda pid: original, raising=False)
        monkeypatch.setattr(affinity.os, "sched_setaffinity", fake_set, raising=False)
        with WorkerPool(2, lambda: make_kernel(KernelTier.BASELINE, 4, np.float32)) as pool:
            effective = apply_affinity(pool, AffinityPolicy.SCATTER)
        assert effective is AffinityPolicy.NONE
        assert len(restored) == 2
        assert "could not be applied" in caplog.text

    @pytest.mark.parametrize("policy", [AffinityPolicy.SCATTER, AffinityPolicy.COMPACT])
    def test_solve_with_affinity(self, graph32, policy):
        got = solve(graph32, SolveConfig(bs=8, threads=2, affinity=policy)).distances
        assert got.bitwise_equal(fw_classic(graph32)[0])
