"""Configuration management for the solver and benchmark harness."""

import logging
import os
from functools import lru_cache
from pathlib import Path

logger = logging.getLogger(__name__)

_SYSFS_CPU = Path("/sys/devices/system/cpu")


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() in ("1", "true", "yes")


class Config:
    """Process-wide defaults, overridable through the environment."""

    # Logging
    LOG_LEVEL: str = os.getenv("BLOCKFW_LOG_LEVEL", "INFO").upper()

    # Worker threads per solve - defaults to the logical core count
    THREADS: int = int(os.getenv("BLOCKFW_THREADS", str(os.cpu_count() or 1)))

    # Tile buffer alignment in bytes (one cache line)
    TILE_ALIGNMENT: int = int(os.getenv("BLOCKFW_TILE_ALIGNMENT", "64"))

    # Benchmark protocol
    BENCH_REPS: int = int(os.getenv("BLOCKFW_BENCH_REPS", "8"))
    BENCH_WARMUP: bool = _env_bool("BLOCKFW_BENCH_WARMUP", "true")

    # Largest n for which bench runs the O(n^3) single-threaded oracle
    VERIFY_CAP: int = int(os.getenv("BLOCKFW_VERIFY_CAP", "1024"))

    # Pairs checked by `verify` when validating paths of a large matrix
    PATH_CHECK_PAIRS: int = int(os.getenv("BLOCKFW_PATH_CHECK_PAIRS", "65536"))

    @classmethod
    def validate(cls) -> None:
        """Validate configuration and raise errors for nonsensical values."""
        logger.debug(f"LOG_LEVEL={cls.LOG_LEVEL} THREADS={cls.THREADS} "
                     f"TILE_ALIGNMENT={cls.TILE_ALIGNMENT} BENCH_REPS={cls.BENCH_REPS} "
                     f"VERIFY_CAP={cls.VERIFY_CAP}")

        if not isinstance(logging.getLevelName(cls.LOG_LEVEL), int):
            raise ValueError(f"Unknown log level: {cls.LOG_LEVEL}")

        if cls.THREADS < 1:
            raise ValueError(f"BLOCKFW_THREADS must be >= 1, got {cls.THREADS}")

        alignment = cls.TILE_ALIGNMENT
        if alignment < 1 or alignment & (alignment - 1):
            raise ValueError(f"BLOCKFW_TILE_ALIGNMENT must be a power of two, got {alignment}")

        if cls.BENCH_REPS < 1:
            raise ValueError(f"BLOCKFW_BENCH_REPS must be >= 1, got {cls.BENCH_REPS}")

        if cls.VERIFY_CAP < 0 or cls.PATH_CHECK_PAIRS < 1:
            raise ValueError("BLOCKFW_VERIFY_CAP and BLOCKFW_PATH_CHECK_PAIRS must be positive")

    @classmethod
    def logical_cores(cls) -> int:
        """Number of logical processors visible to the process."""
        return os.cpu_count() or 1

    @classmethod
    def physical_cores(cls) -> int:
        """Number of physical cores, read from sysfs; falls back to the logical count."""
        return _physical_core_count() or cls.logical_cores()

    @classmethod
    def core_siblings(cls, cpu: int) -> set[int]:
        """Logical CPUs sharing a physical core with `cpu` (including `cpu` itself)."""
        path = _SYSFS_CPU / f"cpu{cpu}" / "topology" / "thread_siblings_list"
        try:
            return _parse_cpu_list(path.read_text())
        except OSError:
            return {cpu}


@lru_cache(maxsize=1)
def _physical_core_count() -> int:
    cores = set()
    for topology in _SYSFS_CPU.glob("cpu[0-9]*/topology"):
        try:
            package = (topology / "physical_package_id").read_text().strip()
            core = (topology / "core_id").read_text().strip()
        except OSError:
            continue
        cores.add((package, core))
    return len(cores)


def _parse_cpu_list(text: str) -> set[int]:
    """Parse the kernel's cpu list syntax, e.g. ``0-1,6``."""
    cpus: set[int] = set()
    for part in text.strip().split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-")
            cpus.update(range(int(lo), int(hi) + 1))
        else:
            cpus.add(int(part))
    return cpus
