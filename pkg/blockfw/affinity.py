"""Worker-to-CPU placement policies."""

import logging
import os
import threading
from typing import Callable, List, Optional, Set

from .config import Config
from .models import AffinityGranularity, AffinityPolicy

logger = logging.getLogger(__name__)


def affinity_plan(policy: AffinityPolicy, granularity: AffinityGranularity, threads: int,
                  physical: Optional[int] = None, logical: Optional[int] = None,
                  siblings: Callable[[int], Set[int]] = Config.core_siblings) -> List[Optional[Set[int]]]:
    """CPU set for each worker, or None for every worker when the OS decides.

    Scatter puts worker w on physical core (w * physical // threads) mod physical,
    spreading workers across cores. Compact fills consecutive logical CPUs.
    Logical CPU c is assumed to be the first hardware thread of core c, which
    is how Linux numbers CPUs on x86. Core granularity widens each set to all
    hardware threads of that core.
    """
    if policy is AffinityPolicy.NONE:
        return [None] * threads

    physical = physical or Config.physical_cores()
    logical = logical or Config.logical_cores()
    if policy is AffinityPolicy.SCATTER:
        cpus = [(w * physical // threads) % physical for w in range(threads)]
    else:
        cpus = [w % logical for w in range(threads)]

    if granularity is AffinityGranularity.CORE:
        return [siblings(cpu) for cpu in cpus]
    return [{cpu} for cpu in cpus]


def apply_affinity(pool, policy: AffinityPolicy,
                   granularity: AffinityGranularity = AffinityGranularity.FINE) -> AffinityPolicy:
    """Pin each pool worker according to `policy`; returns the policy actually in effect.

    Pinning failures never fail the solve: they are logged and every worker is
    returned to the process-wide CPU mask.
    """
    if policy is AffinityPolicy.NONE:
        return policy

    if not (hasattr(os, "sched_getaffinity") and hasattr(os, "sched_setaffinity")):
        logger.warning(f"Thread pinning is not supported on this platform; ignoring affinity={policy.value}")
        return AffinityPolicy.NONE

    original = os.sched_getaffinity(0)
    plan = affinity_plan(policy, granularity, pool.threads)
    failures: List[str] = []
    lock = threading.Lock()

    def pin(worker) -> None:
        cpus = plan[worker.index]
        try:
            os.sched_setaffinity(0, cpus)
        except OSError as e:
            with lock:
                failures.append(f"worker {worker.index} -> {sorted(cpus)}: {e}")

    pool.run(pin)
    if failures:
        logger.warning(f"Affinity {policy.value} could not be applied ({failures[0]}); using OS placement")
        pool.run(lambda worker: os.sched_setaffinity(0, original))
        return AffinityPolicy.NONE

    logger.debug(f"Applied affinity {policy.value}/{granularity.value}: {plan}")
    return policy
