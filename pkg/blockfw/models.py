"""Pydantic models and enumerations shared across the package."""

import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from .config import Config


class ElemKind(str, Enum):
    """Element kind of a distance matrix."""
    F32 = "f32"
    F64 = "f64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<f4") if self is ElemKind.F32 else np.dtype("<f8")

    @classmethod
    def from_dtype(cls, dtype) -> "ElemKind":
        dtype = np.dtype(dtype)
        if dtype == np.float32:
            return cls.F32
        if dtype == np.float64:
            return cls.F64
        raise ValueError(f"Unsupported element dtype: {dtype}")


class KernelTier(str, Enum):
    """Ordered ladder of tile kernel variants; each includes the previous ones."""
    BASELINE = "baseline"
    VECTORIZED = "vectorized"
    VECTORIZED_ALIGNED = "vectorized-aligned"
    BRANCH_HINTED = "branch-hinted"
    UNROLLED = "unrolled"

    @property
    def rank(self) -> int:
        return list(KernelTier).index(self)

    @property
    def aligned(self) -> bool:
        """Whether tiles and scratch buffers use aligned allocation."""
        return self.rank >= KernelTier.VECTORIZED_ALIGNED.rank


class SchedulerMode(str, Enum):
    """How the phases of a round are ordered across workers."""
    BARRIER = "barrier"
    DEP_DRIVEN = "depdriven"


class SyncMechanism(str, Enum):
    """Per-block synchronization used by the dependency-driven scheduler."""
    SEMAPHORE = "semaphore"
    CONDVAR = "condvar"


class AffinityPolicy(str, Enum):
    """Worker placement policy."""
    NONE = "none"
    SCATTER = "scatter"
    COMPACT = "compact"


class AffinityGranularity(str, Enum):
    """Pin a worker to one logical CPU (fine) or to every thread of its core (core)."""
    FINE = "fine"
    CORE = "core"


class GraphSpec(BaseModel):
    """Parameters of a random dense graph."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    n: int = Field(..., gt=0, description="Vertex count")
    null_fraction: float = Field(0.30, ge=0.0, le=1.0,
                                 description="Probability that an ordered pair (i != j) has no edge")
    weight_min: float = Field(1.0, ge=0.0, description="Smallest edge weight")
    weight_max: float = Field(100.0, ge=0.0, description="Largest edge weight")
    seed: int = Field(42, ge=0, lt=2**64, description="PRNG seed")
    integral: bool = Field(True, description="Draw integer-valued weights when the range holds an integer")

    @model_validator(mode="after")
    def _check_weight_range(self) -> "GraphSpec":
        if self.weight_min > self.weight_max:
            raise ValueError(f"weight_min ({self.weight_min}) must not exceed weight_max ({self.weight_max})")
        return self

    @property
    def draws_integers(self) -> bool:
        """Integer draws are used only when [weight_min, weight_max] contains an integer."""
        return self.integral and math.ceil(self.weight_min) <= math.floor(self.weight_max)


class SolveConfig(BaseModel):
    """One solver configuration."""
    model_config = ConfigDict(frozen=True)

    bs: int = Field(..., gt=0, description="Tile side BS")
    threads: int = Field(default_factory=lambda: Config.THREADS, ge=1, description="Worker count T")
    tier: KernelTier = Field(KernelTier.UNROLLED, description="Kernel tier")
    mode: SchedulerMode = Field(SchedulerMode.BARRIER, description="Round scheduler")
    sync: SyncMechanism = Field(SyncMechanism.SEMAPHORE,
                                description="Dependency synchronization (dependency-driven mode only)")
    affinity: AffinityPolicy = Field(AffinityPolicy.NONE, description="Worker placement policy")
    granularity: AffinityGranularity = Field(AffinityGranularity.FINE, description="Placement granularity")
    track_paths: bool = Field(False, description="Maintain the intermediate matrix")
    elem_kind: ElemKind = Field(ElemKind.F32, description="Element kind")

    @property
    def variant(self) -> str:
        """Short label naming the optimization step this config represents."""
        label = self.tier.value
        if self.affinity is not AffinityPolicy.NONE:
            label += f"+{self.affinity.value}"
        if self.mode is SchedulerMode.DEP_DRIVEN:
            label += f"+{self.mode.value}-{self.sync.value}"
        return label


class BenchPlan(BaseModel):
    """A sweep: one graph family, its sizes, and the configs to run on each."""
    graph: GraphSpec
    sizes: List[int] = Field(default_factory=list, description="Vertex counts; empty means graph.n only")
    configs: List[SolveConfig] = Field(..., min_length=1)
    reps: int = Field(default_factory=lambda: Config.BENCH_REPS, ge=1)


class BenchRecord(BaseModel):
    """One measured configuration."""
    n: int
    bs: int
    threads: int
    tier: KernelTier
    mode: SchedulerMode
    sync: SyncMechanism
    elem_kind: ElemKind
    affinity: AffinityPolicy
    granularity: AffinityGranularity
    track_paths: bool
    repetitions: List[float] = Field(..., description="Wall-clock seconds per timed run")
    mean_seconds: float
    gflops: float
    verified: Optional[bool] = Field(None, description="Oracle check result; None above the verification cap")
    speedup_vs_barrier: Optional[float] = Field(
        None, description="GFLOPS ratio against the matching barrier-mode record")
    null_fraction: float
    weight_min: float
    weight_max: float
    seed: int
    hostname: str
    physical_cores: int
    logical_cores: int
    vector_width: str

    @computed_field
    @property
    def variant(self) -> str:
        return self.config().variant

    def config(self) -> SolveConfig:
        return SolveConfig(bs=self.bs, threads=self.threads, tier=self.tier, mode=self.mode,
                           sync=self.sync, affinity=self.affinity, granularity=self.granularity,
                           track_paths=self.track_paths, elem_kind=self.elem_kind)


class TileMismatch(BaseModel):
    """First disagreement found by the kernel differential tester."""
    trial: int
    aliasing: str
    cell: Tuple[int, int]
    field: str = Field(..., description="'distance' or 'path'")
    expected: float
    actual: float


class VariantReport(BaseModel):
    """Outcome of comparing one kernel tier against the baseline."""
    tier: KernelTier
    bs: int
    elem_kind: ElemKind
    trials: int
    mismatch: Optional[TileMismatch] = None

    @property
    def clean(self) -> bool:
        return self.mismatch is None
