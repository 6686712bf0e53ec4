"""Blocked Floyd-Warshall all-pairs shortest paths with a multithreaded tile scheduler."""

from .matrix import DistanceMatrix, IntermediateMatrix, generate_graph, read_matrix, write_matrix
from .models import ElemKind, GraphSpec, KernelTier, SchedulerMode, SolveConfig, SyncMechanism
from .reference import fw_classic, reconstruct_path
from .scheduler import Solution, solve

__version__ = "1.0.0"
