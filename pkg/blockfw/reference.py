"""Classic Floyd-Warshall oracle, path reconstruction and validation helpers.

Nothing here is tuned for speed; every other solver is checked against it.
"""

import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CorruptPathMatrix, InvalidPath
from .matrix import NONE, DistanceMatrix, IntermediateMatrix

logger = logging.getLogger(__name__)


def fw_classic(d: DistanceMatrix) -> Tuple[DistanceMatrix, IntermediateMatrix]:
    """All-pairs closure with the k-i-j loop order.

    For each k the whole i-j sweep is evaluated as one array expression: the
    candidate D[i][k] + D[k][j] is formed for every cell before any cell is
    written. Row k and column k cannot change at step k while D[k][k] >= 0, so
    this matches the in-place scalar loop. A step whose D[k][k] is negative
    (k lies on a negative cycle) runs the scalar loop itself. A cell is
    rewritten, and P[i][j] set to k, only on strict improvement.
    """
    dist = d.copy_data()
    paths = np.full(dist.shape, NONE, dtype=np.int32)
    for k in range(d.n):
        if dist[k, k] < 0:
            _relax_in_place(dist, paths, k)
            continue
        candidate = np.add.outer(dist[:, k], dist[k, :])
        improved = candidate < dist
        dist[improved] = candidate[improved]
        paths[improved] = k
    return DistanceMatrix(dist, copy=False), IntermediateMatrix(paths, copy=False)


def _relax_in_place(dist: np.ndarray, paths: np.ndarray, k: int) -> None:
    n = dist.shape[0]
    for i in range(n):
        for j in range(n):
            candidate = dist[i, k] + dist[k, j]
            if candidate < dist[i, j]:
                dist[i, j] = candidate
                paths[i, j] = k


def bellman_ford(d: DistanceMatrix) -> DistanceMatrix:
    """All-pairs distances from one Bellman-Ford run per source.

    Independent of any Floyd-Warshall code path; used to cross-check the oracle.
    Sources whose relaxation has not converged after n - 1 passes (negative
    cycles) keep their last estimate.
    """
    w = d.data
    n = d.n
    out = np.empty_like(w)
    for source in range(n):
        dist = w[source].copy()
        dist[source] = min(dist[source], w.dtype.type(0))
        for _ in range(n - 1):
            relaxed = np.min(dist[:, None] + w, axis=0)
            updated = np.minimum(dist, relaxed)
            if np.array_equal(updated, dist):
                break
            dist = updated
        out[source] = dist
    return DistanceMatrix(out, copy=False)


def reconstruct_path(p: IntermediateMatrix, dstar: DistanceMatrix, i: int, j: int) -> List[int]:
    """Vertex sequence i..j expanded through the intermediate matrix; [] if unreachable."""
    n = p.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"vertex pair ({i}, {j}) out of range for n={n}")
    if i == j:
        return [i]
    if math.isinf(dstar[i, j]):
        return []

    path = [i]
    stack = [(i, j)]
    budget = n * n
    while stack:
        u, v = stack.pop()
        k = int(p.data[u, v])
        if k == NONE:
            path.append(v)
            if len(path) > n:
                raise CorruptPathMatrix(f"path {i}->{j} revisits a vertex after {len(path)} hops")
            continue
        budget -= 1
        if budget < 0 or k in (u, v):
            raise CorruptPathMatrix(f"expansion of {i}->{j} does not terminate at ({u}, {v}) via {k}")
        stack.append((k, v))
        stack.append((u, k))
    return path


def path_cost(d0: DistanceMatrix, path: Sequence[int]) -> float:
    """Sum of edge weights along `path`, accumulated in the matrix's element kind."""
    if not path:
        return math.inf
    w = d0.data
    total = w.dtype.type(0)
    for u, v in zip(path, path[1:]):
        weight = w[u, v]
        if u == v or np.isinf(weight):
            raise InvalidPath(f"hop {u}->{v} is not an edge")
        total = total + weight
    return float(total)


def has_negative_cycle(dstar: DistanceMatrix) -> bool:
    """True iff some vertex reaches itself at negative cost after closure."""
    return bool((np.diagonal(dstar.data) < 0).any())


def check_paths(d0: DistanceMatrix, dstar: DistanceMatrix, p: IntermediateMatrix,
                pairs: Optional[Iterable[Tuple[int, int]]] = None,
                rtol: float = 0.0) -> Optional[Tuple[int, int, float, float]]:
    """First pair whose reconstructed path cost disagrees with the closure, or None.

    Returns (i, j, expected, actual). Unreachable pairs must expand to [].
    """
    if pairs is None:
        pairs = ((i, j) for i in range(d0.n) for j in range(d0.n))
    for i, j in pairs:
        expected = dstar[i, j]
        path = reconstruct_path(p, dstar, i, j)
        if math.isinf(expected):
            if path:
                return i, j, expected, path_cost(d0, path)
            continue
        if path[0] != i or path[-1] != j:
            return i, j, expected, math.nan
        actual = path_cost(d0, path)
        if rtol == 0.0:
            if actual != expected:
                return i, j, expected, actual
        elif not math.isclose(actual, expected, rel_tol=rtol, abs_tol=rtol):
            return i, j, expected, actual
    return None
