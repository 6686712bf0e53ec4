"""BS x BS min-plus tile relaxation and its optimization tiers.

Every phase of a blocked round calls the same primitive with different
aliasing: the pivot tile has c = a = b, a pivot-row tile has c = b, a
pivot-column tile has c = a, and the remaining tiles alias nothing. For each
pivot index k (ascending, one at a time) the candidate a[:, k] + b[k, :] is
fully formed before c is written, so aliased calls are well defined.

Tiers differ only in how a step is expressed; they perform the same
additions and comparisons on the same operands in the same order, so their
results are bitwise identical.
"""

import logging
from typing import Dict, Optional, Type

import numpy as np

from .matrix import NONE, aligned_empty
from .models import ElemKind, KernelTier, TileMismatch, VariantReport

logger = logging.getLogger(__name__)


class TileKernel:
    """Baseline: one row of the tile at a time, guarded store on improvement."""

    tier = KernelTier.BASELINE

    def __init__(self, bs: int, dtype, alignment: Optional[int] = None):
        self.bs = bs
        self.dtype = np.dtype(dtype)
        self.alignment = alignment

    def relax(self, c: np.ndarray, a: np.ndarray, b: np.ndarray,
              pc: Optional[np.ndarray] = None, k_base: int = 0) -> None:
        """c <- min(c, a (min,+) b), one pivot index at a time; pc records improving k."""
        assert c.shape == a.shape == b.shape == (self.bs, self.bs), "tile shape mismatch"
        for k in range(self.bs):
            self.step(c, a[:, k], b[k], pc, k_base + k)

    def step(self, c: np.ndarray, a_col: np.ndarray, b_row: np.ndarray,
             pc: Optional[np.ndarray], k_global: int) -> None:
        """Relax the rows of `c` through one pivot.

        `c` may be a row range of a tile; `a_col` holds the matching entries of
        column k and `b_row` row k.
        """
        a_col = a_col.copy()
        b_row = b_row.copy()
        for i in range(c.shape[0]):
            row = c[i]
            candidate = a_col[i] + b_row
            better = candidate < row
            if better.any():
                row[better] = candidate[better]
                if pc is not None:
                    pc[i][better] = k_global


class VectorizedKernel(TileKernel):
    """Whole-tile outer sum per pivot; branch-free min when paths are off."""

    tier = KernelTier.VECTORIZED

    def step(self, c, a_col, b_row, pc, k_global):
        candidate = np.add.outer(a_col, b_row)
        if pc is None:
            np.minimum(c, candidate, out=c)
            return
        better = candidate < c
        np.copyto(c, candidate, where=better)
        pc[better] = k_global


class AlignedKernel(VectorizedKernel):
    """Candidate and mask live in preallocated aligned scratch buffers."""

    tier = KernelTier.VECTORIZED_ALIGNED

    def __init__(self, bs, dtype, alignment=None):
        super().__init__(bs, dtype, alignment)
        self._candidate = aligned_empty((bs, bs), self.dtype, alignment)
        self._mask = aligned_empty((bs, bs), np.bool_, alignment)

    def _fill_candidate(self, c, a_col, b_row):
        m = c.shape[0]
        candidate = self._candidate[:m]
        np.add(a_col[:, None], b_row[None, :], out=candidate)
        return candidate, self._mask[:m]

    def step(self, c, a_col, b_row, pc, k_global):
        candidate, mask = self._fill_candidate(c, a_col, b_row)
        if pc is None:
            np.minimum(c, candidate, out=c)
            return
        np.less(candidate, c, out=mask)
        np.copyto(c, candidate, where=mask)
        pc[mask] = k_global


class BranchHintedKernel(AlignedKernel):
    """Improvement treated as the unlikely branch.

    A pivot whose column or row is entirely infinite cannot improve anything
    and is skipped; the path store is taken only when some cell improved.
    """

    tier = KernelTier.BRANCH_HINTED

    @staticmethod
    def _dead(vector: np.ndarray) -> bool:
        return bool(np.isposinf(vector).all())

    def step(self, c, a_col, b_row, pc, k_global):
        if self._dead(a_col) or self._dead(b_row):
            return
        candidate, mask = self._fill_candidate(c, a_col, b_row)
        if pc is None:
            np.minimum(c, candidate, out=c)
            return
        np.less(candidate, c, out=mask)
        if mask.any():
            np.copyto(c, candidate, where=mask)
            pc[mask] = k_global


class UnrolledKernel(BranchHintedKernel):
    """Pivot loop unrolled by two; dead-pivot tests hoisted out of unaliased tiles.

    When c shares no memory with a or b (the remaining-tile phase) the dead
    pivots are known before the loop starts and are dropped from it.
    """

    tier = KernelTier.UNROLLED

    def relax(self, c, a, b, pc=None, k_base=0):
        assert c.shape == a.shape == b.shape == (self.bs, self.bs), "tile shape mismatch"
        bs = self.bs
        if np.may_share_memory(c, a) or np.may_share_memory(c, b):
            step = super().step
            for k in range(0, bs - 1, 2):
                step(c, a[:, k], b[k], pc, k_base + k)
                step(c, a[:, k + 1], b[k + 1], pc, k_base + k + 1)
            if bs % 2:
                step(c, a[:, bs - 1], b[bs - 1], pc, k_base + bs - 1)
            return

        live = np.flatnonzero(~(np.isposinf(a).all(axis=0) | np.isposinf(b).all(axis=1)))
        step = self._live_step
        count = live.size
        for idx in range(0, count - 1, 2):
            k0 = int(live[idx])
            k1 = int(live[idx + 1])
            step(c, a[:, k0], b[k0], pc, k_base + k0)
            step(c, a[:, k1], b[k1], pc, k_base + k1)
        if count % 2:
            k = int(live[-1])
            step(c, a[:, k], b[k], pc, k_base + k)

    def _live_step(self, c, a_col, b_row, pc, k_global):
        candidate, mask = self._fill_candidate(c, a_col, b_row)
        if pc is None:
            np.minimum(c, candidate, out=c)
            return
        np.less(candidate, c, out=mask)
        if mask.any():
            np.copyto(c, candidate, where=mask)
            pc[mask] = k_global


_KERNELS: Dict[KernelTier, Type[TileKernel]] = {
    KernelTier.BASELINE: TileKernel,
    KernelTier.VECTORIZED: VectorizedKernel,
    KernelTier.VECTORIZED_ALIGNED: AlignedKernel,
    KernelTier.BRANCH_HINTED: BranchHintedKernel,
    KernelTier.UNROLLED: UnrolledKernel,
}


def make_kernel(tier: KernelTier, bs: int, dtype, alignment: Optional[int] = None) -> TileKernel:
    """Kernel instance for one worker; aligned tiers own their scratch buffers."""
    return _KERNELS[tier](bs, dtype, alignment)


def tile_relax(c: np.ndarray, a: np.ndarray, b: np.ndarray, pc: Optional[np.ndarray] = None,
               k_global_base: int = 0, tier: KernelTier = KernelTier.UNROLLED,
               alignment: Optional[int] = None) -> None:
    """Relax tile c through tiles a (D^{I,K}) and b (D^{K,J}) in place."""
    make_kernel(tier, c.shape[0], c.dtype, alignment).relax(c, a, b, pc, k_global_base)


_ALIASINGS = ("none", "pivot", "row", "column")


def _random_tile(rng: np.random.Generator, bs: int, dtype, null_fraction: float,
                 weight_max: float) -> np.ndarray:
    tile = rng.uniform(0.0, weight_max, size=(bs, bs))
    tile[rng.random((bs, bs)) < null_fraction] = np.inf
    return tile.astype(dtype)


def tile_relax_variant_check(tier: KernelTier, trials: int = 1000, bs: int = 32,
                             elem_kind: ElemKind = ElemKind.F32, seed: int = 0,
                             null_fraction: float = 0.3, weight_max: float = 100.0,
                             aliasing: Optional[str] = None) -> VariantReport:
    """Differential test of `tier` against the baseline on random tiles.

    Trials cycle through the four aliasing patterns unless `aliasing` pins one.
    Distances and path tiles must agree bit for bit.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    dtype = elem_kind.dtype
    baseline = make_kernel(KernelTier.BASELINE, bs, dtype)
    candidate = make_kernel(tier, bs, dtype, 64)
    report = VariantReport(tier=tier, bs=bs, elem_kind=elem_kind, trials=trials)

    for trial in range(trials):
        pattern = aliasing or _ALIASINGS[trial % len(_ALIASINGS)]
        tiles = [_random_tile(rng, bs, dtype, null_fraction, weight_max) for _ in range(3)]
        k_base = int(rng.integers(0, 1 << 20)) * bs

        results = []
        for kernel in (baseline, candidate):
            c, a, b = (t.copy() for t in tiles)
            if pattern == "pivot":
                a = b = c
            elif pattern == "row":
                b = c
            elif pattern == "column":
                a = c
            pc = np.full((bs, bs), NONE, dtype=np.int32)
            kernel.relax(c, a, b, pc, k_base)
            results.append((c, pc))

        (want_c, want_p), (got_c, got_p) = results
        for field, want, got in (("distance", want_c, got_c), ("path", want_p, got_p)):
            if want.dtype.kind == "f":
                differs = want.view(f"u{want.itemsize}") != got.view(f"u{got.itemsize}")
            else:
                differs = want != got
            if differs.any():
                i, j = (int(x) for x in np.argwhere(differs)[0])
                report.mismatch = TileMismatch(trial=trial, aliasing=pattern, cell=(i, j), field=field,
                                               expected=float(want[i, j]), actual=float(got[i, j]))
                logger.error(f"Tier {tier.value} disagrees with baseline: {report.mismatch}")
                return report

    logger.debug(f"Tier {tier.value}: {trials} trials clean (bs={bs}, {elem_kind.value})")
    return report


def vector_width_report() -> str:
    """Widest SIMD extension numpy's dispatcher reports for this CPU (report field only)."""
    try:
        from numpy._core._multiarray_umath import __cpu_features__ as features
    except ImportError:
        try:
            from numpy.core._multiarray_umath import __cpu_features__ as features
        except ImportError:
            return "unknown"
    for name, width in (("AVX512F", "512"), ("AVX2", "256"), ("AVX", "256"), ("SSE2", "128"),
                        ("ASIMD", "128"), ("NEON", "128")):
        if features.get(name):
            return f"{name}/{width}"
    return "scalar"
