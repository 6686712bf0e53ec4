"""Matrix representations, random graph generation, tiling and file I/O."""

import logging
import math
import struct
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .config import Config
from .errors import (
    BlockSizeError, DimensionMismatch, ElementKindMismatch, MalformedInput, TruncatedInput,
)
from .models import ElemKind, GraphSpec

logger = logging.getLogger(__name__)

INF = math.inf

# Sentinel stored in an intermediate matrix for "direct edge or unreachable".
NONE = -1

PathLike = Union[str, Path]

_MAGIC = b"BFWM"
_VERSION = 1
_HEADER = struct.Struct("<4sHHQ")  # magic, version, kind code, n
_KIND_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i4")}
_CODE_OF_KIND = {(dtype.kind, dtype.itemsize): code for code, dtype in _KIND_CODES.items()}

_UINT_VIEW = {4: np.uint32, 8: np.uint64}


def _bits(arr: np.ndarray) -> np.ndarray:
    return arr.view(_UINT_VIEW[arr.dtype.itemsize])


def aligned_empty(shape, dtype, alignment: Optional[int] = None) -> np.ndarray:
    """Allocate an uninitialized array whose first element sits on an `alignment`-byte boundary."""
    dtype = np.dtype(dtype)
    if not alignment:
        return np.empty(shape, dtype=dtype)
    nbytes = int(np.prod(shape)) * dtype.itemsize
    raw = np.empty(nbytes + alignment, dtype=np.uint8)
    offset = (-raw.ctypes.data) % alignment
    return raw[offset:offset + nbytes].view(dtype).reshape(shape)


class DistanceMatrix:
    """Dense n x n distance matrix; infinity marks a missing edge.

    The wrapped array is read-only, so instances can be shared across threads.
    """

    __slots__ = ("_data",)

    def __init__(self, data, elem_kind: Optional[ElemKind] = None, copy: bool = True):
        arr = np.array(data) if copy else np.asarray(data)
        if elem_kind is not None:
            arr = arr.astype(elem_kind.dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            raise ValueError(f"Distance matrix must hold f32 or f64 values, got {arr.dtype}")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise ValueError(f"Distance matrix must be square and non-empty, got shape {arr.shape}")
        if np.isnan(arr).any():
            raise ValueError("Distance matrix contains NaN")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self._data = arr

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def elem_kind(self) -> ElemKind:
        return ElemKind.from_dtype(self._data.dtype)

    @property
    def data(self) -> np.ndarray:
        """Read-only row-major view."""
        return self._data

    def copy_data(self) -> np.ndarray:
        """Writable row-major copy."""
        return self._data.copy()

    def __getitem__(self, cell: Tuple[int, int]) -> float:
        return float(self._data[cell])

    def __repr__(self) -> str:
        return f"DistanceMatrix(n={self.n}, elem_kind={self.elem_kind.value})"

    def bitwise_equal(self, other: "DistanceMatrix") -> bool:
        if self._data.dtype != other._data.dtype or self._data.shape != other._data.shape:
            return False
        return bool(np.array_equal(_bits(self._data), _bits(other._data)))

    def first_difference(self, other: "DistanceMatrix") -> Optional[Tuple[int, int]]:
        """Row-major first cell whose bits differ, or None. Shapes and kinds must agree."""
        if self._data.shape != other._data.shape:
            raise DimensionMismatch(f"n={self.n} vs n={other.n}")
        if self._data.dtype != other._data.dtype:
            raise ElementKindMismatch(f"{self.elem_kind.value} vs {other.elem_kind.value}")
        diff = np.argwhere(_bits(self._data) != _bits(other._data))
        if diff.size == 0:
            return None
        return int(diff[0][0]), int(diff[0][1])

    def infinite_fraction(self) -> float:
        """Fraction of off-diagonal cells that are infinite."""
        if self.n == 1:
            return 0.0
        off_diagonal = ~np.eye(self.n, dtype=bool)
        return float(np.isposinf(self._data[off_diagonal]).mean())

    def check_invariants(self, allow_negative: bool = False) -> None:
        """Raise ValueError unless the diagonal is 0 and off-diagonal cells are weights or +inf."""
        if np.any(np.diagonal(self._data) != 0):
            raise ValueError("diagonal entries must be exactly 0")
        if np.isneginf(self._data).any():
            raise ValueError("negative infinity is not a valid distance")
        if not allow_negative and (self._data < 0).any():
            raise ValueError("negative weights present")


class IntermediateMatrix:
    """n x n matrix of the last improving intermediate vertex per pair (NONE if none)."""

    __slots__ = ("_data",)

    def __init__(self, data, copy: bool = True):
        arr = np.array(data, dtype=np.int32) if copy else np.asarray(data, dtype=np.int32)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise ValueError(f"Intermediate matrix must be square and non-empty, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def empty(cls, n: int) -> "IntermediateMatrix":
        return cls(np.full((n, n), NONE, dtype=np.int32), copy=False)

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self._data

    def get(self, i: int, j: int) -> Optional[int]:
        k = int(self._data[i, j])
        return None if k == NONE else k

    def bitwise_equal(self, other: "IntermediateMatrix") -> bool:
        return bool(np.array_equal(self._data, other._data))

    def check_invariants(self, dstar: DistanceMatrix) -> None:
        """Raise ValueError if an entry is out of range, names an endpoint, or sits on an unreachable pair."""
        p = self._data
        n = self.n
        if p.shape != dstar.data.shape:
            raise ValueError("intermediate and distance matrices differ in shape")
        if ((p < NONE) | (p >= n)).any():
            raise ValueError("intermediate vertex out of range")
        rows, cols = np.indices(p.shape)
        if ((p == rows) | (p == cols)).any():
            raise ValueError("intermediate vertex equals an endpoint")
        if (np.isposinf(dstar.data) & (p != NONE)).any():
            raise ValueError("intermediate recorded for an unreachable pair")

    def __repr__(self) -> str:
        return f"IntermediateMatrix(n={self.n})"


class TiledMatrix:
    """Block-major copy of an n x n matrix: R x R contiguous BS x BS tiles.

    Tile buffers start on `alignment`-byte boundaries inside one backing buffer;
    `alignment=None` lays tiles out back to back with numpy's default allocation.
    """

    def __init__(self, n: int, bs: int, dtype, alignment: Optional[int] = None):
        if bs <= 0 or n % bs:
            raise BlockSizeError(n, bs)
        self.n = n
        self.bs = bs
        self.r = n // bs
        self.dtype = np.dtype(dtype)
        self.alignment = alignment

        tile_bytes = bs * bs * self.dtype.itemsize
        stride_bytes = -(-tile_bytes // alignment) * alignment if alignment else tile_bytes
        stride = stride_bytes // self.dtype.itemsize
        self._buffer = aligned_empty((self.r * self.r * stride,), self.dtype, alignment)
        self.tiles: List[List[np.ndarray]] = [
            [
                self._buffer[(bi * self.r + bj) * stride:(bi * self.r + bj) * stride + bs * bs].reshape(bs, bs)
                for bj in range(self.r)
            ]
            for bi in range(self.r)
        ]

    @classmethod
    def from_array(cls, arr: np.ndarray, bs: int, alignment: Optional[int] = None) -> "TiledMatrix":
        n = arr.shape[0]
        tiled = cls(n, bs, arr.dtype, alignment)
        blocks = arr.reshape(tiled.r, bs, tiled.r, bs)
        for bi in range(tiled.r):
            for bj in range(tiled.r):
                tiled.tiles[bi][bj][...] = blocks[bi, :, bj, :]
        return tiled

    def to_array(self) -> np.ndarray:
        out = np.empty((self.n, self.n), dtype=self.dtype)
        blocks = out.reshape(self.r, self.bs, self.r, self.bs)
        for bi in range(self.r):
            for bj in range(self.r):
                blocks[bi, :, bj, :] = self.tiles[bi][bj]
        return out

    def tile(self, bi: int, bj: int) -> np.ndarray:
        return self.tiles[bi][bj]

    def is_aligned(self, alignment: int) -> bool:
        return all(t.ctypes.data % alignment == 0 for row in self.tiles for t in row)

    def __repr__(self) -> str:
        return f"TiledMatrix(n={self.n}, bs={self.bs}, r={self.r}, dtype={self.dtype})"


def generate_graph(spec: GraphSpec, elem_kind: ElemKind = ElemKind.F32) -> DistanceMatrix:
    """Random dense graph: each off-diagonal pair is absent with probability `null_fraction`.

    Draws come from PCG64 seeded with `spec.seed` in float64 and are cast at the
    end, so both element kinds see the same stream.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.n
    absent = rng.random((n, n)) < spec.null_fraction
    if spec.draws_integers:
        low, high = math.ceil(spec.weight_min), math.floor(spec.weight_max)
        weights = rng.integers(low, high, size=(n, n), endpoint=True).astype(np.float64)
    else:
        weights = rng.uniform(spec.weight_min, spec.weight_max, size=(n, n))
    weights[absent] = INF
    np.fill_diagonal(weights, 0.0)

    d = DistanceMatrix(weights.astype(elem_kind.dtype), copy=False)
    logger.debug(f"Generated graph n={n} seed={spec.seed} infinite fraction={d.infinite_fraction():.4f}")
    return d


def to_tiled(d: DistanceMatrix, bs: int, alignment: Optional[int] = None) -> TiledMatrix:
    """Block-major copy of `d`; BS must divide n (no padding)."""
    if alignment is None:
        alignment = Config.TILE_ALIGNMENT
    if bs <= 0 or d.n % bs:
        raise BlockSizeError(d.n, bs)
    return TiledMatrix.from_array(d.data, bs, alignment)


def from_tiled(t: TiledMatrix) -> DistanceMatrix:
    """Row-major matrix back from its tiled form."""
    return DistanceMatrix(t.to_array(), copy=False)


def _write(path: PathLike, arr: np.ndarray) -> None:
    code = _CODE_OF_KIND[(arr.dtype.kind, arr.dtype.itemsize)]
    dtype = _KIND_CODES[code]
    header = _HEADER.pack(_MAGIC, _VERSION, code, arr.shape[0])
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _read(path: PathLike, expect_n: Optional[int]) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()

    if not raw:
        raise MalformedInput(f"{path}: empty file")
    if len(raw) < _HEADER.size:
        raise MalformedInput(f"{path}: header truncated ({len(raw)} bytes)")
    magic, version, code, n = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise MalformedInput(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise MalformedInput(f"{path}: unsupported version {version}")
    if code not in _KIND_CODES:
        raise MalformedInput(f"{path}: unknown element kind code {code}")
    if n == 0:
        raise MalformedInput(f"{path}: zero vertex count")

    dtype = _KIND_CODES[code]
    payload = len(raw) - _HEADER.size
    expected = n * n * dtype.itemsize
    if payload < expected:
        rows = payload // (n * dtype.itemsize)
        raise TruncatedInput(f"{path}: header says n={n} but only {rows} full rows are present")
    if payload > expected:
        raise DimensionMismatch(f"{path}: {payload - expected} bytes beyond an n={n} matrix")
    if expect_n is not None and n != expect_n:
        raise DimensionMismatch(f"{path}: expected n={expect_n}, file has n={n}")

    return np.frombuffer(raw, dtype=dtype, count=n * n, offset=_HEADER.size).reshape(n, n)


def write_matrix(path: PathLike, d: DistanceMatrix) -> None:
    """Write header (magic, version, kind, n) then little-endian row-major elements."""
    _write(path, d.data)


def read_matrix(path: PathLike, expect_n: Optional[int] = None,
                expect_kind: Optional[ElemKind] = None) -> DistanceMatrix:
    arr = _read(path, expect_n)
    if arr.dtype.kind != "f":
        raise ElementKindMismatch(f"{path}: holds an intermediate matrix, not distances")
    kind = ElemKind.from_dtype(arr.dtype)
    if expect_kind is not None and kind is not expect_kind:
        raise ElementKindMismatch(f"{path}: expected {expect_kind.value}, file holds {kind.value}")
    return DistanceMatrix(arr.astype(kind.dtype))


def write_intermediate(path: PathLike, p: IntermediateMatrix) -> None:
    _write(path, p.data)


def read_intermediate(path: PathLike, expect_n: Optional[int] = None) -> IntermediateMatrix:
    arr = _read(path, expect_n)
    if arr.dtype.kind != "i":
        raise ElementKindMismatch(f"{path}: holds distances, not an intermediate matrix")
    return IntermediateMatrix(arr)
