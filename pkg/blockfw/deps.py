"""Per-tile dependency tracking for the dependency-driven round scheduler.

A remaining-phase tile (i, j) of round k depends on two tiles: the pivot-row
tile (k, j) and the pivot-column tile (i, k). Finishing a pivot-row tile posts
every cell of its tile column except row k; finishing a pivot-column tile
posts every cell of its tile row except column k. A remaining-phase task waits
on its own cell once per dependency before it starts.

Two interchangeable flavors:

* ``SemaphoreTable`` - one counting semaphore per cell, starting at 0 each
  round; post releases, wait acquires.
* ``ConditionTable`` - per cell a lock, a condition variable and a pending
  counter F starting at 2 each round; post decrements F and signals, wait
  sleeps only while F > 0.
"""

import logging
import threading
from typing import List, Tuple

import numpy as np

from .errors import BlockFWError, ProtocolViolation
from .models import SyncMechanism

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]

DEPENDENCIES = 2


class DependencyAborted(BlockFWError):
    """Raised in waiters when the table is torn down because another worker failed."""


class CountingSemaphore:
    """Counting semaphore built from a lock and a condition variable, with a readable count."""

    def __init__(self, value: int = 0):
        self._cond = threading.Condition(threading.Lock())
        self._value = value
        self._aborted = False

    @property
    def value(self) -> int:
        with self._cond:
            return self._value

    def release(self) -> int:
        with self._cond:
            self._value += 1
            self._cond.notify()
            return self._value

    def acquire(self) -> None:
        with self._cond:
            while self._value == 0 and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise DependencyAborted("semaphore aborted")
            self._value -= 1

    def reset(self, value: int = 0) -> None:
        with self._cond:
            self._value = value
            self._aborted = False

    def abort(self) -> None:
        with self._cond:
            self._aborted = True
            self._cond.notify_all()


class DependencyTable:
    """R x R synchronization cells for one round at a time."""

    sync: SyncMechanism

    def __init__(self, r: int, audit: bool = False):
        self.r = r
        self.audit = audit
        self.round = -1
        self._stats_lock = threading.Lock()
        self.posts = 0
        self.waits = 0

    def reset(self, k: int) -> None:
        """Prepare every cell for round k."""
        self.round = k
        self.posts = 0
        self.waits = 0
        self._reset_cells()

    def post(self, cell: Cell) -> None:
        if self.audit:
            with self._stats_lock:
                self.posts += 1
        self._post(cell)

    def wait(self, cell: Cell) -> None:
        if self.audit:
            with self._stats_lock:
                self.waits += 1
        self._wait(cell)

    def await_dependencies(self, cell: Cell) -> None:
        """One wait per dependency of a remaining-phase tile."""
        for _ in range(DEPENDENCIES):
            self.wait(cell)

    def post_column(self, k: int, j: int) -> None:
        """Pivot-row tile (k, j) finished: post every cell (i, j), i != k."""
        for i in range(self.r):
            if i != k:
                self.post((i, j))

    def post_row(self, i: int, k: int) -> None:
        """Pivot-column tile (i, k) finished: post every cell (i, j), j != k."""
        for j in range(self.r):
            if j != k:
                self.post((i, j))

    def expected_operations(self) -> int:
        return DEPENDENCIES * (self.r - 1) ** 2

    def remaining_cells(self) -> List[Cell]:
        k = self.round
        return [(i, j) for i in range(self.r) for j in range(self.r) if i != k and j != k]

    def check_round_end(self) -> None:
        """Raise ProtocolViolation unless the round's accounting balanced."""
        snapshot = self.snapshot()
        leftovers = [cell for cell in self.remaining_cells() if snapshot[cell] != 0]
        if leftovers:
            raise ProtocolViolation(f"round {self.round}: cells {leftovers[:4]} not drained")
        if self.audit:
            expected = self.expected_operations()
            if self.posts != expected or self.waits != expected:
                raise ProtocolViolation(
                    f"round {self.round}: {self.posts} posts / {self.waits} waits, expected {expected} each")

    def snapshot(self) -> np.ndarray:
        """Current per-cell counter values as an R x R array."""
        raise NotImplementedError

    def abort(self) -> None:
        """Wake every waiter with DependencyAborted."""
        raise NotImplementedError

    def _reset_cells(self) -> None:
        raise NotImplementedError

    def _post(self, cell: Cell) -> None:
        raise NotImplementedError

    def _wait(self, cell: Cell) -> None:
        raise NotImplementedError


class SemaphoreTable(DependencyTable):
    """One counting semaphore per cell, zeroed each round."""

    sync = SyncMechanism.SEMAPHORE

    def __init__(self, r: int, audit: bool = False):
        super().__init__(r, audit)
        self._cells = [[CountingSemaphore(0) for _ in range(r)] for _ in range(r)]

    def _reset_cells(self) -> None:
        for row in self._cells:
            for sem in row:
                sem.reset(0)

    def _post(self, cell: Cell) -> None:
        value = self._cells[cell[0]][cell[1]].release()
        if self.audit and value > DEPENDENCIES:
            raise ProtocolViolation(f"semaphore {cell} reached {value}")

    def _wait(self, cell: Cell) -> None:
        self._cells[cell[0]][cell[1]].acquire()

    def snapshot(self) -> np.ndarray:
        return np.array([[sem.value for sem in row] for row in self._cells], dtype=np.int64)

    def abort(self) -> None:
        for row in self._cells:
            for sem in row:
                sem.abort()


class ConditionTable(DependencyTable):
    """Per-cell lock, condition variable and pending-dependency counter F."""

    sync = SyncMechanism.CONDVAR

    def __init__(self, r: int, audit: bool = False):
        super().__init__(r, audit)
        self._conds = [[threading.Condition(threading.Lock()) for _ in range(r)] for _ in range(r)]
        self._pending = np.full((r, r), DEPENDENCIES, dtype=np.int64)
        self._aborted = False

    def _reset_cells(self) -> None:
        self._aborted = False
        for i, row in enumerate(self._conds):
            for j, cond in enumerate(row):
                with cond:
                    self._pending[i, j] = DEPENDENCIES

    def _post(self, cell: Cell) -> None:
        i, j = cell
        cond = self._conds[i][j]
        with cond:
            self._pending[i, j] -= 1
            if self._pending[i, j] < 0:
                raise ProtocolViolation(f"F{cell} dropped below zero")
            cond.notify()

    def _wait(self, cell: Cell) -> None:
        i, j = cell
        cond = self._conds[i][j]
        with cond:
            while self._pending[i, j] > 0 and not self._aborted:
                cond.wait()
            if self._aborted:
                raise DependencyAborted(f"wait on {cell} aborted")

    def snapshot(self) -> np.ndarray:
        out = np.empty((self.r, self.r), dtype=np.int64)
        for i, row in enumerate(self._conds):
            for j, cond in enumerate(row):
                with cond:
                    out[i, j] = self._pending[i, j]
        return out

    def abort(self) -> None:
        self._aborted = True
        for row in self._conds:
            for cond in row:
                with cond:
                    cond.notify_all()


def make_dependency_table(sync: SyncMechanism, r: int, audit: bool = False) -> DependencyTable:
    if sync is SyncMechanism.SEMAPHORE:
        return SemaphoreTable(r, audit)
    return ConditionTable(r, audit)
