"""Optional per-task event recording for scheduler property tests."""

import threading
import time
from collections import defaultdict
from typing import Dict, List, NamedTuple, Tuple

START = "start"
END = "end"


class Event(NamedTuple):
    worker: int
    round: int
    phase: int
    block: Tuple[int, int]
    kind: str
    ts: int  # time.perf_counter_ns()


class EventLog:
    """Append-only log with one buffer per worker, merged by timestamp on read."""

    def __init__(self):
        self._lock = threading.Lock()
        self._buffers: Dict[int, List[Event]] = {}

    def _buffer(self, worker: int) -> List[Event]:
        buf = self._buffers.get(worker)
        if buf is None:
            with self._lock:
                buf = self._buffers.setdefault(worker, [])
        return buf

    def record(self, worker: int, round_k: int, phase: int, block: Tuple[int, int], kind: str) -> None:
        self._buffer(worker).append(Event(worker, round_k, phase, block, kind, time.perf_counter_ns()))

    def events(self) -> List[Event]:
        with self._lock:
            merged = [e for buf in self._buffers.values() for e in buf]
        merged.sort(key=lambda e: (e.ts, e.kind != END))
        return merged

    def __len__(self) -> int:
        return sum(len(buf) for buf in self._buffers.values())

    def _index(self) -> Dict[Tuple[int, int, str, Tuple[int, int]], int]:
        index = {}
        for e in self.events():
            index[(e.round, e.phase, e.kind, e.block)] = e.ts
        return index

    def happens_before_violations(self) -> List[Tuple[int, Tuple[int, int], Tuple[int, int]]]:
        """Remaining-phase tiles that started before one of their dependencies ended.

        Returns (round, tile, dependency) triples; empty when the log is consistent.
        """
        index = self._index()
        violations = []
        for (round_k, phase, kind, block), ts in index.items():
            if phase != 4 or kind != START:
                continue
            i, j = block
            for dep_phase, dep in ((2, (round_k, j)), (3, (i, round_k))):
                dep_end = index.get((round_k, dep_phase, END, dep))
                if dep_end is None or ts < dep_end:
                    violations.append((round_k, block, dep))
        return violations

    def early_phase4_starts(self) -> int:
        """Remaining-phase starts that precede the last pivot row/column end of their round."""
        last_end: Dict[int, int] = defaultdict(int)
        starts: Dict[int, List[int]] = defaultdict(list)
        for e in self.events():
            if e.phase in (2, 3) and e.kind == END:
                last_end[e.round] = max(last_end[e.round], e.ts)
            elif e.phase == 4 and e.kind == START:
                starts[e.round].append(e.ts)
        return sum(1 for round_k, ts_list in starts.items() for ts in ts_list if ts < last_end[round_k])
