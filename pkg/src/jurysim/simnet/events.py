"""Event queue and flooding over arbitrary graphs."""

from __future__ import annotations

import enum
import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence


class EventKind(enum.IntEnum):
    DELIVER = 0
    TIMER_EXPIRY = 1
    PROCESSING_DONE = 2


class SimEvent(NamedTuple):
    timestamp: int
    sequence: int
    kind: EventKind
    node: int
    payload: Any


class CausalityError(RuntimeError):
    pass


class EventQueue:
    """Min-queue on (timestamp, insertion sequence) with a monotone clock."""

    def __init__(self, trace: bool = False):
        self._heap: List[tuple] = []
        self._seq = 0
        self.now = 0
        self.popped = 0
        self._hash = hashlib.sha256() if trace else None

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

    def push(self, timestamp: int, kind: EventKind, node: int, payload: Any = None) -> int:
        if timestamp < self.now:
            raise CausalityError(f"event at {timestamp} scheduled before current time {self.now}")
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (timestamp, seq, kind, node, payload))
        return seq

    def pop(self) -> SimEvent:
        ev = SimEvent(*heapq.heappop(self._heap))
        if ev.timestamp < self.now:
            raise CausalityError(f"clock would move back from {self.now} to {ev.timestamp}")
        self.now = ev.timestamp
        self.popped += 1
        if self._hash is not None:
            self._hash.update(f"{ev.timestamp}:{ev.sequence}:{int(ev.kind)}:{ev.node};".encode())
        return ev

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    @property
    def trace_hash(self) -> str:
        if self._hash is None:
            raise RuntimeError("queue was created without tracing")
        return self._hash.hexdigest()


@dataclass
class FloodSchedule:
    origin: int
    first_receipt: Dict[int, int]
    transmissions: int
    sent_by: Dict[int, int]
    processed: Dict[int, int]
    duplicates: int
    last_delivery: int
    deliveries: List[tuple] = field(default_factory=list)


def flood(
    origin: int,
    adjacency: Mapping[int, Sequence[int]],
    link_delay: int,
    processing: int = 0,
    start: int = 0,
    record: bool = False,
) -> FloodSchedule:
    """Flood one message from ``origin``.

    Each node processes the message once, on first receipt, and forwards it
    to every neighbour except the one it came from. Later copies are
    delivered and counted but not forwarded.
    """
    queue = EventQueue()
    first: Dict[int, int] = {origin: start}
    processed: Dict[int, int] = {origin: 1}
    sent: Dict[int, int] = {}
    transmissions = duplicates = 0
    last = start
    deliveries: List[tuple] = []

    def forward(node: int, came_from: Optional[int], now: int) -> None:
        nonlocal transmissions
        for nb in adjacency[node]:
            if nb == came_from:
                continue
            transmissions += 1
            sent[node] = sent.get(node, 0) + 1
            queue.push(now + link_delay + processing, EventKind.DELIVER, nb, node)

    forward(origin, None, start)
    while queue:
        ev = queue.pop()
        last = ev.timestamp
        if record:
            deliveries.append((ev.payload, ev.node, ev.timestamp))
        if ev.node in first:
            duplicates += 1
            continue
        first[ev.node] = ev.timestamp
        processed[ev.node] = processed.get(ev.node, 0) + 1
        forward(ev.node, ev.payload, ev.timestamp)
    return FloodSchedule(origin, first, transmissions, sent, processed, duplicates, last, deliveries)


def adjacency_of(topology) -> Dict[int, List[int]]:
    return {v: topology.neighbors(v) for v in range(topology.n)}
