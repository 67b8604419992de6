"""Time-ordered event queue for the simulator.

Times are integer microseconds.  Events at the same instant are dispatched
by kind priority (lower first), then in insertion order.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any


class EventKind(enum.IntEnum):
    # a payment finishing exactly when the network goes down still counts
    PAYMENT_DONE = 0
    REBALANCE_END = 1
    ACTIVATE = 2
    FAILURE = 3
    DETECT = 4
    REBALANCE_START = 5
    TRACE_PAYMENT = 6
    END = 7


@dataclass(order=True, frozen=True)
class Event:
    time: int
    kind: EventKind
    seq: int
    payload: Any = field(default=None, compare=False)


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []
        self._seq = itertools.count()
        self.last_time = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: int, kind: EventKind, payload: Any = None) -> Event:
        if time < self.last_time:
            raise ValueError(f"event at {time} is in the past (now {self.last_time})")
        ev = Event(int(time), EventKind(kind), next(self._seq), payload)
        heapq.heappush(self._heap, ev)
        return ev

    def peek(self) -> Event | None:
        return self._heap[0] if self._heap else None

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self.last_time = ev.time
        return ev
