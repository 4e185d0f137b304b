"""Event calendar and clock for the simulation.

Events pop in ascending fire time; ties go to whichever event was scheduled
first. Nothing here knows about patients or physicians, the model hands the
calendar a dispatch callable.
"""

from __future__ import annotations

import heapq
import json
import math
from typing import IO, Callable, NamedTuple, Optional


class PastTimeError(ValueError):
    """An event was scheduled before the current clock."""


class EventRecord(NamedTuple):
    fire_time: float
    sequence: int
    kind: int
    subject: int


class EventCalendar:
    """Future event list backed by a binary heap."""

    def __init__(self) -> None:
        self._heap: list[EventRecord] = []
        self._next_seq = 0
        self.clock = 0.0
        self.popped = 0

    def __len__(self) -> int:
        return len(self._heap)

    @property
    def scheduled(self) -> int:
        return self._next_seq

    def schedule(self, at: float, kind: int, subject: int = -1) -> EventRecord:
        if at < self.clock:
            raise PastTimeError(f"cannot schedule at t={at} with clock at {self.clock}")
        if not math.isfinite(at):
            raise PastTimeError(f"event time must be finite, got {at}")
        rec = EventRecord(float(at), self._next_seq, kind, subject)
        self._next_seq += 1
        heapq.heappush(self._heap, rec)
        return rec

    def peek_time(self) -> Optional[float]:
        return self._heap[0].fire_time if self._heap else None

    def pop_next(self) -> Optional[EventRecord]:
        """Pop the earliest event and advance the clock, or None when empty."""
        if not self._heap:
            return None
        rec = heapq.heappop(self._heap)
        self.clock = rec.fire_time
        self.popped += 1
        return rec


class EventLog:
    """Line-delimited JSON trace, one line per dispatched event."""

    def __init__(self, stream: IO[str], kind_names: Optional[dict[int, str]] = None):
        self.stream = stream
        self.kind_names = kind_names or {}

    def __call__(self, rec: EventRecord) -> None:
        kind = self.kind_names.get(rec.kind, rec.kind)
        self.stream.write(
            json.dumps(
                {"time": rec.fire_time, "sequence": rec.sequence, "kind": kind, "subject": rec.subject}
            )
            + "\n"
        )


def run_until(
    calendar: EventCalendar,
    dispatch: Callable[[EventRecord], None],
    horizon: float,
    trace: Optional[Callable[[EventRecord], None]] = None,
) -> float:
    """Dispatch every event with fire_time <= horizon.

    Events past the horizon stay on the calendar. If any remain the clock is
    moved up to the horizon; otherwise it stays at the last event time.
    Returns the final clock.
    """
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if horizon == 0:
        return calendar.clock
    heap = calendar._heap
    while heap and heap[0].fire_time <= horizon:
        rec = calendar.pop_next()
        if trace is not None:
            trace(rec)
        dispatch(rec)
    if heap:
        calendar.clock = max(calendar.clock, float(horizon))
    return calendar.clock
