"""Deterministic discrete-event core: integer-ms clock, ordered event queue,
named per-entity random streams, and an append-only run trace.

Time is an integer count of milliseconds. Events dequeue in (time, seq)
order, where seq is the insertion counter, so replays are bit-identical
for a fixed configuration and root seed.
"""
from __future__ import annotations

import csv
import hashlib
import heapq
from enum import Enum
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

SimTime = int  # non-negative milliseconds


class EventKind(Enum):
    SERVICE_ARRIVAL = "ServiceArrival"
    BID_SUBMISSION = "BidSubmission"
    AUCTION_CLEAR = "AuctionClear"
    ASSIGNMENT_DISPATCH = "AssignmentDispatch"
    EXECUTION_COMPLETE = "ExecutionComplete"
    DEADLINE_EXPIRY = "DeadlineExpiry"
    UTILIZATION_REPORT_ARRIVAL = "UtilizationReportArrival"
    FEEDBACK_DELIVERY = "FeedbackDelivery"
    BACKOFF_EXPIRY = "BackoffExpiry"


class PastEventError(ValueError):
    """Raised when an event is scheduled before the current clock."""


class Event:
    __slots__ = ("time", "kind", "payload", "seq")

    def __init__(self, time: SimTime, kind: EventKind, payload: dict, seq: int):
        if not isinstance(time, int) or time < 0:
            raise ValueError(f"event time must be a non-negative int, got {time!r}")
        if not isinstance(kind, EventKind):
            raise ValueError(f"event kind must be an EventKind, got {kind!r}")
        if not isinstance(payload, dict):
            raise ValueError("event payload must be a dict")
        self.time = time
        self.kind = kind
        self.payload = payload
        self.seq = seq

    def __repr__(self):
        return f"Event(t={self.time}, {self.kind.value}, seq={self.seq})"


class RngStream:
    """A named, independently seeded random stream for one simulation entity.

    Streams with the same (root_seed, entity_label) reproduce the same draw
    sequence; distinct labels give statistically independent sequences.
    Adding an entity therefore never perturbs the draws of existing ones.
    """

    __slots__ = ("root_seed", "entity_label", "draw_counter", "_gen")

    def __init__(self, root_seed: int, entity_label: str):
        if not entity_label:
            raise ValueError("entity_label must be non-empty")
        self.root_seed = root_seed
        self.entity_label = entity_label
        self.draw_counter = 0
        digest = hashlib.sha256(entity_label.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([root_seed & 0xFFFFFFFFFFFFFFFF, *words])))

    def uniform(self, low=0.0, high=1.0):
        self.draw_counter += 1
        return float(self._gen.uniform(low, high))

    def exponential(self, scale):
        self.draw_counter += 1
        return float(self._gen.exponential(scale))

    def normal(self, loc=0.0, scale=1.0):
        self.draw_counter += 1
        return float(self._gen.normal(loc, scale))

    def standard_normal(self, size):
        self.draw_counter += 1
        return self._gen.standard_normal(size)

    def integers(self, low, high):
        self.draw_counter += 1
        return int(self._gen.integers(low, high))

    def integer_array(self, low, high, size) -> np.ndarray:
        self.draw_counter += 1
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        self.draw_counter += 1
        return self._gen.permutation(n)

    def choice_index(self, probabilities: np.ndarray) -> int:
        """Categorical draw; returns the chosen index."""
        u = self.uniform()
        return int(np.searchsorted(np.cumsum(probabilities), u, side="right").clip(0, len(probabilities) - 1))


def derive_stream(root_seed: int, entity_label: str) -> RngStream:
    """Derive the deterministic stream for (root_seed, entity_label)."""
    return RngStream(root_seed, entity_label)


class TraceRecorder:
    """Append-only event trace.

    One row per processed event or observable effect. Attribute values are
    stored as strings (floats via repr) so that a serialize/parse round trip
    is lossless and metrics recomputed from the CSV match exactly.
    """

    COLUMNS = ("time_ms", "kind", "entity", "attrs")

    def __init__(self, enabled: bool = True, sink: Optional[Callable[[tuple], None]] = None):
        self.enabled = enabled
        self.rows: list[tuple[int, str, str, dict[str, str]]] = []
        self._sink = sink  # extra consumer fed every row (streaming accumulators)

    @property
    def active(self) -> bool:
        return self.enabled or self._sink is not None

    def record(self, time: SimTime, kind: str, entity: str, **attrs):
        if not self.enabled and self._sink is None:
            return
        row = (time, kind, entity, {k: _fmt(v) for k, v in attrs.items()})
        if self._sink is not None:
            self._sink(row)
        if self.enabled:
            self.rows.append(row)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for time, kind, entity, attrs in self.rows:
                writer.writerow([time, kind, entity, pack_attrs(attrs)])

    @staticmethod
    def read_csv(path) -> list[tuple[int, str, str, dict[str, str]]]:
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and tuple(header) != TraceRecorder.COLUMNS:
                raise ValueError(f"unexpected trace header: {header}")
            for rec in reader:
                time, kind, entity, packed = rec
                rows.append((int(time), kind, entity, unpack_attrs(packed)))
        return rows


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def pack_attrs(attrs: dict[str, str]) -> str:
    return " ".join(f"{k}={v}" for k, v in attrs.items())


def unpack_attrs(packed: str) -> dict[str, str]:
    if not packed:
        return {}
    out = {}
    for item in packed.split(" "):
        key, _, value = item.partition("=")
        out[key] = value
    return out


class Simulator:
    """Single-threaded event loop.

    Handlers are registered per event kind and invoked in strict (time, seq)
    order. Every processed event is recorded to the trace; handlers add
    effect rows themselves via sim.trace.record.
    """

    def __init__(self, trace: Optional[TraceRecorder] = None, check_order: bool = True):
        self.clock: SimTime = 0
        self.trace = trace if trace is not None else TraceRecorder(enabled=False)
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._handlers: dict[EventKind, Callable[["Simulator", Event], None]] = {}
        self._check_order = check_order
        self._last_key = (-1, -1)

    def on(self, kind: EventKind, handler: Callable[["Simulator", Event], None]):
        self._handlers[kind] = handler

    def schedule(self, time: SimTime, kind: EventKind, **payload) -> Event:
        if time < self.clock:
            raise PastEventError(f"cannot schedule {kind.value} at t={time} before clock t={self.clock}")
        event = Event(int(time), kind, payload, self._seq)
        self._seq += 1
        heapq.heappush(self._heap, (event.time, event.seq, event))
        return event

    def run_until(self, t_end: SimTime):
        """Process all events with time <= t_end in order; clock ends at t_end."""
        if t_end < self.clock:
            raise PastEventError(f"t_end={t_end} is before clock t={self.clock}")
        heap, handlers = self._heap, self._handlers
        while heap and heap[0][0] <= t_end:
            time, seq, event = heapq.heappop(heap)
            if self._check_order:
                key = (time, seq)
                assert key > self._last_key, f"event order violated: {key} after {self._last_key}"
                self._last_key = key
            self.clock = time
            if self.trace.active:
                self.trace.record(time, event.kind.value, str(event.payload.get("entity", "")))
            handler = handlers.get(event.kind)
            if handler is not None:
                handler(self, event)
        self.clock = t_end

    def pending(self) -> int:
        return len(self._heap)
