"""Named critical-phase spans on a thread's event timeline.

A span is the interval between a begin and an end marker on one thread.
Spans may nest and may partially overlap; each is costed independently from
the counter snapshots taken at its two endpoints, so closing a span is O(1)
regardless of how many events it covers.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Iterator

from .errors import RecorderSealedError, SpanStateError, ThreadAffinityError
from .recorder import CounterSnapshot, ThreadRecorder

MAX_NAME_BYTES = 128
RESERVED_PREFIX = "churnscope."


class MarkerSpan:
    """One named interval on one thread, bounded by counter snapshots.

    ``parent`` is the innermost span still open when this one began; the
    link is kept only if the parent's interval ends up containing this one
    (partial overlap clears it). Closed spans are immutable.
    """

    __slots__ = (
        "span_id",
        "name",
        "recorder",
        "parent",
        "start_snapshot",
        "end_snapshot",
        "start_seq",
        "end_seq",
        "auto_closed",
    )

    def __init__(
        self,
        span_id: str,
        name: str,
        recorder: ThreadRecorder,
        start_snapshot: CounterSnapshot,
        parent: "MarkerSpan | None",
    ):
        self.span_id = span_id
        self.name = name
        self.recorder = recorder
        self.parent = parent
        self.start_snapshot = start_snapshot
        self.start_seq = start_snapshot.seq
        self.end_snapshot: CounterSnapshot | None = None
        self.end_seq: int | None = None
        self.auto_closed = False

    @property
    def closed(self) -> bool:
        return self.end_snapshot is not None

    @property
    def thread_id(self) -> str:
        return self.recorder.thread_id

    def _finalize(self, snapshot: CounterSnapshot, end_seq: int, auto_closed: bool = False) -> None:
        if self.closed:
            raise SpanStateError(f"span {self.span_id!r} ({self.name!r}) is already closed")
        self.end_snapshot = snapshot
        self.end_seq = end_seq
        self.auto_closed = auto_closed
        # A parent that closed before us without covering our whole interval
        # was an overlapping sibling, not an enclosing phase.
        if self.parent is not None and self.parent.closed and self.parent.end_seq < end_seq:
            self.parent = None

    def __repr__(self) -> str:
        state = "closed" if self.closed else "open"
        return f"MarkerSpan({self.span_id!r}, {self.name!r}, {state})"


def _validate_name(name: str) -> None:
    if not isinstance(name, str) or not name:
        raise ValueError("marker name must be a nonempty string")
    if len(name.encode("utf-8")) > MAX_NAME_BYTES:
        raise ValueError(f"marker name exceeds {MAX_NAME_BYTES} bytes: {name!r}")
    if name.startswith(RESERVED_PREFIX):
        raise ValueError(f"marker names starting with {RESERVED_PREFIX!r} are reserved")


def begin_marker(recorder: ThreadRecorder, name: str) -> MarkerSpan:
    """Open a span named ``name`` on the calling thread's recorder.

    The start snapshot is taken on the calling thread, so it is atomic with
    respect to that thread's own event stream. Several spans with the same
    name may be open at once; span ids disambiguate them.
    """
    _validate_name(name)
    recorder._require_owner()
    if recorder.sealed:
        raise RecorderSealedError(
            f"cannot begin {name!r}: recorder {recorder.thread_id!r} is sealed"
        )
    open_spans = recorder.open_spans()
    parent = open_spans[-1] if open_spans else None
    span = MarkerSpan(recorder._next_span_id(), name, recorder, recorder.snapshot(), parent)
    recorder._push_span(span)
    return span


def end_marker(span: MarkerSpan) -> MarkerSpan:
    """Close an open span on its own thread and freeze its end snapshot."""
    if threading.get_ident() != span.recorder._os_ident:
        raise ThreadAffinityError(
            f"span {span.name!r} was opened on thread {span.thread_id!r} "
            "and must be closed there"
        )
    if span.closed:
        raise SpanStateError(f"span {span.span_id!r} ({span.name!r}) is already closed")
    snap = span.recorder.snapshot()
    span._finalize(snap, snap.seq, auto_closed=False)
    span.recorder._pop_span(span)
    return span


@contextmanager
def marker(recorder: ThreadRecorder, name: str) -> Iterator[MarkerSpan]:
    """Context manager sugar: begin on entry, end on exit."""
    span = begin_marker(recorder, name)
    try:
        yield span
    finally:
        end_marker(span)
