"""Allocator call capture: per-thread recorders and the interception surface.

Each thread records into its own ``ThreadRecorder``; the hot path takes no
locks. Aggregate counters (calls, bytes, running cost) are the ground truth
and survive any ring eviction; the fixed-capacity event ring exists for
diagnostics and for replay-based validation. A reentrancy guard is held
around every mutation so allocations made by the recorder's own bookkeeping
are never recorded.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .cost_model import AllocFnKind, CostModel, event_cost
from .errors import RecorderSealedError, ThreadAffinityError

if TYPE_CHECKING:
    from .markers import MarkerSpan

DEFAULT_RING_CAPACITY = 4096
RING_CAPACITY_ENV = "CHURNSCOPE_RING_CAPACITY"

# Saturation bound for byte counts; larger requests are clamped and flagged.
BYTES_MAX = 2**63 - 1


def resolve_ring_capacity(capacity: int | None = None) -> int:
    """Pick the ring capacity: explicit argument, else env override, else default."""
    if capacity is None:
        raw = os.environ.get(RING_CAPACITY_ENV)
        if raw is None:
            return DEFAULT_RING_CAPACITY
        try:
            capacity = int(raw)
        except ValueError:
            raise ValueError(
                f"{RING_CAPACITY_ENV} must be a positive integer, got {raw!r}"
            ) from None
    if capacity < 1:
        raise ValueError(f"ring capacity must be >= 1, got {capacity}")
    return capacity


@dataclass(frozen=True, slots=True)
class AllocEvent:
    """One intercepted allocator call.

    ``nbytes`` is the effective byte count: the requested size for malloc
    and realloc, count*elem_size for calloc, and the attributed block size
    for free. ``addr`` is the resulting block token (absent for free and for
    failed calls); ``old_addr`` is the input token for free and realloc.
    """

    thread_id: str
    seq: int
    kind: AllocFnKind
    nbytes: int
    addr: int | None
    old_addr: int | None


@dataclass(frozen=True, slots=True)
class CounterSnapshot:
    """Point-in-time copy of one recorder's aggregate counters."""

    seq: int
    malloc_calls: int
    calloc_calls: int
    realloc_calls: int
    free_calls: int
    malloc_bytes: int
    calloc_bytes: int
    realloc_bytes: int
    free_bytes: int
    realloc_freed_bytes: int
    cost: float
    overflow_count: int
    anomaly_count: int

    def calls(self) -> dict[AllocFnKind, int]:
        return {
            AllocFnKind.MALLOC: self.malloc_calls,
            AllocFnKind.CALLOC: self.calloc_calls,
            AllocFnKind.REALLOC: self.realloc_calls,
            AllocFnKind.FREE: self.free_calls,
        }

    @property
    def bytes_allocated(self) -> int:
        return self.malloc_bytes + self.calloc_bytes + self.realloc_bytes

    @property
    def bytes_freed(self) -> int:
        return self.free_bytes + self.realloc_freed_bytes


class ThreadRecorder:
    """Single-thread capture state: counters, live-block table, event ring.

    All mutation must happen on the owning thread. After ``seal()`` the
    recorder emits no further events and may be read from any thread; other
    threads must not read it before that.
    """

    def __init__(self, thread_id: str, model: CostModel, ring_capacity: int | None = None):
        capacity = resolve_ring_capacity(ring_capacity)
        self.thread_id = thread_id
        self._model = model
        self._os_ident = threading.get_ident()
        # Ring storage is pre-reserved here so recording never grows it.
        self._ring: list[AllocEvent | None] = [None] * capacity
        self._capacity = capacity
        self._ring_head = 0
        self._ring_len = 0
        self._next_seq = 0
        self._malloc_calls = 0
        self._calloc_calls = 0
        self._realloc_calls = 0
        self._free_calls = 0
        self._malloc_bytes = 0
        self._calloc_bytes = 0
        self._realloc_bytes = 0
        self._free_bytes = 0
        self._realloc_freed_bytes = 0
        self._cost = 0.0
        self._overflow = 0
        self._anomalies = 0
        self._live: dict[int, int] = {}
        self._depth = 0
        self._sealed = False
        self._span_ordinal = 0
        self._spans: list[MarkerSpan] = []
        self._open_spans: list[MarkerSpan] = []

    @property
    def model(self) -> CostModel:
        return self._model

    @property
    def sealed(self) -> bool:
        return self._sealed

    @property
    def ring_capacity(self) -> int:
        return self._capacity

    @property
    def next_seq(self) -> int:
        return self._next_seq

    @property
    def reentrancy_depth(self) -> int:
        return self._depth

    def _require_owner(self) -> None:
        if threading.get_ident() != self._os_ident:
            raise ThreadAffinityError(
                f"recorder {self.thread_id!r} belongs to another thread"
            )

    def _require_live(self) -> None:
        if self._sealed:
            raise RecorderSealedError(f"recorder {self.thread_id!r} is sealed")

    # -- recording ---------------------------------------------------------

    def record_malloc(self, requested: int, addr: int | None) -> AllocEvent | None:
        """Record one malloc call; ``addr is None`` means the call failed."""
        self._require_owner()
        self._require_live()
        if self._depth:
            return None  # recorder-internal allocation, never recorded
        if requested < 0:
            raise ValueError(f"requested size must be nonnegative, got {requested}")
        self._depth += 1
        try:
            nbytes = 0
            if addr is not None:
                nbytes = self._clamp(requested)
                if addr in self._live:
                    self._anomalies += 1  # double report or missed free
                self._live[addr] = nbytes
            self._malloc_calls += 1
            self._malloc_bytes += nbytes
            self._cost += event_cost(self._model, AllocFnKind.MALLOC, nbytes)
            return self._emit(AllocFnKind.MALLOC, nbytes, addr, None)
        finally:
            self._depth -= 1

    def record_calloc(self, count: int, elem_size: int, addr: int | None) -> AllocEvent | None:
        """Record one calloc call; effective bytes are ``count * elem_size``."""
        self._require_owner()
        self._require_live()
        if self._depth:
            return None
        if count < 0 or elem_size < 0:
            raise ValueError("calloc count and element size must be nonnegative")
        self._depth += 1
        try:
            nbytes = 0
            if addr is not None:
                nbytes = self._clamp(count * elem_size)
                if addr in self._live:
                    self._anomalies += 1
                self._live[addr] = nbytes
            self._calloc_calls += 1
            self._calloc_bytes += nbytes
            self._cost += event_cost(self._model, AllocFnKind.CALLOC, nbytes)
            return self._emit(AllocFnKind.CALLOC, nbytes, addr, None)
        finally:
            self._depth -= 1

    def record_free(self, old_addr: int | None) -> AllocEvent | None:
        """Record one free call, attributing bytes from the live table.

        Freeing a null token is a legal no-op call (zero bytes, no anomaly).
        An unknown token is still counted as a call, with zero bytes, and
        bumps the anomaly counter: it signals a block allocated before
        interception began, or a mismatched report.
        """
        self._require_owner()
        self._require_live()
        if self._depth:
            return None
        self._depth += 1
        try:
            nbytes = 0
            if old_addr is not None:
                size = self._live.pop(old_addr, None)
                if size is None:
                    self._anomalies += 1
                else:
                    nbytes = size
            self._free_calls += 1
            self._free_bytes += nbytes
            self._cost += event_cost(self._model, AllocFnKind.FREE, nbytes)
            return self._emit(AllocFnKind.FREE, nbytes, None, old_addr)
        finally:
            self._depth -= 1

    def record_realloc(
        self, old_addr: int | None, requested: int, addr: int | None
    ) -> AllocEvent | None:
        """Record one realloc call as a single event charged on the new size.

        The live entry moves from ``old_addr`` to ``addr``. A null
        ``old_addr`` is a fresh allocation (no anomaly); an unknown token is
        treated as fresh and bumps the anomaly counter. ``requested == 0``
        removes the entry, ``addr is None`` with a nonzero request is a
        failed call that leaves the original block live.
        """
        self._require_owner()
        self._require_live()
        if self._depth:
            return None
        if requested < 0:
            raise ValueError(f"requested size must be nonnegative, got {requested}")
        self._depth += 1
        try:
            nbytes = 0
            freed = 0
            emit_addr = None
            emit_old = old_addr
            if requested == 0:
                if old_addr is not None:
                    size = self._live.pop(old_addr, None)
                    if size is None:
                        self._anomalies += 1
                    else:
                        freed = size
            elif addr is None:
                # Failed call: the original block stays live and nothing
                # moved, so the event carries no address tokens at all.
                emit_old = None
            else:
                nbytes = self._clamp(requested)
                if old_addr is not None:
                    size = self._live.pop(old_addr, None)
                    if size is None:
                        self._anomalies += 1
                    else:
                        freed = size
                if addr in self._live:
                    self._anomalies += 1
                self._live[addr] = nbytes
                emit_addr = addr
            self._realloc_calls += 1
            self._realloc_bytes += nbytes
            self._realloc_freed_bytes += freed
            self._cost += event_cost(self._model, AllocFnKind.REALLOC, nbytes)
            return self._emit(AllocFnKind.REALLOC, nbytes, emit_addr, emit_old)
        finally:
            self._depth -= 1

    def _clamp(self, nbytes: int) -> int:
        if nbytes > BYTES_MAX:
            self._anomalies += 1
            return BYTES_MAX
        return nbytes

    def _emit(self, kind: AllocFnKind, nbytes: int, addr: int | None, old_addr: int | None) -> AllocEvent:
        ev = AllocEvent(self.thread_id, self._next_seq, kind, nbytes, addr, old_addr)
        self._next_seq += 1
        self._append_event(ev)
        return ev

    def _append_event(self, ev: AllocEvent) -> None:
        # Fixed-size ring: evict the oldest event when full. Aggregate
        # counters are untouched by eviction.
        if self._ring_len == self._capacity:
            self._ring[self._ring_head] = ev
            self._ring_head = (self._ring_head + 1) % self._capacity
            self._overflow += 1
        else:
            self._ring[(self._ring_head + self._ring_len) % self._capacity] = ev
            self._ring_len += 1

    # -- reading -----------------------------------------------------------

    def snapshot(self) -> CounterSnapshot:
        """Pure read of all counters; cheap enough to take per marker."""
        return CounterSnapshot(
            seq=self._next_seq,
            malloc_calls=self._malloc_calls,
            calloc_calls=self._calloc_calls,
            realloc_calls=self._realloc_calls,
            free_calls=self._free_calls,
            malloc_bytes=self._malloc_bytes,
            calloc_bytes=self._calloc_bytes,
            realloc_bytes=self._realloc_bytes,
            free_bytes=self._free_bytes,
            realloc_freed_bytes=self._realloc_freed_bytes,
            cost=self._cost,
            overflow_count=self._overflow,
            anomaly_count=self._anomalies,
        )

    def events(self) -> list[AllocEvent]:
        """The retained events, oldest first. Ring eviction drops the front."""
        out = []
        for i in range(self._ring_len):
            out.append(self._ring[(self._ring_head + i) % self._capacity])
        return out

    def live_table(self) -> dict[int, int]:
        """Copy of the outstanding-block table (token to byte size)."""
        return dict(self._live)

    def live_bytes(self) -> int:
        return sum(self._live.values())

    # -- span bookkeeping (managed by the markers module) --------------------

    def _push_span(self, span: MarkerSpan) -> None:
        self._spans.append(span)
        self._open_spans.append(span)

    def _pop_span(self, span: MarkerSpan) -> None:
        self._open_spans.remove(span)

    def _next_span_id(self) -> str:
        span_id = f"{self.thread_id}/{self._span_ordinal:06d}"
        self._span_ordinal += 1
        return span_id

    def spans(self) -> list[MarkerSpan]:
        """Every span begun on this thread, in open order."""
        return list(self._spans)

    def open_spans(self) -> list[MarkerSpan]:
        return list(self._open_spans)

    def seal(self) -> None:
        """Stop recording. Open spans are closed at the seal snapshot and
        flagged auto_closed. Idempotent. Call from the owning thread, or from
        elsewhere only once the owning thread has quiesced (e.g. post-join).
        """
        if self._sealed:
            return
        snap = self.snapshot()
        for span in reversed(self._open_spans):
            span._finalize(snap, snap.seq, auto_closed=True)
        self._open_spans.clear()
        self._sealed = True


class BumpAllocator:
    """Deterministic stand-in heap handing out monotonically increasing tokens.

    An optional ``budget`` caps outstanding bytes; calls that would exceed it
    fail by returning None, which lets tests exercise failure transparency.
    """

    def __init__(self, budget: int | None = None, start: int = 0x1000, align: int = 16):
        self._next = start
        self._align = align
        self._budget = budget
        self._outstanding: dict[int, int] = {}
        self._used = 0

    def _take(self, size: int) -> int | None:
        if self._budget is not None and self._used + size > self._budget:
            return None
        addr = self._next
        step = max(size, 1)
        self._next += (step + self._align - 1) // self._align * self._align
        self._outstanding[addr] = size
        self._used += size
        return addr

    def malloc(self, size: int) -> int | None:
        return self._take(size)

    def calloc(self, count: int, elem_size: int) -> int | None:
        return self._take(count * elem_size)

    def realloc(self, addr: int | None, size: int) -> int | None:
        if size == 0:
            self.free(addr)
            return None
        old = self._outstanding.pop(addr, 0) if addr is not None else 0
        self._used -= old
        new_addr = self._take(size)
        if new_addr is None and addr is not None:
            # Failed grow leaves the original block untouched.
            self._outstanding[addr] = old
            self._used += old
        return new_addr

    def free(self, addr: int | None) -> None:
        if addr is None:
            return
        self._used -= self._outstanding.pop(addr, 0)

    def outstanding_bytes(self) -> int:
        return self._used


class TracingAllocator:
    """The four-call interception surface.

    Forwards every call to the base allocator unchanged and records it into
    the owning thread's recorder. While the recorder's reentrancy guard is
    held (its own bookkeeping is running), calls are forwarded but not
    recorded.
    """

    def __init__(self, recorder: ThreadRecorder, base: BumpAllocator | None = None):
        self._rec = recorder
        self._base = base if base is not None else BumpAllocator()

    @property
    def recorder(self) -> ThreadRecorder:
        return self._rec

    @property
    def base(self) -> BumpAllocator:
        return self._base

    def malloc(self, size: int) -> int | None:
        addr = self._base.malloc(size)
        self._rec.record_malloc(size, addr)
        return addr

    def calloc(self, count: int, elem_size: int) -> int | None:
        addr = self._base.calloc(count, elem_size)
        self._rec.record_calloc(count, elem_size, addr)
        return addr

    def realloc(self, addr: int | None, size: int) -> int | None:
        new_addr = self._base.realloc(addr, size)
        self._rec.record_realloc(addr, size, new_addr)
        return new_addr

    def free(self, addr: int | None) -> None:
        self._base.free(addr)
        self._rec.record_free(addr)
