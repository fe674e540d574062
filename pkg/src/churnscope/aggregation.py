"""Span costing from snapshot deltas, and merging results across threads."""

from __future__ import annotations

from dataclasses import dataclass, field

from .cost_model import AllocFnKind, CostModel
from .errors import ModelMismatchError, SpanStateError
from .markers import MarkerSpan


@dataclass(frozen=True)
class MarkerChurn:
    """Aggregated churn for one span, or for one phase merged across spans.

    Per-thread records carry ``thread_id`` and ``span_id``; merged records
    carry neither. ``overflow`` means the event ring evicted entries during
    the interval (counters stay exact regardless); ``auto_closed`` means the
    span was still open when its recorder sealed.
    """

    name: str
    cost: float
    calls: dict[AllocFnKind, int] = field(default_factory=dict)
    bytes_allocated: int = 0
    bytes_freed: int = 0
    overflow: bool = False
    auto_closed: bool = False
    thread_id: str | None = None
    span_id: str | None = None

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())


def span_churn(span: MarkerSpan, model: CostModel) -> MarkerChurn:
    """Cost a closed span from its endpoint snapshots.

    The cost is the running-cost accumulator delta, which equals the sum of
    per-event costs over the span. ``model`` must be the model the events
    were recorded under; re-costing under a different model would need the
    event log, not the accumulator.
    """
    if not span.closed:
        raise SpanStateError(f"span {span.span_id!r} ({span.name!r}) is still open")
    session_model = span.recorder.model
    if model != session_model:
        raise ModelMismatchError(
            f"span {span.span_id!r} was recorded under model "
            f"{session_model.model_version!r}, not {model.model_version!r}"
        )
    start = span.start_snapshot
    end = span.end_snapshot
    start_calls = start.calls()
    calls = {kind: n - start_calls[kind] for kind, n in end.calls().items()}
    return MarkerChurn(
        name=span.name,
        cost=end.cost - start.cost,
        calls=calls,
        bytes_allocated=end.bytes_allocated - start.bytes_allocated,
        bytes_freed=end.bytes_freed - start.bytes_freed,
        overflow=end.overflow_count > start.overflow_count,
        auto_closed=span.auto_closed,
        thread_id=span.thread_id,
        span_id=span.span_id,
    )


def merge_threads(parts: list[MarkerChurn]) -> MarkerChurn:
    """Merge same-named churn records into one phase total.

    Parts may come from different threads or from repeated spans on one
    thread; they are summed, not averaged. Costs are added in a fixed order
    (thread_id, then span_id) so the result does not depend on input order.
    Flags are OR'd; the merged record carries no thread attribution.
    """
    if not parts:
        raise ValueError("cannot merge an empty list of churn records")
    name = parts[0].name
    for part in parts[1:]:
        if part.name != name:
            raise ValueError(f"cannot merge {part.name!r} into {name!r}")
    ordered = sorted(parts, key=lambda p: (p.thread_id or "", p.span_id or ""))
    cost = 0.0
    calls = {kind: 0 for kind in AllocFnKind}
    bytes_allocated = 0
    bytes_freed = 0
    overflow = False
    auto_closed = False
    for part in ordered:
        cost += part.cost
        for kind, n in part.calls.items():
            calls[kind] += n
        bytes_allocated += part.bytes_allocated
        bytes_freed += part.bytes_freed
        overflow = overflow or part.overflow
        auto_closed = auto_closed or part.auto_closed
    return MarkerChurn(
        name=name,
        cost=cost,
        calls=calls,
        bytes_allocated=bytes_allocated,
        bytes_freed=bytes_freed,
        overflow=overflow,
        auto_closed=auto_closed,
    )
