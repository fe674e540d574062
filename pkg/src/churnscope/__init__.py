"""churnscope: allocator-churn profiling between markers, and report diffing.

The toolkit wraps the four standard allocator entry points, records every
call into the calling thread's recorder, costs named marker spans with a
weighted log2 byte rule, and writes canonical per-build reports that a CI
job can diff to detect and rank performance regressions.
"""

from .aggregation import MarkerChurn, merge_threads, span_churn
from .cost_model import (
    AllocFnKind,
    CostModel,
    DEFAULT_WEIGHTS,
    default_cost_model,
    event_cost,
    load_cost_model,
    validate_cost_model,
)
from .errors import (
    ChurnscopeError,
    CostModelError,
    ModelMismatchError,
    RecorderSealedError,
    RecorderStateError,
    ReportError,
    SpanStateError,
    ThreadAffinityError,
    WorkloadError,
)
from .markers import MarkerSpan, begin_marker, end_marker, marker
from .recorder import (
    AllocEvent,
    BumpAllocator,
    CounterSnapshot,
    DEFAULT_RING_CAPACITY,
    RING_CAPACITY_ENV,
    ThreadRecorder,
    TracingAllocator,
)
from .report import (
    ChurnDelta,
    ChurnReport,
    RegressionVerdict,
    Thresholds,
    diff_reports,
    parse_report,
    parse_verdict,
    rank_regressions,
    serialize_report,
    serialize_verdict,
)
from .session import RecordingSession, utc_timestamp
from .workloads import SplitMix64, WORKLOADS, WorkloadSpec, run_workload, workload_names

__version__ = "0.1.0"

__all__ = [
    "AllocEvent",
    "AllocFnKind",
    "BumpAllocator",
    "ChurnDelta",
    "ChurnReport",
    "ChurnscopeError",
    "CostModel",
    "CostModelError",
    "CounterSnapshot",
    "DEFAULT_RING_CAPACITY",
    "DEFAULT_WEIGHTS",
    "MarkerChurn",
    "MarkerSpan",
    "ModelMismatchError",
    "RecorderSealedError",
    "RecorderStateError",
    "RecordingSession",
    "RegressionVerdict",
    "ReportError",
    "RING_CAPACITY_ENV",
    "SpanStateError",
    "SplitMix64",
    "ThreadAffinityError",
    "ThreadRecorder",
    "Thresholds",
    "TracingAllocator",
    "WORKLOADS",
    "WorkloadError",
    "WorkloadSpec",
    "begin_marker",
    "default_cost_model",
    "diff_reports",
    "end_marker",
    "event_cost",
    "load_cost_model",
    "marker",
    "merge_threads",
    "parse_report",
    "parse_verdict",
    "rank_regressions",
    "run_workload",
    "serialize_report",
    "serialize_verdict",
    "span_churn",
    "utc_timestamp",
    "validate_cost_model",
    "workload_names",
]
