"""Weighted log-cost model for allocator calls.

Every churn figure in the system is a sum of per-call costs computed here:
a call of kind ``k`` touching ``b`` bytes costs ``weight(k) * log2(max(b, 1))``.
The max-with-1 rule keeps zero-byte calls (``malloc(0)``, freeing a null
token) at cost zero while still letting them count as calls.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CostModelError


class AllocFnKind(enum.Enum):
    """The four standard allocator entry points the toolkit measures."""

    MALLOC = "malloc"
    CALLOC = "calloc"
    REALLOC = "realloc"
    FREE = "free"


DEFAULT_MODEL_VERSION = "paper-v1"

DEFAULT_WEIGHTS: dict[AllocFnKind, float] = {
    AllocFnKind.CALLOC: 2.0,
    AllocFnKind.FREE: 1.0,
    AllocFnKind.MALLOC: 1.0,
    AllocFnKind.REALLOC: 3.0,
}

# Keys accepted in a cost-model override file, beside model_version.
_FILE_KEYS = {kind.value: kind for kind in AllocFnKind}


@dataclass(frozen=True)
class CostModel:
    """Immutable per-kind weight table plus a version label.

    Reports embed the full descriptor (weights and version); two reports are
    only comparable when their descriptors are equal.
    """

    weights: dict[AllocFnKind, float] = field(default_factory=dict)
    model_version: str = DEFAULT_MODEL_VERSION

    def __post_init__(self) -> None:
        normalized = {k: float(v) for k, v in self.weights.items()}
        object.__setattr__(self, "weights", normalized)

    def weight(self, kind: AllocFnKind) -> float:
        return self.weights[kind]

    def scaled(self, factor: float, model_version: str | None = None) -> "CostModel":
        """Return a copy with every weight multiplied by ``factor``."""
        version = model_version or f"{self.model_version}-x{factor:g}"
        return CostModel({k: w * factor for k, w in self.weights.items()}, version)


def default_cost_model() -> CostModel:
    """The shipped default: calloc 2, free 1, malloc 1, realloc 3."""
    return CostModel(dict(DEFAULT_WEIGHTS), DEFAULT_MODEL_VERSION)


def event_cost(model: CostModel, kind: AllocFnKind, nbytes: int) -> float:
    """Cost of one allocator call: ``weight(kind) * log2(max(nbytes, 1))``."""
    if nbytes < 0:
        raise ValueError(f"byte count must be nonnegative, got {nbytes}")
    if nbytes <= 1:
        return 0.0
    return model.weights[kind] * math.log2(nbytes)


def validate_cost_model(model: CostModel) -> list[str]:
    """Check a model and return a list of violations, empty when valid.

    Never raises; callers that need an exception wrap the result.
    """
    violations: list[str] = []
    for key in model.weights:
        if not isinstance(key, AllocFnKind):
            violations.append(f"unknown weight key {key!r}")
    for kind in AllocFnKind:
        if kind not in model.weights:
            violations.append(f"missing weight for {kind.value}")
            continue
        w = model.weights[kind]
        if not math.isfinite(w):
            violations.append(f"weight for {kind.value} is not finite: {w!r}")
        elif w < 0:
            violations.append(f"weight for {kind.value} is negative: {w!r}")
    if not isinstance(model.model_version, str) or not model.model_version:
        violations.append("model_version must be a nonempty string")
    return violations


def load_cost_model(path: str | Path) -> CostModel:
    """Load a cost model from a flat key/value override file.

    The format is one ``key = value`` pair per line with keys ``malloc``,
    ``calloc``, ``realloc``, ``free`` (decimal weights) and an optional
    ``model_version`` (defaults to "custom"). Blank lines and lines starting
    with ``#`` are ignored.
    """
    path = Path(path)
    weights: dict[AllocFnKind, float] = {}
    version = "custom"
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CostModelError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "model_version":
            if not value:
                raise CostModelError(f"{path}:{lineno}: model_version must not be empty")
            version = value
        elif key in _FILE_KEYS:
            kind = _FILE_KEYS[key]
            if kind in weights:
                raise CostModelError(f"{path}:{lineno}: duplicate weight for {key}")
            try:
                weights[kind] = float(value)
            except ValueError:
                raise CostModelError(
                    f"{path}:{lineno}: weight for {key} is not a number: {value!r}"
                ) from None
        else:
            raise CostModelError(f"{path}:{lineno}: unknown key {key!r}")
    model = CostModel(weights, version)
    violations = validate_cost_model(model)
    if violations:
        raise CostModelError(f"{path}: invalid cost model: " + "; ".join(violations))
    return model
