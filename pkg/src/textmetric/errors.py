"""Exception hierarchy shared by all textmetric modules."""

from __future__ import annotations


class TextMetricError(Exception):
    """Base class for every error raised by this package."""


class DegenerateVectorError(TextMetricError):
    """A zero-norm vector reached a cosine or angular computation.

    Pooled embeddings of real token sequences are never exactly zero, so this
    always signals an upstream pooling or initialization bug rather than a
    condition to silently absorb.
    """


class ContractViolationError(TextMetricError):
    """An argument broke a documented shape, length, or range contract."""


class MiningImpossibleError(TextMetricError):
    """Negative mining was requested on a batch too small to contain one."""


class IngestionError(TextMetricError):
    """A catalog, annotation, or config file failed validation.

    Messages carry the offending location (line number, key, or id) so bad
    records can be found without a debugger.
    """


class EvaluationError(TextMetricError):
    """Ground-truth annotations are inconsistent with the supplied rankings."""


class TrainingDivergenceError(TextMetricError):
    """A training step produced a non-finite loss."""

    def __init__(self, step: int, breakdown) -> None:
        super().__init__(f"non-finite loss at step {step}: {breakdown}")
        self.step = step
        self.breakdown = breakdown
