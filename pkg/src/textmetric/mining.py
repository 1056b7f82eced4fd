"""In-batch negative selection for triplet construction.

A batch carries two pooled embeddings per item (one per textual element). For
each anchor the candidate pool is every element of every other item, laid out
in an interleaved order: element 2*j is item j's anchor-side embedding and
element 2*j + 1 its positive-side embedding. Both mining functions return flat
element indices into that pool; ``item_of`` recovers the item index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, MiningImpossibleError
from .geometry import ANGULAR, DistanceMetric


@dataclass(frozen=True)
class BatchEmbeddings:
    """Parallel anchor/positive embeddings for one batch of items.

    Row i of ``anchors`` and row i of ``positives`` are the two textual
    elements of the same catalog item ``item_ids[i]``.
    """

    anchors: np.ndarray
    positives: np.ndarray
    item_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        a = np.asarray(self.anchors, dtype=np.float64)
        p = np.asarray(self.positives, dtype=np.float64)
        if a.ndim != 2 or p.shape != a.shape:
            raise ContractViolationError(
                f"anchors and positives must be equal-shape (n, d) matrices, got {a.shape} and {p.shape}"
            )
        if len(self.item_ids) != a.shape[0]:
            raise ContractViolationError("one item id is required per embedding row")
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "positives", p)

    def __len__(self) -> int:
        return self.anchors.shape[0]

    def elements(self) -> np.ndarray:
        """All 2n element embeddings, interleaved (anchor 0, positive 0, anchor 1, ...)."""
        n, d = self.anchors.shape
        out = np.empty((2 * n, d))
        out[0::2] = self.anchors
        out[1::2] = self.positives
        return out


def item_of(flat_index: int) -> int:
    """Item index owning a flat element index."""
    return int(flat_index) // 2


def _require_minable(batch: BatchEmbeddings) -> None:
    if len(batch) < 2:
        raise MiningImpossibleError(
            f"negative mining needs at least 2 items in the batch, got {len(batch)}"
        )


def mine_hard_negatives(batch: BatchEmbeddings, metric: DistanceMetric = ANGULAR) -> np.ndarray:
    """Hardest in-batch negative per anchor: the nearest candidate element.

    Candidates for anchor i are all element embeddings except item i's own
    anchor and positive. Ties break toward the lowest flat index, so results
    are deterministic.
    """
    _require_minable(batch)
    n = len(batch)
    dists = metric.pairwise(batch.anchors, batch.elements())
    own = 2 * np.arange(n)
    dists[np.arange(n), own] = np.inf
    dists[np.arange(n), own + 1] = np.inf
    return np.argmin(dists, axis=1)


def sample_random_negatives(batch: BatchEmbeddings, rng: np.random.Generator) -> np.ndarray:
    """Uniform random candidate element per anchor, excluding the anchor's own item.

    Draws one uniform index per anchor, so a shared generator advances the
    same way regardless of batch content; fixed seed, fixed indices.
    """
    _require_minable(batch)
    n = len(batch)
    draws = rng.integers(0, 2 * n - 2, size=n)
    # Skip over the anchor's own two elements, which sit at 2i and 2i + 1.
    own_start = 2 * np.arange(n)
    return np.where(draws < own_start, draws, draws + 2)
