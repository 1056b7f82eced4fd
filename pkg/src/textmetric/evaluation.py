"""Ground-truth-driven ranking metrics and the variant-comparison harness.

All three metrics consume full rankings (an ordered candidate id list per
source) and an annotation set. Conventions, pinned here because they vary
across the literature:

- Mean percentile rank scores each (source, relevant item) pair as
  (M - r)/(M - 1) for 1-based rank r among M candidates, then averages over
  pairs. A perfect ranker with a single relevant item scores 1.0; a uniformly
  random ranker scores 0.5.
- Mean reciprocal rank looks at the first relevant item per source.
- Hit ratio at k counts (source, relevant item) pairs, not sources.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import IO, Mapping, Sequence

from .data import AnnotationSet, Item
from .errors import ContractViolationError, EvaluationError
from .trainer import LossVariant, TrainConfig, Trainer

Rankings = Mapping[str, Sequence[str]]


@dataclass(frozen=True)
class MetricReport:
    mpr: float
    mrr: float
    hr_at: dict[int, float]
    n_sources: int


def _candidate_ids(ranking) -> list[str]:
    # Accepts plain id sequences or (id, score) style entries.
    return [r if isinstance(r, str) else r[0] for r in ranking]


def _rank_positions(rankings: Rankings, annotations: AnnotationSet):
    """Yield (source_id, relevant_id, 1-based rank, n_candidates) per pair."""
    if not len(annotations):
        raise EvaluationError("annotation set is empty; nothing to evaluate")
    for entry in annotations.entries:
        if entry.source_id not in rankings:
            raise EvaluationError(f"no ranking supplied for source {entry.source_id!r}")
        order = _candidate_ids(rankings[entry.source_id])
        if len(order) < 2:
            raise EvaluationError(
                f"source {entry.source_id!r} has {len(order)} candidates; need at least 2"
            )
        position = {cid: i + 1 for i, cid in enumerate(order)}
        for rid in entry.similar_ids:
            if rid not in position:
                raise EvaluationError(
                    f"annotated item {rid!r} is missing from the ranking of {entry.source_id!r}"
                )
            yield entry.source_id, rid, position[rid], len(order)


def mean_percentile_rank(rankings: Rankings, annotations: AnnotationSet) -> float:
    """Mean over annotated pairs of (M - r)/(M - 1); higher is better."""
    total = 0.0
    count = 0
    for _, _, r, m in _rank_positions(rankings, annotations):
        total += (m - r) / (m - 1)
        count += 1
    return total / count


def mean_reciprocal_rank(rankings: Rankings, annotations: AnnotationSet) -> float:
    """Mean over sources of 1/(rank of the first relevant item)."""
    best: dict[str, int] = {}
    for source_id, _, r, _ in _rank_positions(rankings, annotations):
        if source_id not in best or r < best[source_id]:
            best[source_id] = r
    return sum(1.0 / r for r in best.values()) / len(best)


def hit_ratio_at_k(rankings: Rankings, annotations: AnnotationSet, k: int) -> float:
    """Fraction of annotated pairs whose item lands in the top k."""
    if k < 1:
        raise ContractViolationError(f"k must be >= 1, got {k}")
    hits = 0
    count = 0
    for _, _, r, _ in _rank_positions(rankings, annotations):
        hits += int(r <= k)
        count += 1
    return hits / count


def evaluate(rankings: Rankings, annotations: AnnotationSet, ks: Sequence[int] = (10, 100)) -> MetricReport:
    """All metrics in one pass-shaped report."""
    return MetricReport(
        mpr=mean_percentile_rank(rankings, annotations),
        mrr=mean_reciprocal_rank(rankings, annotations),
        hr_at={k: hit_ratio_at_k(rankings, annotations, k) for k in ks},
        n_sources=len(annotations),
    )


# ---------------------------------------------------------------------------
# Variant comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariantResult:
    label: str
    report: MetricReport | None
    error: str | None = None


def compare_variants(
    items: Sequence[Item],
    annotations: AnnotationSet,
    configs: Sequence[TrainConfig],
    ks: Sequence[int] = (10, 100),
) -> list[VariantResult]:
    """Train, embed, rank, and evaluate one row per config.

    A failing row records its error and leaves the remaining rows to run; all
    rows see the same items and annotations.
    """
    from .inference import embed_catalog, rank_all

    results: list[VariantResult] = []
    for config in configs:
        label = config.loss_variant.value
        try:
            trainer = Trainer(items, config)
            trainer.run()
            catalog = embed_catalog(items, trainer.model, trainer.tokenizer)
            rankings = rank_all(catalog)
            report = evaluate(rankings, annotations, ks)
            results.append(VariantResult(label=label, report=report))
        except Exception as exc:  # noqa: BLE001 - row isolation is the contract
            results.append(VariantResult(label=label, report=None, error=str(exc)))
    return results


def ablation_configs(base: TrainConfig) -> list[TrainConfig]:
    """The full method plus every single-ingredient variant of it."""
    return [replace(base, loss_variant=v) for v in LossVariant]


def write_report_csv(results: Sequence[VariantResult], f: IO[str],
                     ks: Sequence[int] = (10, 100), seed: int | None = None) -> None:
    """One row per variant: variant,mpr,mrr,hr<k>... Failed rows carry 'error'."""
    if seed is not None:
        f.write(f"# seed={seed}\n")
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(["variant", "mpr", "mrr"] + [f"hr{k}" for k in ks])
    for result in results:
        if result.report is None:
            writer.writerow([result.label] + ["error"] * (2 + len(ks)))
            continue
        row = [result.label, f"{result.report.mpr:.6f}", f"{result.report.mrr:.6f}"]
        row += [f"{result.report.hr_at[k]:.6f}" for k in ks]
        writer.writerow(row)
