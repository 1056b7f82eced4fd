"""Command-line surface: train, embed, rank, eval, ablate, and synth.

Every command writes its output files atomically (temp file plus rename),
echoes the governing seed into output headers, and prints numbers with fixed
6-decimal formatting, so identical seeds and inputs reproduce outputs byte for
byte. Usage errors exit with status 2 (argparse's convention); runtime
failures print one machine-parseable line to stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import sys

from . import checkpoint as ckpt
from . import data, evaluation, inference, trainer
from .errors import TextMetricError

DEFAULT_SEED = 42


def _write_text_atomic(path: str, text: str) -> None:
    ckpt.atomic_write_bytes(path, text.encode("utf-8"))


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = data.load_synthetic_spec(args.spec)
    items, annotations = data.generate_synthetic(spec)
    buf = io.StringIO()
    data.write_catalog(items, buf, seed=spec.seed)
    _write_text_atomic(args.out_data, buf.getvalue())
    buf = io.StringIO()
    data.write_annotations(annotations, buf, seed=spec.seed)
    _write_text_atomic(args.out_annotations, buf.getvalue())
    print(f"wrote {len(items)} items and {len(annotations)} annotation entries (seed={spec.seed})")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = trainer.load_train_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    items = data.load_catalog(args.data)
    metrics_path = args.out + ".metrics.csv"
    report = trainer.train(items, config, checkpoint_path=args.out, metrics_path=metrics_path)
    final = report.series[-1].total if report.series else float("nan")
    print(
        f"trained {config.steps} steps in {report.wall_seconds:.1f}s "
        f"(final total loss {final:.6f}); checkpoint {args.out}, metrics {metrics_path}"
    )
    return 0


def _cmd_embed(args: argparse.Namespace) -> int:
    model, tokenizer, seed = ckpt.load_checkpoint(args.checkpoint)
    items = data.load_catalog(args.data)
    catalog = inference.embed_catalog(items, model, tokenizer)
    buf = io.StringIO()
    inference.write_embeddings(catalog, buf, seed=seed)
    _write_text_atomic(args.out, buf.getvalue())
    note = f", truncated {catalog.truncated} texts" if catalog.truncated else ""
    print(f"embedded {len(catalog)} items to {args.out}{note}")
    return 0


def _cmd_rank(args: argparse.Namespace) -> int:
    embeddings, seed = inference.read_embeddings(args.embeddings)
    if args.all:
        rankings = inference.rank_all(embeddings)
    else:
        rankings = {args.source: inference.rank(args.source, embeddings)}
    buf = io.StringIO()
    inference.write_rankings_csv(rankings, buf, seed=seed)
    _write_text_atomic(args.out, buf.getvalue())
    print(f"ranked {len(rankings)} sources to {args.out}")
    return 0


def _parse_ks(raw: str) -> list[int]:
    try:
        ks = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise TextMetricError(f"--k expects comma-separated integers, got {raw!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise TextMetricError(f"--k values must be positive integers, got {raw!r}")
    return ks


def _cmd_eval(args: argparse.Namespace) -> int:
    ks = _parse_ks(args.k)
    rankings = inference.read_rankings_csv(args.rankings)
    known_ids = set(rankings)
    for order in rankings.values():
        known_ids.update(order)
    annotations = data.load_annotations(args.annotations, known_ids)
    report = evaluation.evaluate(rankings, annotations, ks)
    header = ",".join(["mpr", "mrr"] + [f"hr{k}" for k in ks])
    values = ",".join(
        [f"{report.mpr:.6f}", f"{report.mrr:.6f}"] + [f"{report.hr_at[k]:.6f}" for k in ks]
    )
    print(header)
    print(values)
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    base = trainer.load_train_config(args.config)
    items = data.load_catalog(args.data)
    annotations = data.load_annotations(args.annotations, items)
    configs = evaluation.ablation_configs(base)
    results = evaluation.compare_variants(items, annotations, configs, ks=(10, 100))
    buf = io.StringIO()
    evaluation.write_report_csv(results, buf, ks=(10, 100), seed=base.seed)
    _write_text_atomic(args.out, buf.getvalue())
    failures = [r.label for r in results if r.error]
    print(f"wrote {len(results)} variant rows to {args.out}"
          + (f" ({len(failures)} failed: {', '.join(failures)})" if failures else ""))
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textmetric",
        description="Train, apply, and evaluate an angular-metric text similarity model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config and a catalog")
    p.add_argument("--config", required=True, help="JSON training config")
    p.add_argument("--data", required=True, help="catalog file")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--seed", type=int, default=None,
                   help=f"override the config seed (config default {DEFAULT_SEED})")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("embed", help="embed a catalog with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="catalog file")
    p.add_argument("--out", required=True, help="embeddings output path")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("rank", help="rank candidates for one source or all sources")
    p.add_argument("--embeddings", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--source", help="source item id")
    group.add_argument("--all", action="store_true", help="rank every item as source")
    p.add_argument("--out", required=True, help="rankings CSV output path")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("eval", help="score rankings against annotations")
    p.add_argument("--rankings", required=True, help="rankings CSV")
    p.add_argument("--annotations", required=True, help="annotation file")
    p.add_argument("--k", default="10,100", help="comma-separated hit-ratio cutoffs")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate every loss variant")
    p.add_argument("--config", required=True, help="base JSON training config")
    p.add_argument("--data", required=True, help="catalog file")
    p.add_argument("--annotations", required=True, help="annotation file")
    p.add_argument("--out", required=True, help="variant report CSV output path")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("synth", help="generate a clustered synthetic corpus")
    p.add_argument("--spec", required=True, help="JSON synthetic-corpus spec")
    p.add_argument("--out-data", required=True, help="catalog output path")
    p.add_argument("--out-annotations", required=True, help="annotation output path")
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TextMetricError, OSError, KeyError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
