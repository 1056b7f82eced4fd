"""Catalog embedding, pairwise similarity scoring, and full-catalog ranking.

Two items are scored by summing the angular distances between their title
embeddings and between their description embeddings; lower means more similar.
Ranking a source sorts every other item by that score, ascending, with ties
broken by item id so output order is deterministic.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass
from typing import IO, Mapping, NamedTuple, Sequence

import numpy as np

from .data import UNK_ID, Item, Tokenizer
from .encoder import Encoder, TokenSequence
from .errors import ContractViolationError, IngestionError
from .geometry import angular_distance

logger = logging.getLogger(__name__)

EMBEDDINGS_SCHEMA = "embeddings"
EMBEDDINGS_VERSION = 1


@dataclass(frozen=True)
class ItemEmbedding:
    """Pooled embeddings of an item's two textual elements."""

    item_id: str
    title_vec: np.ndarray
    desc_vec: np.ndarray


class RankedCandidate(NamedTuple):
    candidate_id: str
    score: float


@dataclass(frozen=True)
class CatalogEmbeddings:
    """Embeddings for a whole catalog plus a truncation tally.

    ``truncated`` counts texts that exceeded the model's maximum sequence
    length and were cut to fit; inference never sees a masked token.
    """

    embeddings: tuple[ItemEmbedding, ...]
    truncated: int

    def __iter__(self):
        return iter(self.embeddings)

    def __len__(self) -> int:
        return len(self.embeddings)


def _inference_sequence(tokenizer: Tokenizer, text: str, max_len: int) -> tuple[TokenSequence, bool]:
    ids = tokenizer.encode(text)
    if not ids:
        ids = [UNK_ID]
    truncated = len(ids) > max_len
    return TokenSequence.from_ids(ids[:max_len]), truncated


def embed_catalog(
    items: Sequence[Item], model: Encoder, tokenizer: Tokenizer, batch_size: int = 32
) -> CatalogEmbeddings:
    """Embed both elements of every item with masking off; deterministic."""
    max_len = model.config.max_seq_len
    sequences: list[TokenSequence] = []
    truncated = 0
    for item in items:
        for text in (item.title, item.description):
            seq, cut = _inference_sequence(tokenizer, text, max_len)
            sequences.append(seq)
            truncated += int(cut)
    pooled_rows: list[np.ndarray] = []
    for start in range(0, len(sequences), batch_size):
        enc = model.encode_batch(sequences[start : start + batch_size], compute_mlm=False)
        pooled_rows.extend(enc.pooled)
    embeddings = tuple(
        ItemEmbedding(item_id=item.item_id, title_vec=pooled_rows[2 * i], desc_vec=pooled_rows[2 * i + 1])
        for i, item in enumerate(items)
    )
    if truncated:
        logger.warning("truncated %d over-length texts to %d tokens", truncated, max_len)
    return CatalogEmbeddings(embeddings=embeddings, truncated=truncated)


def score(s: ItemEmbedding, c: ItemEmbedding) -> float:
    """Summed angular distance between the two items' elements, in [0, 2]."""
    if s.title_vec.shape != c.title_vec.shape or s.desc_vec.shape != c.desc_vec.shape:
        raise ContractViolationError(
            f"embedding dimension mismatch between {s.item_id!r} and {c.item_id!r}"
        )
    return angular_distance(s.title_vec, c.title_vec) + angular_distance(s.desc_vec, c.desc_vec)


def rank(source_id: str, catalog: Sequence[ItemEmbedding] | CatalogEmbeddings) -> list[RankedCandidate]:
    """All candidates except the source, ascending by score, ties by id."""
    embeddings = list(catalog)
    by_id = {e.item_id: e for e in embeddings}
    if source_id not in by_id:
        raise KeyError(f"unknown source_id {source_id!r}")
    source = by_id[source_id]
    scored = [
        RankedCandidate(e.item_id, score(source, e)) for e in embeddings if e.item_id != source_id
    ]
    scored.sort(key=lambda rc: (rc.score, rc.candidate_id))
    return scored


def rank_all(catalog: Sequence[ItemEmbedding] | CatalogEmbeddings) -> dict[str, list[RankedCandidate]]:
    """Rankings for every item as source, in catalog order."""
    embeddings = list(catalog)
    return {e.item_id: rank(e.item_id, embeddings) for e in embeddings}


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def write_embeddings(catalog: CatalogEmbeddings | Sequence[ItemEmbedding], f: IO[str],
                     seed: int | None = None) -> None:
    """Line-delimited JSON embeddings; vectors keep full float precision so a
    round trip reproduces scores exactly."""
    embeddings = list(catalog)
    dim = int(embeddings[0].title_vec.shape[0]) if embeddings else 0
    header: dict = {"schema": EMBEDDINGS_SCHEMA, "version": EMBEDDINGS_VERSION, "dim": dim}
    if seed is not None:
        header["seed"] = seed
    f.write(json.dumps(header, sort_keys=True) + "\n")
    for e in embeddings:
        record = {
            "item_id": e.item_id,
            "title_vec": [float(x) for x in e.title_vec],
            "desc_vec": [float(x) for x in e.desc_vec],
        }
        f.write(json.dumps(record, sort_keys=True) + "\n")


def read_embeddings(path: str | os.PathLike) -> tuple[list[ItemEmbedding], int | None]:
    """Read an embeddings file; returns (embeddings, seed echoed at write time)."""
    path = os.fspath(path)
    embeddings: list[ItemEmbedding] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        first = f.readline()
        if not first:
            raise IngestionError(f"{path}: missing schema header line")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{path}: line 1: malformed header: {exc}") from exc
        if not isinstance(header, dict) or header.get("schema") != EMBEDDINGS_SCHEMA:
            raise IngestionError(f"{path}: line 1: expected an embeddings file")
        if header.get("version") != EMBEDDINGS_VERSION:
            raise IngestionError(f"{path}: line 1: unsupported version {header.get('version')!r}")
        dim = header.get("dim")
        seed = header.get("seed")
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}: line {lineno}: malformed record: {exc}") from exc
            try:
                item_id = record["item_id"]
                title_vec = np.asarray(record["title_vec"], dtype=np.float64)
                desc_vec = np.asarray(record["desc_vec"], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestionError(f"{path}: line {lineno}: bad embedding record: {exc}") from exc
            if title_vec.shape != (dim,) or desc_vec.shape != (dim,):
                raise IngestionError(f"{path}: line {lineno}: vector dimension != header dim {dim}")
            if item_id in seen:
                raise IngestionError(f"{path}: line {lineno}: duplicate item_id {item_id!r}")
            seen.add(item_id)
            embeddings.append(ItemEmbedding(item_id=item_id, title_vec=title_vec, desc_vec=desc_vec))
    return embeddings, seed


def write_rankings_csv(rankings: Mapping[str, Sequence[RankedCandidate]], f: IO[str],
                       seed: int | None = None) -> None:
    """CSV rows source_id,candidate_id,rank,score with a seed comment line."""
    if seed is not None:
        f.write(f"# seed={seed}\n")
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(["source_id", "candidate_id", "rank", "score"])
    for source_id, candidates in rankings.items():
        for position, rc in enumerate(candidates, start=1):
            writer.writerow([source_id, rc.candidate_id, position, f"{rc.score:.6f}"])


def read_rankings_csv(path: str | os.PathLike) -> dict[str, list[str]]:
    """Candidate ids per source, in rank order, from a rankings CSV."""
    path = os.fspath(path)
    rankings: dict[str, list[str]] = {}
    with open(path, encoding="utf-8", newline="") as f:
        plain = [line for line in f if not line.startswith("#")]
    reader = csv.reader(io.StringIO("".join(plain)))
    header = next(reader, None)
    if header != ["source_id", "candidate_id", "rank", "score"]:
        raise IngestionError(f"{path}: expected a rankings CSV header, got {header}")
    for row in reader:
        if not row:
            continue
        if len(row) != 4:
            raise IngestionError(f"{path}: malformed rankings row {row}")
        source_id, candidate_id, rank_str, _ = row
        order = rankings.setdefault(source_id, [])
        try:
            position = int(rank_str)
        except ValueError:
            raise IngestionError(f"{path}: non-integer rank in row {row}") from None
        if position != len(order) + 1:
            raise IngestionError(
                f"{path}: ranks for source {source_id!r} are not consecutive from 1"
            )
        order.append(candidate_id)
    return rankings
