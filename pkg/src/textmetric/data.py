"""Catalog and annotation ingestion, a deterministic word-level tokenizer, and
a synthetic clustered-corpus generator for desk-scale experiments.

File formats are line-delimited JSON (UTF-8). The first line of every file is
a schema header, e.g. ``{"schema": "catalog", "version": 1}``; it is required
and checked so files cannot be silently swapped. Records follow one per line:

    catalog:     {"item_id": ..., "title": ..., "description": ...}
    annotations: {"source_id": ..., "similar_ids": [...]}
"""

from __future__ import annotations

import json
import os
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractViolationError, IngestionError

# Reserved token ids. Padding never enters pooling or attention, the mask token
# replaces selected positions during masked training, and unknown absorbs
# out-of-vocabulary words.
PAD_ID = 0
MASK_ID = 1
UNK_ID = 2
N_SPECIAL = 3

CATALOG_SCHEMA = "catalog"
ANNOTATIONS_SCHEMA = "annotations"
SCHEMA_VERSION = 1

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class Item:
    """A catalog entry: two textual elements describing one item."""

    item_id: str
    title: str
    description: str


@dataclass(frozen=True)
class AnnotationEntry:
    source_id: str
    similar_ids: tuple[str, ...]


@dataclass(frozen=True)
class AnnotationSet:
    """Expert ground truth: per source item, the ids judged similar to it."""

    entries: tuple[AnnotationEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[str, tuple[str, ...]]:
        return {e.source_id: e.similar_ids for e in self.entries}


def split_words(text: str) -> list[str]:
    """Compatibility-fold, lowercase, then split on non-alphanumeric runs."""
    folded = unicodedata.normalize("NFKC", text).casefold()
    return _WORD_RE.findall(folded)


class Tokenizer:
    """Maps words to integer ids via a frequency-built vocabulary.

    Ids 0..2 are reserved (pad, mask, unknown); regular words occupy ids 3
    and up. Out-of-vocabulary words map to the unknown id, so encoding never
    fails. Deterministic given the word list.
    """

    def __init__(self, words: Sequence[str]) -> None:
        if len(set(words)) != len(words):
            raise ContractViolationError("tokenizer word list contains duplicates")
        self.words = tuple(words)
        self._ids = {w: N_SPECIAL + i for i, w in enumerate(self.words)}

    @classmethod
    def fit(cls, texts: Iterable[str], vocab_size: int) -> "Tokenizer":
        """Build a vocabulary of at most ``vocab_size`` ids (specials included).

        Words are ranked by frequency, ties broken alphabetically, so the same
        corpus always yields the same vocabulary.
        """
        if vocab_size <= N_SPECIAL:
            raise ContractViolationError(f"vocab_size must exceed {N_SPECIAL}, got {vocab_size}")
        counts: Counter[str] = Counter()
        for text in texts:
            counts.update(split_words(text))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([w for w, _ in ranked[: vocab_size - N_SPECIAL]])

    @property
    def vocab_size(self) -> int:
        return N_SPECIAL + len(self.words)

    def encode(self, text: str) -> list[int]:
        return [self._ids.get(w, UNK_ID) for w in split_words(text)]


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------


def _read_header(line: str | None, expected_schema: str, path: str) -> None:
    if line is None:
        raise IngestionError(f"{path}: missing schema header line")
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}: line 1: malformed schema header: {exc}") from exc
    if not isinstance(header, dict) or header.get("schema") != expected_schema:
        raise IngestionError(
            f"{path}: line 1: expected schema {expected_schema!r}, got {header!r}"
        )
    if header.get("version") != SCHEMA_VERSION:
        raise IngestionError(
            f"{path}: line 1: unsupported {expected_schema} version {header.get('version')!r}"
        )


def _records(f: IO[str], expected_schema: str, path: str):
    first = f.readline()
    _read_header(first if first != "" else None, expected_schema, path)
    for lineno, line in enumerate(f, start=2):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{path}: line {lineno}: malformed record: {exc}") from exc
        if not isinstance(record, dict):
            raise IngestionError(f"{path}: line {lineno}: record is not an object")
        yield lineno, record


def _required_str(record: dict, key: str, lineno: int, path: str) -> str:
    value = record.get(key)
    if not isinstance(value, str):
        raise IngestionError(f"{path}: line {lineno}: missing or non-string field {key!r}")
    return value


def load_catalog(path: str | os.PathLike) -> list[Item]:
    """Read a catalog file, rejecting bad records with their line numbers."""
    path = os.fspath(path)
    items: list[Item] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, record in _records(f, CATALOG_SCHEMA, path):
            extra = set(record) - {"item_id", "title", "description"}
            if extra:
                raise IngestionError(f"{path}: line {lineno}: unknown fields {sorted(extra)}")
            item_id = _required_str(record, "item_id", lineno, path)
            title = _required_str(record, "title", lineno, path).strip()
            description = _required_str(record, "description", lineno, path).strip()
            if not item_id:
                raise IngestionError(f"{path}: line {lineno}: empty item_id")
            if not title or not description:
                raise IngestionError(
                    f"{path}: line {lineno}: item {item_id!r} has an empty textual element"
                )
            if item_id in seen:
                raise IngestionError(
                    f"{path}: line {lineno}: duplicate item_id {item_id!r} "
                    f"(first seen on line {seen[item_id]})"
                )
            seen[item_id] = lineno
            items.append(Item(item_id=item_id, title=title, description=description))
    return items


def write_catalog(items: Sequence[Item], f: IO[str], seed: int | None = None) -> None:
    header: dict = {"schema": CATALOG_SCHEMA, "version": SCHEMA_VERSION}
    if seed is not None:
        header["seed"] = seed
    f.write(json.dumps(header, sort_keys=True) + "\n")
    for item in items:
        record = {"item_id": item.item_id, "title": item.title, "description": item.description}
        f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def load_annotations(path: str | os.PathLike, catalog) -> AnnotationSet:
    """Read an annotation file and enforce referential integrity.

    ``catalog`` is either a sequence of :class:`Item` or a set of known ids;
    every source and similar id must be a member, a source may not list
    itself, and no source may appear twice.
    """
    path = os.fspath(path)
    if isinstance(catalog, (set, frozenset)):
        known_ids = set(catalog)
    else:
        known_ids = {item.item_id for item in catalog}
    entries: list[AnnotationEntry] = []
    seen_sources: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, record in _records(f, ANNOTATIONS_SCHEMA, path):
            extra = set(record) - {"source_id", "similar_ids"}
            if extra:
                raise IngestionError(f"{path}: line {lineno}: unknown fields {sorted(extra)}")
            source_id = _required_str(record, "source_id", lineno, path)
            similar = record.get("similar_ids")
            if not isinstance(similar, list) or not similar:
                raise IngestionError(
                    f"{path}: line {lineno}: similar_ids must be a non-empty list"
                )
            if source_id not in known_ids:
                raise IngestionError(
                    f"{path}: line {lineno}: unknown source_id {source_id!r}"
                )
            if source_id in seen_sources:
                raise IngestionError(
                    f"{path}: line {lineno}: duplicate source_id {source_id!r}"
                )
            seen_sources.add(source_id)
            listed: set[str] = set()
            for sid in similar:
                if not isinstance(sid, str) or sid not in known_ids:
                    raise IngestionError(f"{path}: line {lineno}: unknown similar id {sid!r}")
                if sid == source_id:
                    raise IngestionError(
                        f"{path}: line {lineno}: source {source_id!r} lists itself as similar"
                    )
                if sid in listed:
                    raise IngestionError(
                        f"{path}: line {lineno}: duplicate similar id {sid!r}"
                    )
                listed.add(sid)
            entries.append(AnnotationEntry(source_id=source_id, similar_ids=tuple(similar)))
    return AnnotationSet(entries=tuple(entries))


def write_annotations(
    annotations: AnnotationSet | Mapping[str, Sequence[str]], f: IO[str], seed: int | None = None
) -> None:
    header: dict = {"schema": ANNOTATIONS_SCHEMA, "version": SCHEMA_VERSION}
    if seed is not None:
        header["seed"] = seed
    f.write(json.dumps(header, sort_keys=True) + "\n")
    if isinstance(annotations, AnnotationSet):
        pairs = [(e.source_id, list(e.similar_ids)) for e in annotations.entries]
    else:
        pairs = [(sid, list(ids)) for sid, ids in annotations.items()]
    for source_id, similar_ids in pairs:
        record = {"source_id": source_id, "similar_ids": similar_ids}
        f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a clustered toy corpus.

    Each cluster owns ``words_per_cluster`` exclusive pseudo-words; a shared
    pool of the same size supplies cross-cluster filler. Every word of every
    text is drawn from the shared pool with probability ``shared_fraction``
    and from the item's cluster pool otherwise, except the first title word,
    which is always cluster-exclusive so cluster membership is recoverable
    from any single item.
    """

    n_clusters: int = 4
    items_per_cluster: int = 50
    words_per_cluster: int = 30
    shared_fraction: float = 0.25
    title_words: tuple[int, int] = (3, 6)
    description_words: tuple[int, int] = (10, 20)
    seed: int = 1234

    def __post_init__(self) -> None:
        if self.n_clusters < 2:
            raise ContractViolationError("n_clusters must be >= 2")
        if self.items_per_cluster < 2:
            raise ContractViolationError("items_per_cluster must be >= 2")
        if self.words_per_cluster < 1:
            raise ContractViolationError("words_per_cluster must be >= 1")
        if not 0.0 <= self.shared_fraction < 1.0:
            raise ContractViolationError("shared_fraction must be in [0, 1)")
        for name, rng_pair in (("title_words", self.title_words),
                               ("description_words", self.description_words)):
            lo, hi = rng_pair
            if lo < 1 or hi < lo:
                raise ContractViolationError(f"{name} must be a (lo, hi) range with 1 <= lo <= hi")


_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_words(rng: np.random.Generator, count: int) -> list[str]:
    """Distinct pronounceable pseudo-words, three syllables each."""
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        parts = rng.integers(0, len(syllables), size=3)
        word = "".join(syllables[i] for i in parts)
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def generate_synthetic(spec: SyntheticSpec) -> tuple[list[Item], AnnotationSet]:
    """Generate a clustered catalog plus annotations marking cluster-mates.

    Deterministic given ``spec.seed``: same spec, same corpus, byte for byte.
    """
    rng = np.random.default_rng(spec.seed)
    total_words = spec.n_clusters * spec.words_per_cluster + spec.words_per_cluster
    words = _pseudo_words(rng, total_words)
    cluster_pools = [
        words[k * spec.words_per_cluster : (k + 1) * spec.words_per_cluster]
        for k in range(spec.n_clusters)
    ]
    shared_pool = words[spec.n_clusters * spec.words_per_cluster :]

    def draw_text(cluster: int, n_words: int, force_exclusive_first: bool) -> str:
        pool = cluster_pools[cluster]
        picks: list[str] = []
        for j in range(n_words):
            use_shared = rng.random() < spec.shared_fraction
            if j == 0 and force_exclusive_first:
                use_shared = False
            source = shared_pool if use_shared else pool
            picks.append(source[int(rng.integers(0, len(source)))])
        return " ".join(picks)

    items: list[Item] = []
    clusters: list[list[str]] = [[] for _ in range(spec.n_clusters)]
    for k in range(spec.n_clusters):
        for j in range(spec.items_per_cluster):
            item_id = f"c{k:02d}-i{j:03d}"
            t_lo, t_hi = spec.title_words
            d_lo, d_hi = spec.description_words
            title = draw_text(k, int(rng.integers(t_lo, t_hi + 1)), True)
            description = draw_text(k, int(rng.integers(d_lo, d_hi + 1)), False)
            items.append(Item(item_id=item_id, title=title, description=description))
            clusters[k].append(item_id)

    entries = tuple(
        AnnotationEntry(source_id=iid, similar_ids=tuple(x for x in members if x != iid))
        for members in clusters
        for iid in members
    )
    return items, AnnotationSet(entries=entries)


def load_synthetic_spec(path: str | os.PathLike) -> SyntheticSpec:
    """Read a SyntheticSpec from a JSON file; unknown keys are errors."""
    path = os.fspath(path)
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise IngestionError(f"{path}: spec must be a JSON object")
    allowed = {
        "n_clusters", "items_per_cluster", "words_per_cluster",
        "shared_fraction", "title_words", "description_words", "seed",
    }
    unknown = set(raw) - allowed
    if unknown:
        raise IngestionError(f"{path}: unknown spec keys {sorted(unknown)}")
    for key in ("title_words", "description_words"):
        if key in raw:
            raw[key] = tuple(raw[key])
    try:
        return SyntheticSpec(**raw)
    except (TypeError, ContractViolationError) as exc:
        raise IngestionError(f"{path}: invalid spec: {exc}") from exc
