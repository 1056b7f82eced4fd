"""Ingestion, tokenizer, and synthetic corpus generation."""

import io
import json

import pytest

from textmetric.data import (
    UNK_ID,
    AnnotationSet,
    Item,
    SyntheticSpec,
    Tokenizer,
    generate_synthetic,
    load_annotations,
    load_catalog,
    load_synthetic_spec,
    split_words,
    write_annotations,
    write_catalog,
)
from textmetric.errors import ContractViolationError, IngestionError

CATALOG_HEADER = '{"schema": "catalog", "version": 1}'
ANN_HEADER = '{"schema": "annotations", "version": 1}'


def write_lines(path, *lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def catalog_line(item_id, title="a title", description="a description"):
    return json.dumps({"item_id": item_id, "title": title, "description": description})


class TestTokenizer:
    def test_empty_text(self):
        tok = Tokenizer(["red", "dry"])
        assert tok.encode("") == []

    def test_case_folding_and_repeats(self):
        tok = Tokenizer.fit(["dry red wine", "red red"], vocab_size=10)
        ids = tok.encode("Dry red RED")
        assert ids[1] == ids[2]
        assert ids == [tok.encode("dry")[0], tok.encode("red")[0], tok.encode("red")[0]]

    def test_out_of_vocabulary_maps_to_unknown(self):
        tok = Tokenizer(["red"])
        assert tok.encode("unseen") == [UNK_ID]

    def test_unicode_compatibility_fold(self):
        tok = Tokenizer.fit(["château pérez"], vocab_size=10)
        assert tok.encode("CHÂTEAU PÉREZ") == tok.encode("château pérez")
        assert UNK_ID not in tok.encode("CHÂTEAU PÉREZ")

    def test_split_on_non_alphanumeric_runs(self):
        assert split_words("Cabernet-Sauvignon 2015 (reserve)!") == [
            "cabernet", "sauvignon", "2015", "reserve",
        ]

    def test_frequency_ranking_with_alphabetic_ties(self):
        tok = Tokenizer.fit(["b b a a c"], vocab_size=5)
        # Two slots after the specials: 'a' and 'b' tie on count, 'a' wins by order.
        assert tok.words == ("a", "b")

    def test_vocab_cap_and_determinism(self):
        texts = ["alpha beta gamma delta"] * 3 + ["beta gamma", "gamma"]
        a = Tokenizer.fit(texts, vocab_size=6)
        b = Tokenizer.fit(texts, vocab_size=6)
        assert a.words == b.words == ("gamma", "beta", "alpha")
        assert a.vocab_size == 6

    def test_duplicate_words_rejected(self):
        with pytest.raises(ContractViolationError):
            Tokenizer(["red", "red"])


class TestLoadCatalog:
    def test_header_only_is_empty_catalog(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_lines(path, CATALOG_HEADER)
        assert load_catalog(path) == []

    def test_single_record(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_lines(path, CATALOG_HEADER, catalog_line("w1", "Dry red", "Cherry and oak"))
        items = load_catalog(path)
        assert items == [Item("w1", "Dry red", "Cherry and oak")]

    def test_duplicate_id_names_line(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        lines = [CATALOG_HEADER] + [catalog_line(f"w{i}") for i in range(5)]
        lines.append(catalog_line("w2"))  # line 7 duplicates line 4's id
        write_lines(path, *lines)
        with pytest.raises(IngestionError, match="line 7"):
            load_catalog(path)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(IngestionError, match="header"):
            load_catalog(path)

    def test_wrong_schema(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_lines(path, ANN_HEADER)
        with pytest.raises(IngestionError, match="schema"):
            load_catalog(path)

    def test_malformed_record_names_line(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_lines(path, CATALOG_HEADER, "{not json")
        with pytest.raises(IngestionError, match="line 2"):
            load_catalog(path)

    def test_empty_element_rejected(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        write_lines(path, CATALOG_HEADER, catalog_line("w1", title="   "))
        with pytest.raises(IngestionError, match="empty textual element"):
            load_catalog(path)

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "cat.jsonl"
        record = json.dumps(
            {"item_id": "w", "title": "t", "description": "d", "price": 9}
        )
        write_lines(path, CATALOG_HEADER, record)
        with pytest.raises(IngestionError, match="price"):
            load_catalog(path)

    def test_order_preserved_and_round_trip(self, tmp_path):
        items = [Item(f"id{i}", f"title {i}", f"desc {i} é") for i in range(10)]
        buf = io.StringIO()
        write_catalog(items, buf)
        path = tmp_path / "cat.jsonl"
        path.write_text(buf.getvalue(), encoding="utf-8")
        assert load_catalog(path) == items


class TestLoadAnnotations:
    def make_catalog(self, n):
        return [Item(f"id{i}", "t", "d") for i in range(n)]

    def test_expert_shape_fixture(self, tmp_path):
        # 90 sources with ~10 similar ids each, in the shape real annotation
        # files arrive in.
        catalog = self.make_catalog(120)
        lines = [ANN_HEADER]
        for s in range(90):
            similar = [f"id{(s + j) % 120}" for j in range(1, 11)]
            lines.append(json.dumps({"source_id": f"id{s}", "similar_ids": similar}))
        path = tmp_path / "ann.jsonl"
        write_lines(path, *lines)
        ann = load_annotations(path, catalog)
        assert len(ann) == 90
        assert all(len(e.similar_ids) == 10 for e in ann.entries)

    def test_unknown_id_rejected(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        write_lines(path, ANN_HEADER, json.dumps({"source_id": "id0", "similar_ids": ["ghost"]}))
        with pytest.raises(IngestionError, match="ghost"):
            load_annotations(path, self.make_catalog(2))

    def test_empty_file_is_empty_set(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        write_lines(path, ANN_HEADER)
        assert load_annotations(path, self.make_catalog(2)) == AnnotationSet(entries=())

    def test_self_reference_rejected(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        write_lines(path, ANN_HEADER, json.dumps({"source_id": "id0", "similar_ids": ["id0"]}))
        with pytest.raises(IngestionError, match="itself"):
            load_annotations(path, self.make_catalog(2))

    def test_duplicate_source_rejected(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        record = json.dumps({"source_id": "id0", "similar_ids": ["id1"]})
        write_lines(path, ANN_HEADER, record, record)
        with pytest.raises(IngestionError, match="duplicate source_id"):
            load_annotations(path, self.make_catalog(2))

    def test_accepts_id_set(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        write_lines(path, ANN_HEADER, json.dumps({"source_id": "a", "similar_ids": ["b"]}))
        ann = load_annotations(path, {"a", "b"})
        assert ann.as_dict() == {"a": ("b",)}


class TestGenerateSynthetic:
    def test_minimal_structure(self):
        spec = SyntheticSpec(n_clusters=2, items_per_cluster=2, seed=1)
        items, ann = generate_synthetic(spec)
        assert len(items) == 4
        assert len(ann) == 4
        for entry in ann.entries:
            assert len(entry.similar_ids) == 1  # the lone cluster-mate

    def test_disjoint_exclusive_pools_when_no_sharing(self):
        spec = SyntheticSpec(n_clusters=3, items_per_cluster=4, shared_fraction=0.0, seed=2)
        items, ann = generate_synthetic(spec)
        cluster_words = {}
        by_source = ann.as_dict()
        for item in items:
            cluster = min([item.item_id] + list(by_source[item.item_id]))
            words = set(split_words(item.title)) | set(split_words(item.description))
            cluster_words.setdefault(cluster, set()).update(words)
        pools = list(cluster_words.values())
        for i in range(len(pools)):
            for j in range(i + 1, len(pools)):
                assert not pools[i] & pools[j]

    def test_determinism_byte_identical(self):
        spec = SyntheticSpec(n_clusters=2, items_per_cluster=3, seed=9)
        out = []
        for _ in range(2):
            items, ann = generate_synthetic(spec)
            buf_items, buf_ann = io.StringIO(), io.StringIO()
            write_catalog(items, buf_items, seed=spec.seed)
            write_annotations(ann, buf_ann, seed=spec.seed)
            out.append((buf_items.getvalue(), buf_ann.getvalue()))
        assert out[0] == out[1]

    def test_cluster_vocabulary_oracle_achieves_perfect_hit_ratio(self):
        # A classifier that knows the exclusive pools must rank every
        # cluster-mate above every outsider.
        from textmetric.evaluation import hit_ratio_at_k

        spec = SyntheticSpec(n_clusters=3, items_per_cluster=5, shared_fraction=0.3, seed=4)
        items, ann = generate_synthetic(spec)
        by_source = ann.as_dict()
        mates = {
            item.item_id: {item.item_id} | set(by_source[item.item_id]) for item in items
        }
        pool_words = {}
        for item in items:
            key = min(mates[item.item_id])
            words = set(split_words(item.title)) | set(split_words(item.description))
            pool_words.setdefault(key, set()).update(words)
        shared = set.intersection(*pool_words.values()) if len(pool_words) > 1 else set()
        exclusive = {k: w - shared for k, w in pool_words.items()}

        def oracle_rank(source):
            key = min(mates[source.item_id])
            scored = []
            for other in items:
                if other.item_id == source.item_id:
                    continue
                words = set(split_words(other.title)) | set(split_words(other.description))
                overlap = len(words & exclusive[key])
                scored.append((-overlap, other.item_id))
            scored.sort()
            return [iid for _, iid in scored]

        rankings = {item.item_id: oracle_rank(item) for item in items}
        assert hit_ratio_at_k(rankings, ann, spec.items_per_cluster - 1) == 1.0

    def test_spec_validation(self):
        with pytest.raises(ContractViolationError):
            SyntheticSpec(n_clusters=1)
        with pytest.raises(ContractViolationError):
            SyntheticSpec(shared_fraction=1.0)

    def test_spec_file_round_trip(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"n_clusters": 2, "items_per_cluster": 3, "seed": 7}))
        spec = load_synthetic_spec(path)
        assert (spec.n_clusters, spec.items_per_cluster, spec.seed) == (2, 3, 7)

    def test_spec_file_unknown_key(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"clusters": 2}))
        with pytest.raises(IngestionError, match="clusters"):
            load_synthetic_spec(path)
