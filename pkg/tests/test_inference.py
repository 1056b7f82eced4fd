"""Inference: catalog embedding, pair scoring, ranking, and the file formats."""

import io

import numpy as np
import pytest
from helpers import vector_at_angular_distance

from textmetric.data import Item, SyntheticSpec, Tokenizer, generate_synthetic
from textmetric.encoder import Encoder, EncoderConfig
from textmetric.errors import ContractViolationError, IngestionError
from textmetric.inference import (
    CatalogEmbeddings,
    ItemEmbedding,
    embed_catalog,
    rank,
    rank_all,
    read_embeddings,
    read_rankings_csv,
    score,
    write_embeddings,
    write_rankings_csv,
)


def emb(item_id, title_vec, desc_vec=None):
    title_vec = np.asarray(title_vec, dtype=np.float64)
    desc_vec = title_vec if desc_vec is None else np.asarray(desc_vec, dtype=np.float64)
    return ItemEmbedding(item_id=item_id, title_vec=title_vec, desc_vec=desc_vec)


def random_item_embeddings(rng, n, dim=6):
    return [
        emb(f"id{i:03d}", rng.standard_normal(dim), rng.standard_normal(dim)) for i in range(n)
    ]


@pytest.fixture(scope="module")
def small_model():
    items, _ = generate_synthetic(SyntheticSpec(n_clusters=2, items_per_cluster=4, seed=3))
    texts = [t for item in items for t in (item.title, item.description)]
    tokenizer = Tokenizer.fit(texts, vocab_size=300)
    model = Encoder(EncoderConfig(
        vocab_size=tokenizer.vocab_size, d_model=8, n_layers=1, n_heads=2, max_seq_len=12, seed=9,
    ))
    return items, model, tokenizer


class TestEmbedCatalog:
    def test_empty_catalog(self, small_model):
        _, model, tokenizer = small_model
        result = embed_catalog([], model, tokenizer)
        assert len(result) == 0 and result.truncated == 0

    def test_single_item_structure(self, small_model):
        items, model, tokenizer = small_model
        result = embed_catalog(items[:1], model, tokenizer)
        assert len(result) == 1
        e = result.embeddings[0]
        assert e.item_id == items[0].item_id
        assert e.title_vec.shape == (8,) and e.desc_vec.shape == (8,)

    def test_deterministic(self, small_model):
        items, model, tokenizer = small_model
        a = embed_catalog(items, model, tokenizer)
        b = embed_catalog(items, model, tokenizer)
        for x, y in zip(a, b):
            assert np.array_equal(x.title_vec, y.title_vec)
            assert np.array_equal(x.desc_vec, y.desc_vec)

    def test_batching_does_not_change_vectors(self, small_model):
        items, model, tokenizer = small_model
        a = embed_catalog(items, model, tokenizer, batch_size=2)
        b = embed_catalog(items, model, tokenizer, batch_size=64)
        for x, y in zip(a, b):
            np.testing.assert_allclose(x.title_vec, y.title_vec, atol=1e-12)

    def test_truncation_counted(self, small_model):
        _, model, tokenizer = small_model
        wordy = Item("long", " ".join(["word"] * 40), "short description")
        result = embed_catalog([wordy], model, tokenizer)
        assert result.truncated == 1


class TestScore:
    def test_identical_items_score_zero(self):
        a = emb("a", [1.0, 2.0], [0.5, 0.5])
        b = emb("b", [1.0, 2.0], [0.5, 0.5])
        assert score(a, b) == 0.0

    def test_additivity_of_the_two_elements(self):
        s = emb("s", [1.0, 0.0], [1.0, 0.0])
        c = emb("c", vector_at_angular_distance(0.2), vector_at_angular_distance(0.3))
        assert score(s, c) == pytest.approx(0.5, abs=1e-12)

    def test_opposite_directions_max_score(self):
        s = emb("s", [1.0, 0.0], [0.0, 2.0])
        c = emb("c", [-3.0, 0.0], [0.0, -1.0])
        assert score(s, c) == pytest.approx(2.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b = random_item_embeddings(rng, 2)
            assert abs(score(a, b) - score(b, a)) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolationError):
            score(emb("a", [1.0, 0.0]), emb("b", [1.0, 0.0, 0.0]))


class TestRank:
    def test_two_item_catalog(self):
        rng = np.random.default_rng(1)
        catalog = random_item_embeddings(rng, 2)
        ranking = rank("id000", catalog)
        assert [r.candidate_id for r in ranking] == ["id001"]

    def test_hand_built_order_matches_pairwise_scores(self):
        source = emb("s", [1.0, 0.0])
        catalog = [
            source,
            emb("far", vector_at_angular_distance(0.8)),
            emb("near", vector_at_angular_distance(0.1)),
            emb("mid", vector_at_angular_distance(0.4)),
        ]
        ranking = rank("s", catalog)
        assert [r.candidate_id for r in ranking] == ["near", "mid", "far"]
        expected = {c.item_id: score(source, c) for c in catalog[1:]}
        for r in ranking:
            assert r.score == expected[r.candidate_id]

    def test_duplicate_of_source_ranks_first_with_zero_score(self):
        rng = np.random.default_rng(2)
        catalog = random_item_embeddings(rng, 5)
        twin = ItemEmbedding("twin", catalog[0].title_vec.copy(), catalog[0].desc_vec.copy())
        ranking = rank("id000", catalog + [twin])
        assert ranking[0] == ("twin", 0.0)

    def test_unknown_source(self):
        rng = np.random.default_rng(3)
        with pytest.raises(KeyError):
            rank("ghost", random_item_embeddings(rng, 3))

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            catalog = random_item_embeddings(rng, int(rng.integers(3, 20)))
            source = catalog[0]
            expected = sorted(
                ((score(source, c), c.item_id) for c in catalog[1:]),
            )
            got = rank(source.item_id, catalog)
            assert [r.candidate_id for r in got] == [iid for _, iid in expected]

    def test_rescaling_catalog_preserves_order(self):
        rng = np.random.default_rng(5)
        catalog = random_item_embeddings(rng, 12)
        scaled = [
            ItemEmbedding(e.item_id, e.title_vec * rng.uniform(0.1, 10),
                          e.desc_vec * rng.uniform(0.1, 10))
            for e in catalog
        ]
        for source in ("id000", "id007"):
            assert [r.candidate_id for r in rank(source, catalog)] == [
                r.candidate_id for r in rank(source, scaled)
            ]

    def test_rank_all_covers_every_source(self):
        rng = np.random.default_rng(6)
        catalog = random_item_embeddings(rng, 6)
        rankings = rank_all(catalog)
        assert set(rankings) == {e.item_id for e in catalog}
        assert all(len(order) == 5 for order in rankings.values())

    def test_ties_break_by_candidate_id(self):
        source = emb("s", [1.0, 0.0])
        same = vector_at_angular_distance(0.25)
        catalog = [source, emb("zeta", same.copy()), emb("alpha", same.copy())]
        assert [r.candidate_id for r in rank("s", catalog)] == ["alpha", "zeta"]


class TestFileFormats:
    def test_embeddings_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        catalog = CatalogEmbeddings(tuple(random_item_embeddings(rng, 4)), truncated=0)
        buf = io.StringIO()
        write_embeddings(catalog, buf, seed=3)
        path = tmp_path / "emb.jsonl"
        path.write_text(buf.getvalue())
        loaded, seed = read_embeddings(path)
        assert seed == 3
        for orig, back in zip(catalog, loaded):
            assert back.item_id == orig.item_id
            assert np.array_equal(back.title_vec, orig.title_vec)
            assert np.array_equal(back.desc_vec, orig.desc_vec)

    def test_embeddings_bad_header(self, tmp_path):
        path = tmp_path / "emb.jsonl"
        path.write_text('{"schema": "catalog", "version": 1}\n')
        with pytest.raises(IngestionError):
            read_embeddings(path)

    def test_rankings_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        catalog = random_item_embeddings(rng, 5)
        rankings = rank_all(catalog)
        buf = io.StringIO()
        write_rankings_csv(rankings, buf, seed=9)
        text = buf.getvalue()
        assert text.startswith("# seed=9\n")
        path = tmp_path / "rank.csv"
        path.write_text(text)
        loaded = read_rankings_csv(path)
        assert loaded == {
            source: [r.candidate_id for r in order] for source, order in rankings.items()
        }

    def test_rankings_scores_have_fixed_decimals(self):
        rng = np.random.default_rng(9)
        rankings = rank_all(random_item_embeddings(rng, 3))
        buf = io.StringIO()
        write_rankings_csv(rankings, buf)
        for line in buf.getvalue().splitlines()[1:]:
            assert len(line.rsplit(",", 1)[1].split(".")[1]) == 6

    def test_rankings_reject_gapped_ranks(self, tmp_path):
        path = tmp_path / "rank.csv"
        path.write_text(
            "source_id,candidate_id,rank,score\na,b,1,0.1\na,c,3,0.2\n"
        )
        with pytest.raises(IngestionError, match="consecutive"):
            read_rankings_csv(path)
