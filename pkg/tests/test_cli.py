"""Command-line surface: every subcommand, exit codes, and byte-level reproducibility."""

import json

import pytest

from textmetric.checkpoint import load_checkpoint
from textmetric.cli import main
from textmetric.data import load_catalog

SPEC = {
    "n_clusters": 2, "items_per_cluster": 5, "words_per_cluster": 10,
    "shared_fraction": 0.2, "title_words": [3, 4], "description_words": [4, 6], "seed": 17,
}
CONFIG = {
    "batch_size": 4, "steps": 4, "learning_rate": 0.001, "lambda": 1.0,
    "margin": 0.1, "loss_variant": "triplet_hard", "mask_rate": 0.15, "seed": 29,
    "encoder": {"vocab_size": 200, "d_model": 8, "n_layers": 1, "n_heads": 2, "max_seq_len": 8},
}


@pytest.fixture
def workspace(tmp_path):
    (tmp_path / "spec.json").write_text(json.dumps(SPEC))
    (tmp_path / "config.json").write_text(json.dumps(CONFIG))
    return tmp_path


def run_pipeline(ws, out_dir):
    out_dir.mkdir(exist_ok=True)
    cat = out_dir / "catalog.jsonl"
    ann = out_dir / "annotations.jsonl"
    ckpt = out_dir / "model.ckpt"
    emb = out_dir / "embeddings.jsonl"
    rankings = out_dir / "rankings.csv"
    assert main(["synth", "--spec", str(ws / "spec.json"),
                 "--out-data", str(cat), "--out-annotations", str(ann)]) == 0
    assert main(["train", "--config", str(ws / "config.json"),
                 "--data", str(cat), "--out", str(ckpt)]) == 0
    assert main(["embed", "--checkpoint", str(ckpt), "--data", str(cat),
                 "--out", str(emb)]) == 0
    assert main(["rank", "--embeddings", str(emb), "--all", "--out", str(rankings)]) == 0
    return cat, ann, ckpt, emb, rankings


class TestSubcommands:
    def test_synth_outputs_load(self, workspace):
        cat = workspace / "catalog.jsonl"
        ann = workspace / "annotations.jsonl"
        assert main(["synth", "--spec", str(workspace / "spec.json"),
                     "--out-data", str(cat), "--out-annotations", str(ann)]) == 0
        items = load_catalog(cat)
        assert len(items) == 10
        assert ann.read_text().splitlines()[0].startswith('{"schema": "annotations"')

    def test_full_pipeline_and_eval(self, workspace, capsys):
        _, ann, ckpt, _, rankings = run_pipeline(workspace, workspace / "run")
        model, _, seed = load_checkpoint(ckpt)
        assert seed == CONFIG["seed"]
        metrics = (ckpt.parent / (ckpt.name + ".metrics.csv")).read_text().splitlines()
        assert metrics[0] == f"# seed={CONFIG['seed']}"
        assert len(metrics) == CONFIG["steps"] + 2

        capsys.readouterr()
        assert main(["eval", "--rankings", str(rankings), "--annotations", str(ann),
                     "--k", "3,5"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "mpr,mrr,hr3,hr5"
        values = out[1].split(",")
        assert len(values) == 4
        assert all(0.0 <= float(v) <= 1.0 for v in values)

    def test_train_seed_flag_overrides_config(self, workspace):
        out = workspace / "seeded.ckpt"
        cat, *_ = run_pipeline(workspace, workspace / "run")
        assert main(["train", "--config", str(workspace / "config.json"),
                     "--data", str(cat), "--out", str(out), "--seed", "777"]) == 0
        _, _, seed = load_checkpoint(out)
        assert seed == 777

    def test_rank_single_source(self, workspace):
        _, _, _, emb, _ = run_pipeline(workspace, workspace / "run")
        out = workspace / "one.csv"
        assert main(["rank", "--embeddings", str(emb), "--source", "c00-i000",
                     "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "source_id,candidate_id,rank,score"
        assert len(lines) == 2 + 9  # seed comment + header + nine candidates

    def test_ablate_writes_variant_table(self, workspace):
        cat, ann, *_ = run_pipeline(workspace, workspace / "run")
        out = workspace / "ablation.csv"
        assert main(["ablate", "--config", str(workspace / "config.json"),
                     "--data", str(cat), "--annotations", str(ann),
                     "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[1] == "variant,mpr,mrr,hr10,hr100"
        assert len(lines) == 2 + 6
        assert lines[2].split(",")[0] == "triplet_hard"


class TestReproducibility:
    def test_pipeline_outputs_byte_identical_across_runs(self, workspace):
        first = run_pipeline(workspace, workspace / "a")
        second = run_pipeline(workspace, workspace / "b")
        for path_a, path_b in zip(first, second):
            assert path_a.read_bytes() == path_b.read_bytes(), path_a.name


class TestErrorHandling:
    def test_usage_error_exits_two(self):
        with pytest.raises(SystemExit) as err:
            main(["train", "--config"])
        assert err.value.code == 2

    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as err:
            main(["serve"])
        assert err.value.code == 2

    def test_missing_file_single_line_error(self, workspace, capsys):
        code = main(["embed", "--checkpoint", str(workspace / "nope.ckpt"),
                     "--data", str(workspace / "nope.jsonl"), "--out", str(workspace / "o")])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert err.count("\n") == 1

    def test_bad_config_key_reported(self, workspace, capsys):
        bad = workspace / "bad.json"
        bad.write_text(json.dumps({**CONFIG, "optimizer": "sgd"}))
        cat = workspace / "c.jsonl"
        ann = workspace / "a.jsonl"
        main(["synth", "--spec", str(workspace / "spec.json"),
              "--out-data", str(cat), "--out-annotations", str(ann)])
        capsys.readouterr()
        code = main(["train", "--config", str(bad), "--data", str(cat),
                     "--out", str(workspace / "x.ckpt")])
        assert code == 1
        assert "optimizer" in capsys.readouterr().err

    def test_rank_requires_source_or_all(self, workspace):
        with pytest.raises(SystemExit) as err:
            main(["rank", "--embeddings", "x", "--out", "y"])
        assert err.value.code == 2
