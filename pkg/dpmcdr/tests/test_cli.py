"""
Tests for the run_cdr command line
==================================
"""

import json

import pytest

from classes.CLI import interaction_stats, load_domain_pair, run_cli
from conftest import SMALL_MODEL, SMALL_SYNTHETIC


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps({
        "data": {"synthetic": SMALL_SYNTHETIC},
        "model": SMALL_MODEL,
        "train": {"max_epochs": 2, "patience": 5},
    }), encoding="utf-8")
    return path


def train(config_path, output_dir, seed="3"):
    return run_cli(["train", "--config", str(config_path), "--seed", seed, "--output-dir", str(output_dir)])


class TestUsage:

    def test_unknown_flag(self):
        assert run_cli(["train", "--bogus"]) == 2

    def test_missing_command(self):
        assert run_cli([]) == 2

    def test_train_needs_seed(self, config_path):
        assert run_cli(["train", "--config", str(config_path)]) == 2

    def test_missing_config_file(self, tmp_path, capsys):
        missing = tmp_path / "absent.json"
        assert run_cli(["train", "--config", str(missing), "--seed", "1"]) == 1
        assert "absent.json" in capsys.readouterr().err

    def test_invalid_override(self, config_path, tmp_path, capsys):
        assert run_cli(["train", "--config", str(config_path), "--seed", "1", "--dropout", "1.5",
                        "--output-dir", str(tmp_path / "run")]) == 1
        assert "model.dropout" in capsys.readouterr().err

    def test_invalid_mean_activation(self, config_path, tmp_path, capsys):
        assert run_cli(["train", "--config", str(config_path), "--seed", "1", "--mean-activation", "gelu",
                        "--output-dir", str(tmp_path / "run")]) == 1
        assert "ablation.mean_activation" in capsys.readouterr().err


class TestStats:

    def test_two_records(self, tmp_path, capsys):
        path = tmp_path / "books.csv"
        path.write_text("user_id,item_id\na,x\nb,x\n", encoding="utf-8")
        table = interaction_stats([str(path)])
        assert table.to_dict("records") == [
            {"dataset": "books", "users": 2, "items": 1, "interactions": 2, "avg_length": 1.0}]
        assert run_cli(["stats", str(path)]) == 0
        assert "books" in capsys.readouterr().out


class TestSynth:

    def test_writes_corpus(self, tmp_path):
        out = tmp_path / "corpus"
        assert run_cli(["synth", "--output-dir", str(out), "--seed", "2", "--users", "60", "--items", "30",
                        "--clusters", "3", "--noise", "0.05"]) == 0
        assert (out / "source.csv").is_file() and (out / "target.csv").is_file()
        overlap = json.loads((out / "overlap.json").read_text(encoding="utf-8"))
        assert overlap["seed"] == 2
        assert len(overlap["overlap_users"]) == 12

    def test_degree_check_is_an_error(self, tmp_path, capsys):
        assert run_cli(["synth", "--output-dir", str(tmp_path), "--items", "10", "--noise", "0.0",
                        "--affinity", "0.2"]) == 1
        assert "raise items_per_domain" in capsys.readouterr().err


class TestGradcheck:

    def test_toy_model_passes(self, capsys):
        assert run_cli(["gradcheck", "--seed", "1", "--toy"]) == 0
        assert "max relative error" in capsys.readouterr().out


class TestTrainAndEvaluate:

    def test_outputs_and_reevaluation(self, config_path, tmp_path):
        run = tmp_path / "run"
        assert train(config_path, run) == 0
        for name in ("splits.json", "config.json", "model.bin", "losses.csv", "metrics.json", "metrics_reverse.json"):
            assert (run / name).is_file(), name
        saved = json.loads((run / "config.json").read_text(encoding="utf-8"))
        assert saved["model"]["seed"] == 3
        splits = json.loads((run / "splits.json").read_text(encoding="utf-8"))
        assert splits["seed"] == 3 and splits["test_users"]

        again = tmp_path / "again"
        assert run_cli(["evaluate", "--config", str(config_path), "--seed", "3", "--model", str(run / "model.bin"),
                        "--output-dir", str(again)]) == 0
        for name in ("metrics.json", "metrics_reverse.json"):
            first = json.loads((run / name).read_text(encoding="utf-8"))
            second = json.loads((again / name).read_text(encoding="utf-8"))
            assert first == second
        metrics = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
        assert metrics["domain"] == "target"
        assert set(metrics["hr"]) == {"10", "20", "30"}

    def test_same_seed_same_losses(self, config_path, tmp_path):
        assert train(config_path, tmp_path / "a") == 0
        assert train(config_path, tmp_path / "b") == 0
        assert (tmp_path / "a" / "losses.csv").read_bytes() == (tmp_path / "b" / "losses.csv").read_bytes()

    def test_unidirectional(self, config_path, tmp_path):
        run = tmp_path / "run"
        assert run_cli(["train", "--config", str(config_path), "--seed", "3", "--output-dir", str(run),
                        "--unidirectional", "--variant", "A"]) == 0
        assert (run / "metrics.json").is_file()
        assert not (run / "metrics_reverse.json").exists()


class TestLoadDomainPair:

    @pytest.mark.parametrize("bidirectional", [True, False])
    def test_synthetic_follows_eval_direction(self, logger, small_config, bidirectional):
        small_config.eval.bidirectional = bidirectional
        pair = load_domain_pair(small_config, logger)
        expected = {"source_to_target", "target_to_source"} if bidirectional else {"source_to_target"}
        assert {direction for direction, _ in pair.eval_sets} == expected
