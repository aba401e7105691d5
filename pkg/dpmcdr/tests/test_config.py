"""
Tests for run configuration
===========================
"""

import json

import pytest

from classes.Config import ConfigError, HyperParams, TrainConfig


def synthetic_config(**sections):
    raw = {"data": {"synthetic": {}}}
    raw.update(sections)
    return TrainConfig.from_dict(raw)


class TestDefaults:

    def test_hyperparameters(self):
        hyper = HyperParams()
        assert (hyper.layers, hyper.dim, hyper.group_size, hyper.beta) == (3, 32, 256, 1.0)
        assert (hyper.warmup, hyper.lr, hyper.weight_decay, hyper.dropout) == (10, 1e-3, 1e-6, 0.3)
        assert hyper.width == 96

    def test_sections(self):
        config = synthetic_config()
        assert config.train.max_epochs == 70
        assert config.train.patience == 10
        assert config.eval.ks == [10, 20, 30]
        assert config.ablation.variant == "full"
        assert config.data.overlap_fraction == 0.0
        assert config.validate() is config

    def test_beta_overrides(self):
        hyper = HyperParams(beta=2.0, beta_overrides={"domain_target": 0.5})
        assert hyper.beta_for("domain_target") == 0.5
        assert hyper.beta_for("user_source") == 2.0
        with pytest.raises(KeyError):
            hyper.beta_for("matching")


class TestParsing:

    def test_unknown_key_names_its_path(self):
        with pytest.raises(ConfigError) as excinfo:
            TrainConfig.from_dict({"model": {"depth": 3}})
        assert excinfo.value.key == "model.depth"

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown top-level key"):
            TrainConfig.from_dict({"optimizer": {}})

    def test_section_must_be_object(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"model": [1, 2]})

    def test_json_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"data": {"synthetic": {"clusters": 4}}, "model": {"dim": 8}}), encoding="utf-8")
        config = TrainConfig.from_json(path)
        assert config.model.dim == 8
        assert config.data.synthetic == {"clusters": 4}

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="absent.json"):
            TrainConfig.from_json(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"model\": ", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON"):
            TrainConfig.from_json(path)

    def test_dict_round_trip(self):
        config = synthetic_config(model={"dim": 16, "beta_overrides": {"user_source": 0.1}})
        assert TrainConfig.from_dict(config.to_dict()) == config

    def test_override(self):
        config = synthetic_config().override("model.dim", 64).override("train.patience", 3)
        assert config.model.dim == 64 and config.train.patience == 3
        for key in ("model.depth", "optimizer.lr", "model"):
            with pytest.raises(ConfigError):
                config.override(key, 1)


class TestValidation:

    @pytest.mark.parametrize("sections, key", [
        ({"model": {"layers": 3, "dim": 5, "heads": 2}}, "model.heads"),
        ({"model": {"dropout": 1.0}}, "model.dropout"),
        ({"model": {"beta": -0.1}}, "model.beta"),
        ({"model": {"beta_overrides": {"matching": 1.0}}}, "model.beta_overrides.matching"),
        ({"model": {"seed": -2}}, "model.seed"),
        ({"train": {"patience": 0}}, "train.patience"),
        ({"eval": {"split": "train"}}, "eval.split"),
        ({"ablation": {"variant": "E"}}, "ablation.variant"),
        ({"ablation": {"sigma1_scale": 0.0}}, "ablation.sigma1_scale"),
        ({"ablation": {"mean_activation": "tanh"}}, "ablation.mean_activation"),
    ])
    def test_rejected_values(self, sections, key):
        with pytest.raises(ConfigError) as excinfo:
            synthetic_config(**sections).validate()
        assert excinfo.value.key == key

    def test_needs_a_data_source(self):
        with pytest.raises(ConfigError) as excinfo:
            TrainConfig().validate()
        assert excinfo.value.key == "data"

    def test_files_and_synthetic_are_exclusive(self):
        config = TrainConfig.from_dict({"data": {"source": "s.csv", "target": "t.csv", "synthetic": {}}})
        with pytest.raises(ConfigError, match="either files or synthetic"):
            config.validate()

    def test_both_files_needed(self):
        with pytest.raises(ConfigError) as excinfo:
            TrainConfig.from_dict({"data": {"source": "s.csv"}}).validate()
        assert excinfo.value.key == "data.target"
