"""
Tests for the assembled model and the training loop
===================================================

Variant wiring, warmup, persistence and a finite-difference check of every
trainable parameter, followed by short seeded training runs on a small
synthetic domain pair.
"""

import dataclasses
import logging
import math

import numpy as np
import pandas as pd
import pytest

from classes.Config import AblationSettings, TrainSettings, VARIANTS
from classes.Evaluator import Evaluator
from classes.Model import DOMAINS, DPMCDRModel, full_model_grad_check
from classes.Objectives import NonFiniteLossError
from classes.Optimizer import Adam
from classes.RandomStreams import RandomStreams
from classes.Tensor import NonFiniteError, backward
from classes.Trainer import LOSS_COLUMNS, Trainer, TrainingDivergedError, epoch_batches


def toy_model(logger, hyper, graphs, variant="full", **train_settings):
    source, target = graphs
    return DPMCDRModel(logger, hyper, source, target, AblationSettings(variant=variant),
                       TrainSettings(**train_settings))


def full_batch(model):
    return {domain: model.graphs[domain].edges() for domain in DOMAINS}


class TestModel:

    @pytest.mark.parametrize("variant, trained", [
        ("A", {"user_source", "user_target"}),
        ("B", {"user_source", "user_target"}),
        ("C", {"matching"}),
        ("D", {"matching", "user_source", "user_target"}),
        ("full", {"matching", "domain", "user_source", "user_target"}),
    ])
    def test_variant_components(self, logger, toy_hyper, toy_graphs, variant, trained):
        model = toy_model(logger, toy_hyper, toy_graphs, variant)
        breakdown = model.training_losses(full_batch(model), epoch=5, streams=RandomStreams(1))
        for name in ("matching", "domain", "user_source", "user_target"):
            value = getattr(breakdown, name)
            assert (value > 0) if name in trained else (value == 0.0), name
        assert breakdown.total == pytest.approx(
            breakdown.matching + breakdown.domain + breakdown.user_source + breakdown.user_target)

    def test_warmup_keeps_matching_weights_still(self, logger, toy_hyper, toy_graphs):
        model = toy_model(logger, toy_hyper, toy_graphs)
        matching = [p for name, p in model.named_parameters().items() if name in model.matching_parameter_names()]
        breakdown = model.training_losses(full_batch(model), epoch=0, streams=RandomStreams(1))
        assert breakdown.matching > 0
        backward(breakdown.objective, model.parameters())
        assert all(np.all(p.grad == 0.0) for p in matching)

        breakdown = model.training_losses(full_batch(model), epoch=toy_hyper.warmup, streams=RandomStreams(1))
        backward(breakdown.objective, model.parameters())
        assert any(np.any(p.grad != 0.0) for p in matching)

    @pytest.mark.parametrize("settings", [{"exact_reconstruction": True}, {"cross_block_negatives": False}])
    def test_reconstruction_switches(self, logger, toy_hyper, toy_graphs, settings):
        model = toy_model(logger, toy_hyper, toy_graphs, **settings)
        breakdown = model.training_losses(full_batch(model), epoch=5, streams=RandomStreams(2))
        assert math.isfinite(breakdown.total) and breakdown.domain > 0
        backward(breakdown.objective, model.parameters())

    def test_identifier_switches(self, logger, toy_hyper, toy_graphs):
        source, target = toy_graphs
        ablation = AblationSettings(learned_prior=True, sigma1_activation="softplus", reaggregate_per_layer=True)
        model = DPMCDRModel(logger, toy_hyper, source, target, ablation)
        assert "source.identifier.prior_mean_w" in model.named_parameters()
        assert math.isfinite(model.training_losses(full_batch(model), 5, RandomStreams(3)).total)

    def test_same_streams_same_losses(self, logger, toy_hyper, toy_graphs):
        model = toy_model(logger, toy_hyper, toy_graphs)
        first = model.training_losses(full_batch(model), 5, RandomStreams(4))
        second = model.training_losses(full_batch(model), 5, RandomStreams(4))
        assert first == second

    def test_group_size_above_users(self, logger, toy_hyper, toy_graphs):
        hyper = dataclasses.replace(toy_hyper, group_size=7)
        with pytest.raises(ValueError, match="group size"):
            toy_model(logger, hyper, toy_graphs).check_group_size()
        toy_model(logger, hyper, toy_graphs, "A").check_group_size()

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_score_matrix_shape(self, logger, small_config, small_pair, variant):
        config = small_config
        config.ablation.variant = variant
        model = DPMCDRModel(logger, config.model, small_pair.source, small_pair.target, config.ablation)
        for direction in ("source_to_target", "target_to_source"):
            eval_set = small_pair.eval_set("test", direction)
            scores = model.score_matrix(eval_set)
            assert scores.shape == (len(eval_set), eval_set.candidates.n_items)
            assert np.all(np.isfinite(scores))
            assert np.all(np.ptp(scores, axis=1) > 0)

    def test_save_and_load(self, logger, toy_hyper, toy_graphs, tmp_path):
        model = toy_model(logger, toy_hyper, toy_graphs)
        path = model.save(tmp_path / "run" / "model.bin")
        other = toy_model(logger, dataclasses.replace(toy_hyper, seed=99), toy_graphs)
        assert not np.array_equal(other.snapshot()["matching.driven_w"], model.snapshot()["matching.driven_w"])
        other.load(path)
        for name, values in model.snapshot().items():
            np.testing.assert_array_equal(other.snapshot()[name], values)

    def test_load_checks_variant_and_path(self, logger, toy_hyper, toy_graphs, tmp_path):
        path = toy_model(logger, toy_hyper, toy_graphs).save(tmp_path / "model.bin")
        with pytest.raises(ValueError, match="variant"):
            toy_model(logger, toy_hyper, toy_graphs, "C").load(path)
        with pytest.raises(FileNotFoundError):
            toy_model(logger, toy_hyper, toy_graphs).load(tmp_path / "absent.bin")

    def test_full_model_gradients(self, logger):
        assert full_model_grad_check(logger, seed=1, users=6, items=5) < 1e-4


class TestEpochBatches:

    def test_larger_domain_is_covered_once(self, small_pair):
        batches = list(epoch_batches(small_pair, 64, np.random.default_rng(0)))
        larger = max(DOMAINS, key=lambda d: getattr(small_pair, d).n_edges)
        edges = getattr(small_pair, larger).n_edges
        assert len(batches) == math.ceil(edges / 64)
        seen = np.concatenate([b[larger][0] * 10_000 + b[larger][1] for b in batches])
        assert seen.size == edges and np.unique(seen).size == edges
        for batch in batches:
            assert all(batch[d][0].size <= 64 for d in DOMAINS)
            assert batch["source"][0].size == batch["target"][0].size


class TestTrainer:

    def test_same_seed_same_run(self, logger, small_config, small_pair):
        evaluator = Evaluator(logger)
        first = Trainer(logger, small_config, evaluator).train(small_pair)
        second = Trainer(logger, small_config, evaluator).train(small_pair)
        pd.testing.assert_frame_equal(first.losses, second.losses)
        assert list(first.losses.columns) == LOSS_COLUMNS
        assert len(first.losses) == small_config.train.max_epochs

    def test_restores_best_validation_epoch(self, logger, small_config, small_pair):
        evaluator = Evaluator(logger)
        result = Trainer(logger, small_config, evaluator).train(small_pair)
        assert 0 <= result.best_epoch < small_config.train.max_epochs
        assert result.losses["val_mrr"].max() == result.best_report.mrr
        again = evaluator.evaluate(result.model, small_pair.eval_set("validation"), small_config.model.seed)
        assert again.mrr == result.best_report.mrr

    def test_eval_every(self, logger, small_config, small_pair):
        small_config.train.eval_every = 2
        result = Trainer(logger, small_config, Evaluator(logger)).train(small_pair)
        assert result.losses["val_mrr"].isna().tolist() == [True, False, True]

    def test_needs_seed(self, logger, small_config):
        small_config.model.seed = None
        with pytest.raises(ValueError, match="seed"):
            Trainer(logger, small_config, Evaluator(logger))

    def test_empty_validation(self, logger, small_config, small_pair):
        key = ("source_to_target", "validation")
        small_pair.eval_sets[key] = dataclasses.replace(small_pair.eval_sets[key], instances=())
        with pytest.raises(ValueError, match="validation split"):
            Trainer(logger, small_config, Evaluator(logger)).train(small_pair)

    @pytest.mark.parametrize("error, component", [
        (NonFiniteLossError("domain", float("nan")), "domain"),
        (NonFiniteError("log"), "log"),
    ])
    def test_divergence(self, logger, small_config, small_pair, error, component):
        trainer = Trainer(logger, small_config, Evaluator(logger))
        model = trainer.build_model(small_pair)

        def diverge(*args, **kwargs):
            raise error

        model.training_losses = diverge
        optimizer = Adam(logging.getLogger("Test"), model.parameters())
        with pytest.raises(TrainingDivergedError) as excinfo:
            trainer._step(model, optimizer, {}, 4, RandomStreams(0))
        assert excinfo.value.component == component
        assert excinfo.value.epoch == 4

    def test_total_loss_falls(self, logger, small_config, small_pair):
        small_config.model.lr = 5e-3
        small_config.train.max_epochs = 6
        small_config.train.patience = 10
        losses = Trainer(logger, small_config, Evaluator(logger)).train(small_pair).losses
        assert losses["total"].iloc[-1] < losses["total"].iloc[0]

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_trained_scores_separate_items(self, logger, small_config, small_pair, variant):
        small_config.ablation.variant = variant
        small_config.train.max_epochs = 2
        model = Trainer(logger, small_config, Evaluator(logger)).train(small_pair).model
        for direction in ("source_to_target", "target_to_source"):
            eval_set = small_pair.eval_set("test", direction)
            users = model.user_vectors(eval_set)
            assert np.all(np.abs(users).max(axis=1) > 0)
            scores = model.score_matrix(eval_set)
            assert np.all(np.ptp(scores, axis=1) > 0)
