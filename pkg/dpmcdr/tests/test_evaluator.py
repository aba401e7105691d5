"""
Tests for full-ranking evaluation
=================================
"""

import json
import logging

import numpy as np
import pandas as pd
import pytest

from classes.Evaluator import (
    Evaluator, RankingReport, metrics_from_ranks, rank_of, score_diagnostics, transfer_verdict,
)
from classes.Interactions import BipartiteGraph
from classes.Splits import EvalInstance, EvalSet


def brute_force_rank(scores, held_out, excluded):
    candidates = [i for i in range(len(scores)) if i not in excluded]
    ordered = sorted(candidates, key=lambda i: (-scores[i], i))
    return ordered.index(held_out) + 1


@pytest.fixture
def evaluator():
    return Evaluator(logging.getLogger("Test"), ks=(1, 2))


@pytest.fixture
def eval_set():
    """Candidate degrees x=3, y=1, z=2; one query holds out y, one holds out z with x excluded."""
    candidates = BipartiteGraph.from_edges(
        [("a", "x"), ("a", "y"), ("a", "z"), ("b", "x"), ("b", "z"), ("c", "x")], normalization="none")
    represented = BipartiteGraph.from_edges([("p", "m"), ("q", "m"), ("q", "n")])
    instances = (
        EvalInstance(user=0, history=(0,), held_out=1, user_id="p"),
        EvalInstance(user=1, history=(0, 1), held_out=2, excluded=(0,), user_id="q"),
    )
    return EvalSet("source_to_target", "test", represented, candidates, 2, instances)


class TestRanks:

    def test_examples(self):
        scores = [0.1, 0.9, 0.5, 0.3]
        assert rank_of(scores, 2) == 2
        assert rank_of(scores, 2, excluded=[1]) == 1
        assert rank_of(scores, 0) == 4

    def test_ties_go_to_lower_index(self):
        scores = [0.5, 0.5, 0.5]
        assert rank_of(scores, 0) == 1
        assert rank_of(scores, 1) == 2
        assert rank_of(scores, 2, excluded=[0]) == 2

    def test_matches_brute_force(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 30))
            scores = rng.integers(0, 5, size=n).astype(float)
            held_out = int(rng.integers(n))
            excluded = [int(i) for i in rng.choice(n, size=int(rng.integers(0, n)), replace=False) if i != held_out]
            assert rank_of(scores, held_out, excluded) == brute_force_rank(scores, held_out, excluded)

    def test_metrics(self):
        mrr, ndcg, hr = metrics_from_ranks([1, 3, 15], ks=(10,))
        assert mrr == pytest.approx((1 + 1 / 3 + 1 / 15) / 3)
        assert hr == {10: pytest.approx(2 / 3)}
        assert ndcg[10] == pytest.approx(0.5)

    def test_no_ranks(self):
        with pytest.raises(ValueError):
            metrics_from_ranks([])


class TestEvaluator:

    def test_popularity_baseline(self, evaluator, eval_set):
        report = evaluator.popularity_baseline(eval_set, seed=3)
        assert report.domain == "target"
        assert report.users == 2
        assert report.mrr == pytest.approx(2 / 3)
        assert report.hr == {1: 0.5, 2: 0.5}
        assert report.ndcg == {1: 0.5, 2: 0.5}
        assert report.seed == 3

    def test_evaluate_uses_model_scores(self, evaluator, eval_set):
        class FixedModel:
            def score_matrix(self, eval_set):
                return np.array([[0.0, 1.0, 0.5], [0.9, 0.1, 0.2]])

        report = evaluator.evaluate(FixedModel(), eval_set)
        assert report.mrr == 1.0
        assert report.hr == {1: 1.0, 2: 1.0}

    def test_reverse_direction_reports_source(self, evaluator, eval_set):
        reverse = EvalSet("target_to_source", "test", eval_set.graph, eval_set.candidates, 2, eval_set.instances)
        assert evaluator.popularity_baseline(reverse).domain == "source"

    def test_threads_give_the_same_ranks(self, rng):
        scores = rng.normal(size=(50, 40))
        instances = [EvalInstance(user=i, history=(0,), held_out=int(rng.integers(40))) for i in range(50)]
        serial = Evaluator(logging.getLogger("Test"), workers=1).evaluate_scores(scores, instances, "target")
        threaded = Evaluator(logging.getLogger("Test"), workers=4).evaluate_scores(scores, instances, "target")
        assert serial == threaded

    def test_score_rows_must_match(self, evaluator, eval_set):
        with pytest.raises(ValueError, match="score rows"):
            evaluator.evaluate_scores(np.zeros((3, 3)), eval_set.instances, "target")

    def test_empty_instances(self, evaluator, eval_set):
        with pytest.raises(ValueError):
            evaluator.evaluate_scores(np.zeros(3), (), "target")
        empty = EvalSet("source_to_target", "test", eval_set.graph, eval_set.candidates, 2, ())
        with pytest.raises(ValueError, match="no instances"):
            evaluator.evaluate(object(), empty)

    @pytest.mark.parametrize("kwargs", [{"workers": 0}, {"ks": ()}, {"ks": (0, 10)}])
    def test_bad_settings(self, kwargs):
        with pytest.raises(ValueError):
            Evaluator(logging.getLogger("Test"), **kwargs)


class TestRankingReport:

    def test_json(self, tmp_path):
        report = RankingReport("target", 0.25, {20: 0.3, 10: 0.2}, {10: 0.4, 20: 0.5}, users=8, seed=1)
        data = json.loads(report.write_json(tmp_path / "out" / "metrics.json").read_text(encoding="utf-8"))
        assert data == {"domain": "target", "mrr": 0.25, "ndcg": {"10": 0.2, "20": 0.3},
                        "hr": {"10": 0.4, "20": 0.5}, "users": 8, "seed": 1}

    def test_summary(self):
        report = RankingReport("source", 0.5, {10: 0.25}, {10: 1.0}, users=4)
        assert report.summary() == "source (4 users): MRR=0.5000 HR@10=1.0000 NDCG@10=0.2500"


class VectorModel:
    def __init__(self, users, items):
        self.users, self.items = np.asarray(users, dtype=float), np.asarray(items, dtype=float)

    def user_vectors(self, eval_set):
        return self.users

    def item_vectors(self, eval_set):
        return self.items


class TestScoreDiagnostics:

    def test_collapsed_users(self, eval_set):
        diagnostics = score_diagnostics(VectorModel(np.zeros((2, 2)), [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), eval_set)
        assert diagnostics == {"constant_rows": 1.0, "user_norm": 0.0}

    def test_one_constant_row(self, eval_set):
        model = VectorModel([[3.0, 4.0], [0.0, 1.0]], [[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        diagnostics = score_diagnostics(model, eval_set)
        assert diagnostics["constant_rows"] == 1.0
        model.items[1, 0] = 2.0
        diagnostics = score_diagnostics(model, eval_set)
        assert diagnostics["constant_rows"] == 0.5
        assert diagnostics["user_norm"] == pytest.approx(3.0)


def results(rows):
    return pd.DataFrame([{"seed": seed, "model": model, "hr@10": value} for seed, model, value in rows])


class TestTransferVerdict:

    def test_met(self):
        frame = results([(1, "popularity", 0.10), (1, "C", 0.11), (1, "full", 0.13),
                         (2, "popularity", 0.10), (2, "C", 0.12), (2, "full", 0.13)])
        verdict = transfer_verdict(frame)
        assert verdict["lift"] == pytest.approx(0.3)
        assert verdict["lift_met"] and verdict["beats_rival"] and verdict["met"]
        assert verdict["rival_margin"] == pytest.approx(0.01)
        assert verdict["seeds"] == 2

    def test_tie_with_popularity_is_not_met(self):
        frame = results([(1, "popularity", 0.0667), (1, "C", 0.1), (1, "full", 0.0667)])
        verdict = transfer_verdict(frame)
        assert verdict["lift"] == pytest.approx(0.0)
        assert not verdict["lift_met"]
        assert not verdict["beats_rival"]
        assert not verdict["met"]

    def test_one_losing_seed_fails_the_rival_check(self):
        frame = results([(1, "popularity", 0.1), (1, "C", 0.1), (1, "full", 0.2),
                         (2, "popularity", 0.1), (2, "C", 0.3), (2, "full", 0.2)])
        verdict = transfer_verdict(frame)
        assert verdict["lift_met"] and not verdict["beats_rival"]
        assert verdict["rival_margin"] == pytest.approx(-0.1)

    def test_without_rival(self):
        verdict = transfer_verdict(results([(1, "popularity", 0.1), (1, "full", 0.15)]), rival=None)
        assert verdict["beats_rival"] is None
        assert verdict["lift"] == pytest.approx(0.5)
        assert verdict["met"]

    def test_missing_model(self):
        with pytest.raises(KeyError, match="C"):
            transfer_verdict(results([(1, "popularity", 0.1), (1, "full", 0.15)]))
