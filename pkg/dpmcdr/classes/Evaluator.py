import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .Splits import EvalInstance, EvalSet


KS = (10, 20, 30)


@dataclass
class RankingReport:
    """
    Full-ranking leave-one-out metrics of one domain. MRR is the mean reciprocal rank.

    :param ndcg: NDCG@K keyed by cutoff.
    :param hr: HR@K keyed by cutoff.
    """
    domain: str
    mrr: float
    ndcg: dict[int, float] = field(default_factory=dict)
    hr: dict[int, float] = field(default_factory=dict)
    users: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "mrr": self.mrr,
            "ndcg": {str(k): v for k, v in sorted(self.ndcg.items())},
            "hr": {str(k): v for k, v in sorted(self.hr.items())},
            "users": self.users,
            "seed": self.seed,
        }

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    def summary(self) -> str:
        parts = [f"MRR={self.mrr:.4f}"]
        parts += [f"HR@{k}={self.hr[k]:.4f}" for k in sorted(self.hr)]
        parts += [f"NDCG@{k}={self.ndcg[k]:.4f}" for k in sorted(self.ndcg)]
        return f"{self.domain} ({self.users} users): " + " ".join(parts)


def rank_of(scores: np.ndarray, held_out: int, excluded=()) -> int:
    """
    1-based rank of ``held_out`` among all non-excluded items, scores descending; ties go
    to the lower item index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.ones(scores.shape[0], dtype=bool)
    keep[list(excluded)] = False
    keep[held_out] = False
    target = scores[held_out]
    others = scores[keep]
    lower = np.flatnonzero(keep) < held_out
    return 1 + int(np.sum(others > target)) + int(np.sum((others == target) & lower))


def metrics_from_ranks(ranks, ks=KS) -> tuple[float, dict[int, float], dict[int, float]]:
    """(MRR, NDCG@K, HR@K) of single-relevant-item ranks."""
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("no ranks to aggregate")
    mrr = float(np.mean(1.0 / ranks))
    ndcg, hr = {}, {}
    for k in ks:
        hit = ranks <= k
        hr[int(k)] = float(np.mean(hit))
        ndcg[int(k)] = float(np.mean(np.where(hit, 1.0 / np.log2(1.0 + ranks), 0.0)))
    return mrr, ndcg, hr


class Evaluator:
    """
    Cold-start full-ranking evaluation. Users are scored against every candidate item of
    the ranked domain; queries may be spread over threads since parameters are read-only.

    :param logger: logging.Logger instance for logging messages.
    :param ks: Cutoffs of HR@K and NDCG@K (default: 10, 20, 30).
    :param workers: Threads ranking queries in parallel (default: 1).
    """

    def __init__(self, logger: logging.Logger, ks=KS, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        ks = tuple(sorted(int(k) for k in ks))
        if not ks or ks[0] < 1:
            raise ValueError("ks must be positive cutoffs")
        self.logger = logger
        self.ks = ks
        self.workers = int(workers)

    @staticmethod
    def domain_of(eval_set: EvalSet) -> str:
        return "target" if eval_set.direction == "source_to_target" else "source"

    def _ranks(self, user_scores, instances: tuple[EvalInstance, ...]) -> np.ndarray:
        def chunk_ranks(indices):
            return [rank_of(user_scores(i), instances[i].held_out, instances[i].excluded) for i in indices]

        order = np.arange(len(instances))
        if self.workers == 1 or len(instances) < 2:
            return np.asarray(chunk_ranks(order), dtype=np.int64)
        chunks = np.array_split(order, min(self.workers, len(instances)))
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            results = list(pool.map(chunk_ranks, chunks))
        return np.asarray([r for chunk in results for r in chunk], dtype=np.int64)

    def evaluate_scores(self, scores: np.ndarray, instances, domain: str, seed: int | None = None) -> RankingReport:
        """Rank each instance's held-out item within its row of ``scores`` (instances x items)."""
        instances = tuple(instances)
        if not instances:
            raise ValueError("evaluation needs at least one instance")
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim == 1:
            scores = np.broadcast_to(scores, (len(instances), scores.shape[0]))
        if scores.shape[0] != len(instances):
            raise ValueError(f"{scores.shape[0]} score rows for {len(instances)} instances")
        ranks = self._ranks(lambda i: scores[i], instances)
        mrr, ndcg, hr = metrics_from_ranks(ranks, self.ks)
        return RankingReport(domain, mrr, ndcg, hr, len(instances), seed)

    def evaluate(self, model, eval_set: EvalSet, seed: int | None = None) -> RankingReport:
        """Eval-mode scores of ``model`` (posterior means, no dropout) ranked for every query."""
        if len(eval_set) == 0:
            raise ValueError(f"evaluation set {eval_set.direction}/{eval_set.split} has no instances")
        start = time.perf_counter()
        scores = model.score_matrix(eval_set)
        ranks = self._ranks(lambda i: scores[i], eval_set.instances)
        mrr, ndcg, hr = metrics_from_ranks(ranks, self.ks)
        report = RankingReport(self.domain_of(eval_set), mrr, ndcg, hr, len(eval_set), seed)
        self.logger.debug(
            f"[Evaluator] {eval_set.direction}/{eval_set.split}: {report.summary()} "
            f"in {(time.perf_counter() - start) * 1000.0:.1f} ms"
        )
        return report

    def popularity_baseline(self, eval_set: EvalSet, seed: int | None = None) -> RankingReport:
        """Rank candidates by their training interaction count, evaluated like a model."""
        popularity = eval_set.candidates.adjacency.col_degrees().astype(np.float64)
        return self.evaluate_scores(popularity, eval_set.instances, self.domain_of(eval_set), seed)


def score_diagnostics(model, eval_set: EvalSet) -> dict[str, float]:
    """
    Share of query rows whose scores are all equal, and the mean norm of the query vectors.
    A collapsed user representation shows up as ``constant_rows`` near 1 and ``user_norm`` near 0.
    """
    if len(eval_set) == 0:
        raise ValueError(f"evaluation set {eval_set.direction}/{eval_set.split} has no instances")
    users = model.user_vectors(eval_set)
    scores = users @ model.item_vectors(eval_set).T
    return {
        "constant_rows": float(np.mean(np.ptp(scores, axis=1) == 0.0)),
        "user_norm": float(np.linalg.norm(users, axis=1).mean()),
    }


def transfer_verdict(frame: pd.DataFrame, metric: str = "hr@10", model: str = "full",
                     baseline: str = "popularity", rival: str | None = "C", min_lift: float = 0.2) -> dict:
    """
    Compare per-seed results of ``model`` with a baseline and a rival.

    :param frame: One row per (seed, model) with a ``metric`` column.
    :param min_lift: Required relative lift of the seed-averaged metric over the baseline.
    :return: lift, lift_met, rival_margin (smallest per-seed gap), beats_rival and met.
    """
    if min_lift < 0:
        raise ValueError("min_lift must be >= 0")
    names = [model, baseline] + ([rival] if rival is not None else [])
    missing = [name for name in names if name not in set(frame["model"])]
    if missing:
        raise KeyError(f"no results for {missing}")
    pivot = frame.pivot(index="seed", columns="model", values=metric).dropna(subset=names)
    if pivot.empty:
        raise ValueError("no seed has results for every compared model")
    reference, value = float(pivot[baseline].mean()), float(pivot[model].mean())
    if reference > 0:
        lift = value / reference - 1.0
    else:
        lift = float("inf") if value > 0 else 0.0
    verdict = {"seeds": len(pivot), "lift": lift, "lift_met": bool(lift >= min_lift),
               "rival_margin": None, "beats_rival": None}
    if rival is not None:
        margins = pivot[model] - pivot[rival]
        verdict["rival_margin"] = float(margins.min())
        verdict["beats_rival"] = bool((margins > 0).all())
    verdict["met"] = verdict["lift_met"] and verdict["beats_rival"] is not False
    return verdict
