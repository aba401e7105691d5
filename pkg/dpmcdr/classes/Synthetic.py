import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .Interactions import BipartiteGraph, InteractionRecord
from .RandomStreams import RandomStreams
from .Splits import DomainPair, make_splits


@dataclass
class SyntheticConfig:
    """
    Two-domain clustered interaction generator.

    Users and items carry one of ``clusters`` latent preference clusters shared by both
    domains; a user interacts with an item with probability
    min(1, noise + affinity * [same cluster]).

    :param users_per_domain: Users in each domain, shared identities included (default: 500).
    :param items_per_domain: Items in each domain (default: 200).
    :param clusters: Number of preference clusters, >= 2 (default: 8).
    :param affinity: Extra interaction probability within a cluster, in [0, 1] (default: 0.6).
    :param noise: Base interaction probability, in [0, 1) (default: 0.02).
    :param overlap_fraction: Share of users whose identity exists in both domains (default: 0.2).
    :param cluster_skew: Decay of user cluster weights w_c ~ exp(-skew * c / (C - 1)); 0 is uniform.
    """
    users_per_domain: int = 500
    items_per_domain: int = 200
    clusters: int = 8
    affinity: float = 0.6
    noise: float = 0.02
    overlap_fraction: float = 0.2
    cluster_skew: float = 0.5
    min_user_interactions: int = 5
    min_item_interactions: int = 10

    def __post_init__(self):
        if self.clusters < 2:
            raise ValueError("clusters must be >= 2")
        if not 0.0 <= self.affinity <= 1.0:
            raise ValueError("affinity must be in [0, 1]")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must be in [0, 1)")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ValueError("overlap_fraction must be in [0, 1]")
        if self.users_per_domain < 2 or self.items_per_domain < 1:
            raise ValueError("users_per_domain must be >= 2 and items_per_domain >= 1")
        if self.cluster_skew < 0:
            raise ValueError("cluster_skew must be >= 0")

    def cluster_weights(self) -> np.ndarray:
        weights = np.exp(-self.cluster_skew * np.arange(self.clusters) / (self.clusters - 1))
        return weights / weights.sum()

    def expected_user_degree(self) -> float:
        return self.items_per_domain * (self.noise + self.affinity / self.clusters)

    def expected_item_degree(self) -> float:
        return self.users_per_domain * (self.noise + self.affinity * float(np.min(self.cluster_weights())))

    def check_degrees(self):
        user_degree = self.expected_user_degree()
        if user_degree < self.min_user_interactions:
            needed = int(np.ceil(self.min_user_interactions / (self.noise + self.affinity / self.clusters + 1e-12)))
            raise ValueError(
                f"expected user degree {user_degree:.2f} is below min_user_interactions="
                f"{self.min_user_interactions}; raise items_per_domain to >= {needed}, "
                f"or raise noise/affinity, or lower the threshold"
            )
        item_degree = self.expected_item_degree()
        if item_degree < self.min_item_interactions:
            raise ValueError(
                f"expected degree {item_degree:.2f} of items in the rarest cluster is below "
                f"min_item_interactions={self.min_item_interactions}; raise users_per_domain, "
                f"lower cluster_skew, or lower the threshold"
            )


@dataclass
class SyntheticCorpus:
    """Generated records of both domains with their ground-truth cluster labels."""
    config: SyntheticConfig
    seed: int
    source_records: list[InteractionRecord]
    target_records: list[InteractionRecord]
    overlap_ids: tuple[str, ...]
    labels: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_domain_pair(self, eval_fraction: float = 0.2, overlap_fraction: float = 0.0,
                       normalization: str = "symmetric", logger: logging.Logger | None = None,
                       bidirectional: bool = True) -> DomainPair:
        """
        Split the corpus; the generated shared identities serve as the evaluation identity
        map, so ``overlap_fraction = 0`` still yields strictly disjoint training graphs.
        """
        pair = make_splits(
            self.source_records, self.target_records,
            overlap_fraction=overlap_fraction, eval_fraction=eval_fraction, seed=self.seed,
            min_user_interactions=self.config.min_user_interactions,
            min_item_interactions=self.config.min_item_interactions,
            normalization=normalization, bidirectional=bidirectional, logger=logger,
        )
        pair.labels = self.labels
        return pair

    def write(self, output_dir: str | Path) -> dict[str, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, records in (("source", self.source_records), ("target", self.target_records)):
            frame = pd.DataFrame(
                [(r.user_id, r.item_id, r.timestamp) for r in records],
                columns=["user_id", "item_id", "timestamp"],
            )
            paths[name] = output_dir / f"{name}.csv"
            frame.to_csv(paths[name], index=False)
        paths["overlap"] = output_dir / "overlap.json"
        paths["overlap"].write_text(
            json.dumps({"seed": self.seed, "overlap_users": list(self.overlap_ids)}, indent=2),
            encoding="utf-8",
        )
        return paths


def _domain_records(rng: np.random.Generator, user_ids: list[str], user_clusters: np.ndarray,
                    item_ids: list[str], item_clusters: np.ndarray, config: SyntheticConfig):
    match = user_clusters[:, None] == item_clusters[None, :]
    probability = np.minimum(1.0, config.noise + config.affinity * match)
    interacts = rng.random(probability.shape) < probability
    records = []
    for row, user_id in enumerate(user_ids):
        items = np.flatnonzero(interacts[row])
        for timestamp, column in enumerate(rng.permutation(items)):
            records.append(InteractionRecord(user_id, item_ids[column], int(timestamp)))
    return records


def generate_corpus(config: SyntheticConfig, seed: int, check: bool = True) -> SyntheticCorpus:
    """Draw clustered records for both domains; bitwise reproducible for a given seed."""
    if check:
        config.check_degrees()
    rng = RandomStreams(seed).get("synthetic")
    n_shared = int(round(config.overlap_fraction * config.users_per_domain))
    n_own = config.users_per_domain - n_shared
    weights = config.cluster_weights()

    shared_ids = [f"o{k:05d}" for k in range(n_shared)]
    shared_clusters = rng.choice(config.clusters, size=n_shared, p=weights)
    labels: dict[str, dict[str, int]] = {}
    domains = {}
    for domain, prefix in (("source", "s"), ("target", "t")):
        own_ids = [f"{prefix}{k:05d}" for k in range(n_own)]
        own_clusters = rng.choice(config.clusters, size=n_own, p=weights)
        item_ids = [f"{prefix}i{k:05d}" for k in range(config.items_per_domain)]
        item_clusters = rng.integers(0, config.clusters, size=config.items_per_domain)
        user_ids = shared_ids + own_ids
        user_clusters = np.concatenate([shared_clusters, own_clusters]).astype(np.int64)
        domains[domain] = _domain_records(rng, user_ids, user_clusters, item_ids, item_clusters, config)
        labels[f"{domain}_users"] = {u: int(c) for u, c in zip(user_ids, user_clusters)}
        labels[f"{domain}_items"] = {i: int(c) for i, c in zip(item_ids, item_clusters)}

    return SyntheticCorpus(config, seed, domains["source"], domains["target"], tuple(shared_ids), labels)


def generate_synthetic(config: SyntheticConfig, seed: int, eval_fraction: float = 0.2,
                       overlap_fraction: float = 0.0, normalization: str = "symmetric",
                       logger: logging.Logger | None = None) -> DomainPair:
    """Generate a corpus and split it into a DomainPair carrying the cluster labels."""
    corpus = generate_corpus(config, seed)
    return corpus.to_domain_pair(eval_fraction, overlap_fraction, normalization, logger)


def toy_domain_graphs(seed: int = 1, users: int = 6, items: int = 5,
                      normalization: str = "symmetric") -> tuple[BipartiteGraph, BipartiteGraph]:
    """Two small random graphs where every user and item has at least one edge."""
    rng = RandomStreams(seed).get("synthetic")
    graphs = []
    for prefix in ("s", "t"):
        edges = set()
        for u in range(users):
            edges.add((f"{prefix}{u:02d}", f"{prefix}i{u % items:02d}"))
            for v in rng.choice(items, size=2, replace=False):
                edges.add((f"{prefix}{u:02d}", f"{prefix}i{int(v):02d}"))
        graphs.append(BipartiteGraph.from_edges(edges, normalization))
    return graphs[0], graphs[1]
