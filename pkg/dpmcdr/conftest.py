"""Shared fixtures: loggers, toy graphs and a small synthetic domain pair."""

import logging

import numpy as np
import pytest

from classes.Config import HyperParams, TrainConfig
from classes.Interactions import BipartiteGraph
from classes.RandomStreams import RandomStreams
from classes.Synthetic import SyntheticConfig, generate_corpus, toy_domain_graphs


SMALL_SYNTHETIC = {
    "users_per_domain": 60,
    "items_per_domain": 30,
    "clusters": 3,
    "affinity": 0.6,
    "noise": 0.05,
    "overlap_fraction": 0.4,
    "min_user_interactions": 2,
    "min_item_interactions": 2,
}

SMALL_MODEL = {
    "layers": 2,
    "dim": 4,
    "group_size": 8,
    "heads": 2,
    "dropout": 0.1,
    "warmup": 1,
    "batch_size": 64,
    "negatives": 2,
    "seed": 3,
}


@pytest.fixture
def logger():
    test_logger = logging.getLogger("Test")
    test_logger.setLevel(logging.DEBUG)
    return test_logger


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def streams():
    return RandomStreams(7)


@pytest.fixture
def toy_graphs():
    """Source and target graphs with 6 users and 5 items each."""
    return toy_domain_graphs(seed=1, users=6, items=5)


@pytest.fixture
def chain_graph():
    """u0 - i0 - u1 - i1 - u2 - i2 - u3: u0 reaches u1 in two hops, nothing further."""
    edges = [("u0", "i0"), ("u1", "i0"), ("u1", "i1"), ("u2", "i1"), ("u2", "i2"), ("u3", "i2")]
    return BipartiteGraph.from_edges(edges)


@pytest.fixture
def toy_hyper():
    return HyperParams(layers=2, dim=4, group_size=4, heads=2, dropout=0.0, warmup=2,
                       batch_size=10 ** 6, negatives=2, seed=5)


@pytest.fixture
def small_corpus():
    return generate_corpus(SyntheticConfig(**SMALL_SYNTHETIC), seed=11)


@pytest.fixture
def small_pair(small_corpus):
    return small_corpus.to_domain_pair(eval_fraction=0.2, overlap_fraction=0.0)


@pytest.fixture
def small_config():
    config = TrainConfig.from_dict({
        "data": {"synthetic": dict(SMALL_SYNTHETIC)},
        "model": dict(SMALL_MODEL),
        "train": {"max_epochs": 3, "patience": 5},
    })
    return config.validate()
