"""
Tests for the two-hop graph encoder
===================================

Dense numpy oracles for aggregation and layer mixing, locality and relabelling
properties, and gradient checks through the whole encoder.
"""

import logging

import numpy as np
import pytest

from classes.Encoder import GraphEncoder
from classes.Interactions import BipartiteGraph
from classes.Tensor import Tensor, add, grad_check, square, sum


def leaky(x, slope=0.01):
    return np.where(x > 0, x, slope * x)


def make_encoder(graph, dim=3, layers=2, dropout=0.0, **kwargs):
    return GraphEncoder(logging.getLogger("Test"), graph.n_users, graph.n_items, dim=dim, layers=layers,
                        dropout=dropout, **kwargs)


def identity_maps(params):
    for w in (params.w_user, params.w_item, params.w_user_out, params.w_item_out):
        w.values = np.eye(w.shape[0])


def random_graph(rng, n_users, n_items, density=0.3):
    edges = {(f"u{u:02d}", f"i{u % n_items:02d}") for u in range(n_users)}
    edges |= {(f"u{i % n_users:02d}", f"i{i:02d}") for i in range(n_items)}
    for u in range(n_users):
        for i in np.flatnonzero(rng.random(n_items) < density):
            edges.add((f"u{u:02d}", f"i{i:02d}"))
    return BipartiteGraph.from_edges(edges)


class TestTwoHopAggregation:

    def test_single_edge_is_identity(self, rng):
        graph = BipartiteGraph.from_edges([("u", "i")], normalization="none")
        encoder = make_encoder(graph, dim=4, negative_slope=1.0)
        params = encoder.init_params(rng)
        identity_maps(params)
        np.testing.assert_allclose(encoder.two_hop_aggregate(graph, params, "user").values, params.users.values)
        np.testing.assert_allclose(encoder.two_hop_aggregate(graph, params, "item").values, params.items.values)

    def test_users_sharing_an_item_sum(self, rng):
        graph = BipartiteGraph.from_edges([("u1", "i"), ("u2", "i")], normalization="none")
        encoder = make_encoder(graph, dim=4, negative_slope=1.0)
        params = encoder.init_params(rng)
        identity_maps(params)
        total = params.users.values.sum(axis=0)
        np.testing.assert_allclose(encoder.two_hop_aggregate(graph, params, "user").values, [total, total])

    def test_matches_dense_oracle(self, rng):
        graph = random_graph(rng, 12, 9)
        encoder = make_encoder(graph, dim=5)
        params = encoder.init_params(rng)
        a = graph.normalized.to_dense()
        u, v = params.users.values, params.items.values
        expected_users = a @ leaky(a.T @ u @ params.w_user.values) @ params.w_user_out.values
        expected_items = a.T @ leaky(a @ v @ params.w_item.values) @ params.w_item_out.values
        np.testing.assert_allclose(encoder.two_hop_aggregate(graph, params, "user").values, expected_users, atol=1e-12)
        np.testing.assert_allclose(encoder.two_hop_aggregate(graph, params, "item").values, expected_items, atol=1e-12)

    def test_unknown_side(self, toy_graphs, rng):
        source, _ = toy_graphs
        encoder = make_encoder(source)
        with pytest.raises(ValueError, match="side"):
            encoder.two_hop_aggregate(source, encoder.init_params(rng), "edge")


class TestEncode:

    def test_output_shapes(self, toy_graphs, rng):
        source, _ = toy_graphs
        encoder = make_encoder(source, dim=4, layers=3)
        encoded = encoder.encode(source, encoder.init_params(rng))
        assert encoded.users.shape == (6, 12)
        assert encoded.items.shape == (5, 12)
        assert encoded.width == encoder.width == 12

    def test_single_layer(self, toy_graphs, rng):
        source, _ = toy_graphs
        encoder = make_encoder(source, dim=4, layers=1)
        params = encoder.init_params(rng)
        aggregated = encoder.two_hop_aggregate(source, params, "user").values
        expected = leaky(np.hstack([aggregated, params.users.values]) @ params.mixer_weights[0].values
                         + params.mixer_biases[0].values)
        np.testing.assert_allclose(encoder.encode(source, params).users.values, expected, atol=1e-12)

    def test_two_layers_match_straight_line_numpy(self, rng):
        graph = random_graph(rng, 8, 6)
        encoder = make_encoder(graph, dim=3, layers=2)
        params = encoder.init_params(rng)
        a = graph.normalized.to_dense()
        m1, b1 = params.mixer_weights[0].values, params.mixer_biases[0].values
        m2, b2 = params.mixer_weights[1].values, params.mixer_biases[1].values

        def expected(initial, aggregated):
            h1 = leaky(np.hstack([aggregated, initial]) @ m1 + b1)
            h2 = leaky(np.hstack([h1, initial]) @ m2 + b2)
            return np.hstack([h1, h2])

        u, v = params.users.values, params.items.values
        agg_u = a @ leaky(a.T @ u @ params.w_user.values) @ params.w_user_out.values
        agg_v = a.T @ leaky(a @ v @ params.w_item.values) @ params.w_item_out.values
        encoded = encoder.encode(graph, params)
        np.testing.assert_allclose(encoded.users.values, expected(u, agg_u), atol=1e-12)
        np.testing.assert_allclose(encoded.items.values, expected(v, agg_v), atol=1e-12)

    def test_rows_only_see_two_hops(self, chain_graph, rng):
        encoder = make_encoder(chain_graph, dim=3, layers=3)
        params = encoder.init_params(rng)
        before = encoder.encode(chain_graph, params).users.values.copy()
        u = chain_graph.user_index
        params.users.values[[u["u2"], u["u3"]]] += 5.0
        after = encoder.encode(chain_graph, params).users.values
        np.testing.assert_array_equal(after[u["u0"]], before[u["u0"]])
        assert not np.allclose(after[u["u1"]], before[u["u1"]])

    def test_relabelling_users_permutes_rows(self, rng):
        graph = random_graph(rng, 7, 5)
        order = list(reversed(graph.user_ids))
        relabelled = BipartiteGraph.from_edges(graph.edge_set(), user_order=order)
        encoder = make_encoder(graph, dim=3, layers=2)
        params = encoder.init_params(rng)
        permutation = [graph.user_index[user] for user in order]
        original = encoder.encode(graph, params)
        params.users.values = params.users.values[permutation]
        moved = encoder.encode(relabelled, params)
        np.testing.assert_allclose(moved.users.values, original.users.values[permutation], atol=1e-12)
        np.testing.assert_allclose(moved.items.values, original.items.values, atol=1e-12)

    def test_reaggregation_changes_deeper_layers(self, toy_graphs, rng):
        source, _ = toy_graphs
        plain = make_encoder(source, dim=3, layers=2)
        params = plain.init_params(rng)
        again = make_encoder(source, dim=3, layers=2, reaggregate_per_layer=True)
        first, second = plain.encode(source, params), again.encode(source, params)
        np.testing.assert_array_equal(first.users.values[:, :3], second.users.values[:, :3])
        assert not np.allclose(first.users.values[:, 3:], second.users.values[:, 3:])

    def test_dropout_only_in_training(self, toy_graphs, rng):
        source, _ = toy_graphs
        encoder = make_encoder(source, dim=3, dropout=0.5)
        params = encoder.init_params(rng)
        np.testing.assert_array_equal(encoder.encode(source, params).users.values,
                                      encoder.encode(source, params).users.values)
        trained = encoder.encode(source, params, training=True, rng=np.random.default_rng(0)).users.values
        assert np.any(trained == 0.0)
        with pytest.raises(ValueError, match="rng"):
            encoder.encode(source, params, training=True)

    def test_layer_count_mismatch(self, toy_graphs, rng):
        source, _ = toy_graphs
        params = make_encoder(source, layers=2).init_params(rng)
        with pytest.raises(ValueError):
            make_encoder(source, layers=3).encode(source, params)

    @pytest.mark.parametrize("kwargs", [{"layers": 0}, {"dim": 0}, {"dropout": 1.0}])
    def test_rejects_bad_settings(self, toy_graphs, kwargs):
        source, _ = toy_graphs
        with pytest.raises(ValueError):
            make_encoder(source, **kwargs)

    @pytest.mark.parametrize("reaggregate", [False, True])
    def test_gradients(self, toy_graphs, reaggregate):
        source, _ = toy_graphs
        encoder = make_encoder(source, dim=3, layers=2, reaggregate_per_layer=reaggregate)
        params = encoder.init_params(np.random.default_rng(21))

        def loss_fn():
            encoded = encoder.encode(source, params)
            return add(sum(square(encoded.users)), sum(square(encoded.items)))

        assert grad_check(loss_fn, list(params.named().values())) < 1e-4


class TestFoldIn:

    @pytest.fixture
    def grown(self):
        trained = BipartiteGraph.from_edges([("a", "x"), ("b", "x"), ("c", "y")])
        return trained, trained.with_extra_users({"z": ["x"], "w": ["y", "x"]})

    def test_new_users_average_their_two_hop_neighbours(self, grown, rng):
        trained, graph = grown
        encoder = make_encoder(trained, dim=4)
        params = encoder.init_params(rng)
        rows = encoder.fold_in_embeddings(graph, params, trained.n_users).values
        u = params.users.values
        np.testing.assert_array_equal(rows[:3], u)
        np.testing.assert_allclose(rows[graph.user_index["z"]], (u[0] + u[1]) / 2)
        np.testing.assert_allclose(rows[graph.user_index["w"]], (u[0] + u[1] + u[2]) / 3)

    def test_encode_with_folded_rows(self, grown, rng):
        trained, graph = grown
        encoder = make_encoder(trained, dim=4)
        params = encoder.init_params(rng)
        rows = encoder.fold_in_embeddings(graph, params, trained.n_users)
        encoded = encoder.encode(graph, params, user_embeddings=rows)
        assert encoded.users.shape == (5, 8)

    def test_no_new_users(self, grown, rng):
        trained, _ = grown
        encoder = make_encoder(trained, dim=4)
        params = encoder.init_params(rng)
        np.testing.assert_array_equal(encoder.fold_in_embeddings(trained, params, 3).values, params.users.values)

    def test_wrong_training_count(self, grown, rng):
        trained, graph = grown
        encoder = make_encoder(trained, dim=4)
        with pytest.raises(ValueError):
            encoder.fold_in_embeddings(graph, encoder.init_params(rng), 2)
