import logging
from dataclasses import dataclass, field

import numpy as np

from .Interactions import BipartiteGraph
from .Tensor import (
    ShapeError, Tensor, concat, dropout, leaky_relu, linear, matmul, spmm,
)


SIDES = ("user", "item")


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int, name: str) -> Tensor:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) parameter tensor."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


@dataclass
class EncoderParams:
    """
    Trainable weights of one domain's graph encoder.

    :param users: Initial user embeddings U (|U| x d).
    :param items: Initial item embeddings V (|V| x d).
    :param w_user, w_item: Inner aggregation maps W_u, W_v (d x d).
    :param w_user_out, w_item_out: Outer aggregation maps W_u', W_v' (d x d).
    :param mixer_weights: One (2d x d) map per layer, shared by users and items.
    :param mixer_biases: One (d,) bias per layer.
    """
    users: Tensor
    items: Tensor
    w_user: Tensor
    w_item: Tensor
    w_user_out: Tensor
    w_item_out: Tensor
    mixer_weights: list[Tensor] = field(default_factory=list)
    mixer_biases: list[Tensor] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.users.shape[1]

    @property
    def layers(self) -> int:
        return len(self.mixer_weights)

    def named(self) -> dict[str, Tensor]:
        named = {
            "users": self.users, "items": self.items,
            "w_user": self.w_user, "w_item": self.w_item,
            "w_user_out": self.w_user_out, "w_item_out": self.w_item_out,
        }
        for k, (w, b) in enumerate(zip(self.mixer_weights, self.mixer_biases), start=1):
            named[f"mixer{k}.weight"] = w
            named[f"mixer{k}.bias"] = b
        return named


@dataclass
class EncodedNodes:
    """Concatenated layer outputs: users (|U| x K*d) and items (|V| x K*d)."""
    users: Tensor
    items: Tensor

    @property
    def width(self) -> int:
        return self.users.shape[1]


class GraphEncoder:
    """
    Deterministic encoder of one domain: two-hop homogeneous aggregation feeds the first
    mixing layer, later layers mix the two previous layer outputs, and all layer outputs
    are concatenated.

    :param logger: logging.Logger instance for logging messages.
    :param n_users: Users of the training graph.
    :param n_items: Items of the training graph.
    :param dim: Embedding width d (default: 32).
    :param layers: Number of mixing layers K, >= 1 (default: 3).
    :param negative_slope: LeakyReLU slope of every activation (default: 0.01).
    :param dropout: Rate applied to every layer output in training mode (default: 0.3).
    :param reaggregate_per_layer: Re-run two-hop aggregation on the previous output
                                  inside every layer k >= 2 (default: False).
    """

    def __init__(self, logger: logging.Logger, n_users: int, n_items: int, dim: int = 32, layers: int = 3,
                 negative_slope: float = 0.01, dropout: float = 0.3, reaggregate_per_layer: bool = False):
        if n_users < 1 or n_items < 1:
            raise ValueError("n_users and n_items must be >= 1")
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if layers < 1:
            raise ValueError("layers must be >= 1")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        self.logger = logger
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        self.dim = int(dim)
        self.layers = int(layers)
        self.negative_slope = float(negative_slope)
        self.dropout = float(dropout)
        self.reaggregate_per_layer = bool(reaggregate_per_layer)

    @property
    def width(self) -> int:
        return self.layers * self.dim

    def init_params(self, rng: np.random.Generator, prefix: str = "") -> EncoderParams:
        d = self.dim
        params = EncoderParams(
            users=uniform_init(rng, (self.n_users, d), d, f"{prefix}users"),
            items=uniform_init(rng, (self.n_items, d), d, f"{prefix}items"),
            w_user=uniform_init(rng, (d, d), d, f"{prefix}w_user"),
            w_item=uniform_init(rng, (d, d), d, f"{prefix}w_item"),
            w_user_out=uniform_init(rng, (d, d), d, f"{prefix}w_user_out"),
            w_item_out=uniform_init(rng, (d, d), d, f"{prefix}w_item_out"),
        )
        for k in range(1, self.layers + 1):
            params.mixer_weights.append(uniform_init(rng, (2 * d, d), 2 * d, f"{prefix}mixer{k}.weight"))
            params.mixer_biases.append(uniform_init(rng, (d,), 2 * d, f"{prefix}mixer{k}.bias"))
        self.logger.debug(f"[Encoder] initialized {self.n_users} users, {self.n_items} items, K={self.layers}, d={d}")
        return params

    def _check(self, params: EncoderParams):
        if params.layers != self.layers:
            raise ShapeError("encode", (params.layers,), (self.layers,))
        for k, w in enumerate(params.mixer_weights, start=1):
            if w.shape != (2 * self.dim, self.dim):
                raise ShapeError(f"mixer{k}", w.shape, (2 * self.dim, self.dim))

    def two_hop_aggregate(self, graph: BipartiteGraph, params: EncoderParams, side: str,
                          embeddings: Tensor | None = None) -> Tensor:
        """
        Users: A_n . act(A_n^T U W_u) . W_u'; items: A_n^T . act(A_n V W_v) . W_v',
        with A_n the normalized adjacency. Row i depends only on nodes within two hops of i.

        :param embeddings: Node rows to aggregate instead of the initial embeddings.
        """
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got '{side}'")
        if side == "user":
            rows = params.users if embeddings is None else embeddings
            if rows.shape[0] != graph.n_users:
                raise ShapeError("two_hop_aggregate", rows.shape, graph.adjacency.shape)
            hop = leaky_relu(spmm(graph.normalized_transpose, matmul(rows, params.w_user)), self.negative_slope)
            return matmul(spmm(graph.normalized, hop), params.w_user_out)
        rows = params.items if embeddings is None else embeddings
        if rows.shape[0] != graph.n_items:
            raise ShapeError("two_hop_aggregate", rows.shape, graph.adjacency.shape)
        hop = leaky_relu(spmm(graph.normalized, matmul(rows, params.w_item)), self.negative_slope)
        return matmul(spmm(graph.normalized_transpose, hop), params.w_item_out)

    def _mix(self, params: EncoderParams, k: int, left: Tensor, right: Tensor,
             training: bool, rng: np.random.Generator | None) -> Tensor:
        mixed = linear(concat([left, right], axis=1), params.mixer_weights[k], params.mixer_biases[k])
        return dropout(leaky_relu(mixed, self.negative_slope), self.dropout, rng, training)

    def _encode_side(self, graph: BipartiteGraph, params: EncoderParams, side: str, initial: Tensor,
                     training: bool, rng: np.random.Generator | None) -> Tensor:
        aggregated = self.two_hop_aggregate(graph, params, side, initial)
        outputs = [initial, self._mix(params, 0, aggregated, initial, training, rng)]
        for k in range(1, self.layers):
            previous = outputs[-1]
            if self.reaggregate_per_layer:
                previous = self.two_hop_aggregate(graph, params, side, previous)
            outputs.append(self._mix(params, k, previous, outputs[-2], training, rng))
        return concat(outputs[1:], axis=1) if self.layers > 1 else outputs[1]

    def encode(self, graph: BipartiteGraph, params: EncoderParams, training: bool = False,
               rng: np.random.Generator | None = None, user_embeddings: Tensor | None = None) -> EncodedNodes:
        """
        Encode every user and item of ``graph``.

        :param training: Apply dropout to layer outputs (needs ``rng``).
        :param user_embeddings: Initial user rows to use instead of ``params.users``, e.g. with
                                folded-in evaluation users appended.
        """
        self._check(params)
        users = params.users if user_embeddings is None else user_embeddings
        encoded = EncodedNodes(
            users=self._encode_side(graph, params, "user", users, training, rng),
            items=self._encode_side(graph, params, "item", params.items, training, rng),
        )
        if encoded.width != self.width:
            raise ShapeError("encode", encoded.users.shape, (graph.n_users, self.width))
        return encoded

    def fold_in_embeddings(self, graph: BipartiteGraph, params: EncoderParams, n_trained: int) -> Tensor:
        """
        Initial rows for a graph whose first ``n_trained`` users are training users: appended
        users get the mean initial embedding of the training users they reach in two hops,
        or the mean of all training users when they reach none.
        """
        trained = params.users.values
        if n_trained != trained.shape[0] or graph.n_users < n_trained:
            raise ShapeError("fold_in_embeddings", trained.shape, (n_trained, self.dim))
        if graph.n_users == n_trained:
            return Tensor(trained)
        csr = graph.adjacency.csr
        reach = (csr[n_trained:] @ csr[:n_trained].T).tocsr()
        reach.data[:] = 1.0
        counts = np.asarray(reach.sum(axis=1)).reshape(-1)
        extra = np.asarray(reach @ trained)
        fallback = trained.mean(axis=0)
        extra = np.where(counts[:, None] > 0, extra / np.maximum(counts, 1)[:, None], fallback[None, :])
        self.logger.debug(f"[Encoder] folded in {graph.n_users - n_trained} users, {int(np.sum(counts == 0))} without two-hop neighbors")
        return Tensor(np.vstack([trained, extra]))
