import math
from dataclasses import dataclass, field

import numpy as np

from .Encoder import uniform_init
from .Identifier import DiagGaussian
from .Matching import gaussian_kl
from .Tensor import (
    ShapeError, Tensor, add, as_tensor, bce_with_logits, concat, linear, matmul, mul,
    reshape, row_dot, sigmoid, take_rows, transpose,
)


COMPONENTS = ("matching", "domain", "user_source", "user_target")
CSV_COLUMNS = {"matching": "L_m", "domain": "L_d", "user_source": "L_u_source", "user_target": "L_u_target"}


class NonFiniteLossError(FloatingPointError):
    """A loss component evaluated to NaN or Inf."""

    def __init__(self, component: str, value: float):
        self.component = component
        self.value = value
        super().__init__(f"loss component '{component}' is not finite ({value})")


@dataclass
class LossBreakdown:
    """
    Reported values of the four loss terms and their sum. ``objective`` is the tensor
    actually differentiated; it leaves out the matching term during warmup.
    """
    matching: float
    domain: float
    user_source: float
    user_target: float
    total: float
    objective: Tensor | None = field(default=None, compare=False, repr=False)

    def as_row(self) -> dict[str, float]:
        row = {CSV_COLUMNS[name]: getattr(self, name) for name in COMPONENTS}
        row["total"] = self.total
        return row


@dataclass
class ProjectionParams:
    """Level-2 item projection K*d -> d, shared by both domains."""
    weight: Tensor
    bias: Tensor

    def named(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


def init_projection(rng: np.random.Generator, width: int, dim: int, prefix: str = "") -> ProjectionParams:
    return ProjectionParams(
        uniform_init(rng, (width, dim), width, f"{prefix}weight"),
        uniform_init(rng, (dim,), width, f"{prefix}bias"),
    )


def project_items(latents: Tensor, params: ProjectionParams) -> Tensor:
    if latents.ndim != 2 or latents.shape[1] != params.weight.shape[0]:
        raise ShapeError("project_items", latents.shape, params.weight.shape)
    return linear(latents, params.weight, params.bias)


def score(z_user, z_item) -> Tensor:
    """sigmoid(<z_user, z_item>) for single rows or row-aligned batches."""
    z_user, z_item = as_tensor(z_user), as_tensor(z_item)
    if z_user.shape != z_item.shape:
        raise ShapeError("score", z_user.shape, z_item.shape)
    if z_user.ndim == 1:
        return reshape(sigmoid(row_dot(reshape(z_user, (1, -1)), reshape(z_item, (1, -1)))), ())
    return sigmoid(row_dot(z_user, z_item))


def _pair_logits(z_users: Tensor, z_items: Tensor, users: np.ndarray, items: np.ndarray) -> Tensor:
    return row_dot(take_rows(z_users, users), take_rows(z_items, items))


def reconstruction_loss(z_users: Tensor, z_items: Tensor, positives: tuple[np.ndarray, np.ndarray],
                        negatives: tuple[np.ndarray, np.ndarray] | None = None) -> Tensor:
    """
    Mean binary cross-entropy over positive pairs (label 1) and sampled negative pairs (label 0).

    :param z_users: User latents; pair user indices address its rows.
    :param z_items: Item latents of the same width; pair item indices address its rows.
    :param positives: (user rows, item rows) of observed interactions.
    :param negatives: (user rows, item rows) of sampled non-interactions.
    """
    if z_users.ndim != 2 or z_items.ndim != 2 or z_users.shape[1] != z_items.shape[1]:
        raise ShapeError("reconstruction_loss", z_users.shape, z_items.shape)
    pos_users, pos_items = (np.asarray(a, dtype=np.int64) for a in positives)
    neg_users, neg_items = (np.asarray(a, dtype=np.int64) for a in negatives) if negatives else (
        np.empty(0, np.int64), np.empty(0, np.int64))
    if pos_users.size + neg_users.size == 0:
        raise ValueError("reconstruction_loss needs at least one pair")
    users = np.concatenate([pos_users, neg_users])
    items = np.concatenate([pos_items, neg_items])
    labels = np.concatenate([np.ones(pos_users.size), np.zeros(neg_users.size)])
    return bce_with_logits(_pair_logits(z_users, z_items, users, items), labels)


def exact_reconstruction_loss(z_users: Tensor, z_items: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over every (user, item) pair, labels being the dense 0/1 adjacency."""
    if z_users.ndim != 2 or z_items.ndim != 2 or z_users.shape[1] != z_items.shape[1]:
        raise ShapeError("exact_reconstruction_loss", z_users.shape, z_items.shape)
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (z_users.shape[0], z_items.shape[0]):
        raise ShapeError("exact_reconstruction_loss", labels.shape, (z_users.shape[0], z_items.shape[0]))
    return bce_with_logits(matmul(z_users, transpose(z_items)), labels)


@dataclass
class DomainState:
    """
    Level-1 quantities of one domain for one batch.

    Reconstruction uses ``labels`` (dense, exact) when given, else ``positives``/``negatives``.
    """
    user_posterior: DiagGaussian
    item_posterior: DiagGaussian
    user_latents: Tensor
    item_latents: Tensor
    positives: tuple[np.ndarray, np.ndarray] | None = None
    negatives: tuple[np.ndarray, np.ndarray] | None = None
    labels: np.ndarray | None = None

    def reconstruction(self) -> Tensor:
        if self.labels is not None:
            return exact_reconstruction_loss(self.user_latents, self.item_latents, self.labels)
        if self.positives is None:
            raise ValueError("DomainState needs positives or dense labels")
        return reconstruction_loss(self.user_latents, self.item_latents, self.positives, self.negatives)


@dataclass
class GroupState:
    """Level-2 posterior, prior, and sampled latents of one domain's user group."""
    posterior: DiagGaussian
    prior: DiagGaussian
    latents: Tensor
    positives: tuple[np.ndarray, np.ndarray] | None = None
    negatives: tuple[np.ndarray, np.ndarray] | None = None
    labels: np.ndarray | None = None


@dataclass
class CrossDomainState:
    """
    Both groups scored against the projected items of both domains, stacked as one
    candidate matrix (source items first); pair item indices address its rows.
    """
    source: GroupState
    target: GroupState
    items: Tensor

    def reconstruction(self, group: GroupState) -> Tensor:
        if group.labels is not None:
            return exact_reconstruction_loss(group.latents, self.items, group.labels)
        if group.positives is None:
            raise ValueError("GroupState needs positives or dense labels")
        return reconstruction_loss(group.latents, self.items, group.positives, group.negatives)


def prior_kl(posterior: DiagGaussian) -> Tensor:
    """KL(posterior || N(0, I)), summed over dimensions and averaged over rows."""
    return gaussian_kl(posterior, DiagGaussian.standard(posterior.shape))


def user_vib_loss(state: DomainState, beta_user: float = 1.0, beta_item: float = 1.0) -> Tensor:
    """Reconstruction + beta_u KL(q(z1_u) || N(0, I)) + beta_v KL(q(z1_v) || N(0, I))."""
    if beta_user < 0 or beta_item < 0:
        raise ValueError("beta must be >= 0")
    loss = state.reconstruction()
    if beta_user:
        loss = add(loss, mul(prior_kl(state.user_posterior), beta_user))
    if beta_item:
        loss = add(loss, mul(prior_kl(state.item_posterior), beta_item))
    return loss


def domain_vib_loss(state: CrossDomainState, beta_source: float = 1.0, beta_target: float = 1.0) -> Tensor:
    """
    Cross-domain reconstruction of both groups under the block-diagonal joint adjacency,
    plus beta KL(q(z2) || p(z2 | z1)) for each domain.
    """
    if beta_source < 0 or beta_target < 0:
        raise ValueError("beta must be >= 0")
    loss = add(state.reconstruction(state.source), state.reconstruction(state.target))
    if beta_source:
        loss = add(loss, mul(gaussian_kl(state.source.posterior, state.source.prior), beta_source))
    if beta_target:
        loss = add(loss, mul(gaussian_kl(state.target.posterior, state.target.prior), beta_target))
    return loss


def stack_items(source_items: Tensor, target_items: Tensor) -> Tensor:
    return concat([source_items, target_items], axis=0)


def total_loss(components: dict[str, Tensor | float], epoch: int, warmup: int) -> LossBreakdown:
    """
    Sum the four terms. Before ``warmup`` epochs have passed the matching term is reported
    but left out of the differentiated objective.

    :param components: Values keyed by 'matching', 'domain', 'user_source', 'user_target';
                       missing terms count as 0.
    """
    values = {}
    for name, value in components.items():
        if name not in COMPONENTS:
            raise KeyError(f"unknown loss component '{name}', expected one of {COMPONENTS}")
    for name in COMPONENTS:
        value = components.get(name, 0.0)
        number = value.item() if isinstance(value, Tensor) else float(value)
        if not math.isfinite(number):
            raise NonFiniteLossError(name, number)
        values[name] = number

    objective = None
    for name in COMPONENTS:
        if name == "matching" and epoch < warmup:
            continue
        value = components.get(name)
        if isinstance(value, Tensor):
            objective = value if objective is None else add(objective, value)
    if objective is None:
        objective = Tensor(0.0)

    total = values["matching"] + values["domain"] + values["user_source"] + values["user_target"]
    return LossBreakdown(
        matching=values["matching"], domain=values["domain"],
        user_source=values["user_source"], user_target=values["user_target"],
        total=total, objective=objective,
    )
