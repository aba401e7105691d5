import logging
from dataclasses import dataclass

import numpy as np

from .Encoder import EncodedNodes, uniform_init
from .Interactions import BipartiteGraph
from .Tensor import (
    SCALE_FLOOR, ShapeError, Tensor, add, clamp_min, leaky_relu, linear, mul, relu,
    softmax, softplus, take_rows,
)


SIGMA1_ACTIVATIONS = ("softmax", "softplus")
# Mean heads of level 2 and of the matcher; "relu" heads can die and output all-zero rows.
MEAN_ACTIVATIONS = ("leaky_relu", "relu")


def mean_head(x: Tensor, activation: str, negative_slope: float = 0.01) -> Tensor:
    if activation == "leaky_relu":
        return leaky_relu(x, negative_slope)
    if activation == "relu":
        return relu(x)
    raise ValueError(f"mean activation must be one of {MEAN_ACTIVATIONS}, got '{activation}'")


@dataclass
class DiagGaussian:
    """Factorized Gaussian N(mean, diag(scale^2)) over the rows of a batch."""
    mean: Tensor
    scale: Tensor

    def __post_init__(self):
        if self.mean.shape != self.scale.shape:
            raise ShapeError("DiagGaussian", self.mean.shape, self.scale.shape)

    @property
    def shape(self) -> tuple:
        return self.mean.shape

    @classmethod
    def standard(cls, shape: tuple) -> "DiagGaussian":
        return cls(Tensor(np.zeros(shape)), Tensor(np.ones(shape)))

    def check_floor(self, floor: float = SCALE_FLOOR):
        smallest = float(np.min(self.scale.values)) if self.scale.values.size else floor
        if smallest < floor:
            raise ValueError(f"scale entry {smallest:.3g} is below the floor {floor:g}")

    def take_rows(self, indices) -> "DiagGaussian":
        return DiagGaussian(take_rows(self.mean, indices), take_rows(self.scale, indices))


@dataclass
class UserGroup:
    """N distinct users of one domain and their encoder rows."""
    indices: np.ndarray
    rows: Tensor

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass
class IdentifierParams:
    """Posterior heads of one domain; level-1 heads are K*d -> K*d, level-2 heads K*d -> d."""
    user_mean_w: Tensor
    user_mean_b: Tensor
    user_scale_w: Tensor
    user_scale_b: Tensor
    item_mean_w: Tensor
    item_mean_b: Tensor
    item_scale_w: Tensor
    item_scale_b: Tensor
    level2_mean_w: Tensor
    level2_mean_b: Tensor
    level2_scale_w: Tensor
    level2_scale_b: Tensor
    prior_mean_w: Tensor | None = None
    prior_mean_b: Tensor | None = None
    prior_scale_w: Tensor | None = None
    prior_scale_b: Tensor | None = None

    def named(self) -> dict[str, Tensor]:
        return {name: t for name, t in vars(self).items() if t is not None}

    def heads(self, side: str) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        if side == "user":
            return self.user_mean_w, self.user_mean_b, self.user_scale_w, self.user_scale_b
        if side == "item":
            return self.item_mean_w, self.item_mean_b, self.item_scale_w, self.item_scale_b
        raise ValueError(f"side must be 'user' or 'item', got '{side}'")


class LatentPreferenceIdentifier:
    """
    Amortized two-level Gaussian posteriors over latent preferences of one domain.

    :param logger: logging.Logger instance for logging messages.
    :param width: Encoder output width K*d.
    :param dim: Level-2 width d.
    :param sigma1_scale: Multiplier of the softmax level-1 scale; defaults to ``width`` so the
                         mean scale entry is 1.
    :param sigma1_activation: 'softmax' (default) or 'softplus' for the level-1 scale head.
    :param negative_slope: LeakyReLU slope of the level-1 mean head (default: 0.01).
    :param learned_prior: Use a learned conditional prior p(z2|z1) instead of N(0, I).
    :param mean2_activation: 'leaky_relu' (default) or 'relu' for the level-2 mean head.
    """

    def __init__(self, logger: logging.Logger, width: int, dim: int, sigma1_scale: float | None = None,
                 sigma1_activation: str = "softmax", negative_slope: float = 0.01, learned_prior: bool = False,
                 mean2_activation: str = "leaky_relu"):
        if width < 1 or dim < 1:
            raise ValueError("width and dim must be >= 1")
        if sigma1_activation not in SIGMA1_ACTIVATIONS:
            raise ValueError(f"sigma1_activation must be one of {SIGMA1_ACTIVATIONS}, got '{sigma1_activation}'")
        if mean2_activation not in MEAN_ACTIVATIONS:
            raise ValueError(f"mean2_activation must be one of {MEAN_ACTIVATIONS}, got '{mean2_activation}'")
        sigma1_scale = float(width if sigma1_scale is None else sigma1_scale)
        if sigma1_scale <= 0:
            raise ValueError("sigma1_scale must be > 0")
        self.logger = logger
        self.width = int(width)
        self.dim = int(dim)
        self.sigma1_scale = sigma1_scale
        self.sigma1_activation = sigma1_activation
        self.negative_slope = float(negative_slope)
        self.learned_prior = bool(learned_prior)
        self.mean2_activation = mean2_activation

    def init_params(self, rng: np.random.Generator, prefix: str = "") -> IdentifierParams:
        w, d = self.width, self.dim
        heads = {}
        for side in ("user", "item"):
            for head in ("mean", "scale"):
                heads[f"{side}_{head}_w"] = uniform_init(rng, (w, w), w, f"{prefix}{side}_{head}.weight")
                heads[f"{side}_{head}_b"] = uniform_init(rng, (w,), w, f"{prefix}{side}_{head}.bias")
        levels = ("level2", "prior") if self.learned_prior else ("level2",)
        for level in levels:
            for head in ("mean", "scale"):
                heads[f"{level}_{head}_w"] = uniform_init(rng, (w, d), w, f"{prefix}{level}_{head}.weight")
                heads[f"{level}_{head}_b"] = uniform_init(rng, (d,), w, f"{prefix}{level}_{head}.bias")
        return IdentifierParams(**heads)

    def _check_width(self, op: str, rows: Tensor):
        if rows.ndim != 2 or rows.shape[1] != self.width:
            raise ShapeError(op, rows.shape, (rows.shape[0] if rows.ndim else 0, self.width))

    def infer_level1(self, rows: Tensor, params: IdentifierParams, side: str = "user") -> DiagGaussian:
        """q(z1 | h): LeakyReLU mean head; softmax scale head times ``sigma1_scale``, floored."""
        self._check_width("infer_level1", rows)
        mean_w, mean_b, scale_w, scale_b = params.heads(side)
        mean = leaky_relu(linear(rows, mean_w, mean_b), self.negative_slope)
        logits = linear(rows, scale_w, scale_b)
        if self.sigma1_activation == "softmax":
            scale = mul(softmax(logits, axis=1), self.sigma1_scale)
        else:
            scale = softplus(logits)
        return DiagGaussian(mean, clamp_min(scale, SCALE_FLOOR))

    def sample(self, g: DiagGaussian, rng: np.random.Generator | None = None,
               deterministic: bool = False) -> Tensor:
        """Reparameterized draw mean + scale * eps; eps is a constant so only mean and scale get gradients."""
        if deterministic:
            return g.mean
        if rng is None:
            raise ValueError("sampling needs an rng unless deterministic=True")
        noise = Tensor(rng.standard_normal(g.shape))
        return add(g.mean, mul(g.scale, noise))

    def infer_level2(self, z1: Tensor, params: IdentifierParams) -> DiagGaussian:
        """q(z2 | z1) of a sampled group: LeakyReLU (or ReLU) mean head, softplus scale head, floored."""
        self._check_width("infer_level2", z1)
        mean = mean_head(linear(z1, params.level2_mean_w, params.level2_mean_b), self.mean2_activation,
                         self.negative_slope)
        scale = softplus(linear(z1, params.level2_scale_w, params.level2_scale_b))
        return DiagGaussian(mean, clamp_min(scale, SCALE_FLOOR))

    def prior_level2(self, z1: Tensor, params: IdentifierParams) -> DiagGaussian:
        """p(z2 | z1): N(0, I) unless the learned conditional prior is enabled."""
        if not self.learned_prior:
            return DiagGaussian.standard((z1.shape[0], self.dim))
        self._check_width("prior_level2", z1)
        mean = linear(z1, params.prior_mean_w, params.prior_mean_b)
        scale = softplus(linear(z1, params.prior_scale_w, params.prior_scale_b))
        return DiagGaussian(mean, clamp_min(scale, SCALE_FLOOR))


def sample_group(graph: BipartiteGraph, encoded: EncodedNodes, size: int, rng: np.random.Generator) -> UserGroup:
    """Uniform sample of ``size`` distinct training users of ``graph``, without replacement."""
    n_users = graph.n_users
    if size < 1:
        raise ValueError("group size must be >= 1")
    if size > n_users:
        raise ValueError(f"group size {size} exceeds the {n_users} users of the domain")
    indices = np.sort(rng.choice(n_users, size=size, replace=False))
    return UserGroup(indices, take_rows(encoded.users, indices))
