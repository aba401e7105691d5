import logging
from dataclasses import dataclass

import numpy as np

from .Encoder import uniform_init
from .Identifier import MEAN_ACTIVATIONS, DiagGaussian, mean_head
from .Tensor import (
    SCALE_FLOOR, ShapeError, Tensor, add, clamp_min, concat, div, linear, log, matmul, mean,
    mul, scaled_dot_product_attention, slice_cols, softplus, square, sub, sum,
)


DIRECTIONS = ("source", "target")


@dataclass
class MatchingParams:
    """
    Shared driven-representation map (2d -> K*d), self-attention over the group rows, and
    the predictive heads (K*d -> d) of each view.
    """
    driven_w: Tensor
    driven_b: Tensor
    query_w: Tensor
    key_w: Tensor
    value_w: Tensor
    out_w: Tensor
    source_mean_w: Tensor
    source_mean_b: Tensor
    source_scale_w: Tensor
    source_scale_b: Tensor
    target_mean_w: Tensor
    target_mean_b: Tensor
    target_scale_w: Tensor
    target_scale_b: Tensor

    def named(self) -> dict[str, Tensor]:
        return dict(vars(self))

    def view_heads(self, view: str) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        if view == "source":
            return self.source_mean_w, self.source_mean_b, self.source_scale_w, self.source_scale_b
        if view == "target":
            return self.target_mean_w, self.target_mean_b, self.target_scale_w, self.target_scale_b
        raise ValueError(f"view must be one of {DIRECTIONS}, got '{view}'")


@dataclass
class InvariantPreference:
    """Source-driven and target-driven predictive distributions of the invariant preference."""
    source: DiagGaussian
    target: DiagGaussian

    def __post_init__(self):
        if self.source.shape != self.target.shape:
            raise ShapeError("InvariantPreference", self.source.shape, self.target.shape)


class PreferenceMatcher:
    """
    Predictive distributions of cross-domain invariant preference from the level-2 samples
    of both domains.

    :param logger: logging.Logger instance for logging messages.
    :param width: K*d, the width of the driven representation.
    :param dim: d, the width of level-2 samples and of the predictive distributions.
    :param heads: Attention heads; must divide ``width`` (default: 2).
    :param dropout: Rate on the attention weights in training mode (default: 0.3).
    :param mean_activation: 'leaky_relu' (default) or 'relu' for the mean heads of both views.
    :param negative_slope: LeakyReLU slope of the mean heads (default: 0.01).
    """

    def __init__(self, logger: logging.Logger, width: int, dim: int, heads: int = 2, dropout: float = 0.3,
                 mean_activation: str = "leaky_relu", negative_slope: float = 0.01):
        if width < 1 or dim < 1:
            raise ValueError("width and dim must be >= 1")
        if heads < 1 or width % heads != 0:
            raise ValueError(f"heads must be >= 1 and divide width {width}, got {heads}")
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if mean_activation not in MEAN_ACTIVATIONS:
            raise ValueError(f"mean_activation must be one of {MEAN_ACTIVATIONS}, got '{mean_activation}'")
        self.logger = logger
        self.width = int(width)
        self.dim = int(dim)
        self.heads = int(heads)
        self.dropout = float(dropout)
        self.mean_activation = mean_activation
        self.negative_slope = float(negative_slope)

    @property
    def head_width(self) -> int:
        return self.width // self.heads

    def init_params(self, rng: np.random.Generator, prefix: str = "") -> MatchingParams:
        w, d = self.width, self.dim
        params = {
            "driven_w": uniform_init(rng, (2 * d, w), 2 * d, f"{prefix}driven.weight"),
            "driven_b": uniform_init(rng, (w,), 2 * d, f"{prefix}driven.bias"),
        }
        for name in ("query", "key", "value", "out"):
            params[f"{name}_w"] = uniform_init(rng, (w, w), w, f"{prefix}attention.{name}")
        for view in DIRECTIONS:
            for head in ("mean", "scale"):
                params[f"{view}_{head}_w"] = uniform_init(rng, (w, d), w, f"{prefix}{view}_{head}.weight")
                params[f"{view}_{head}_b"] = uniform_init(rng, (d,), w, f"{prefix}{view}_{head}.bias")
        return MatchingParams(**params)

    def self_attention(self, rows: Tensor, params: MatchingParams, training: bool = False,
                       rng: np.random.Generator | None = None) -> tuple[Tensor, list[Tensor]]:
        """Multi-head scaled dot-product attention across all rows; returns (mixed rows, per-head weights)."""
        query = matmul(rows, params.query_w)
        key = matmul(rows, params.key_w)
        value = matmul(rows, params.value_w)
        outputs, weights = [], []
        for h in range(self.heads):
            start, stop = h * self.head_width, (h + 1) * self.head_width
            out, w = scaled_dot_product_attention(
                slice_cols(query, start, stop), slice_cols(key, start, stop), slice_cols(value, start, stop),
                self.dropout, rng, training,
            )
            outputs.append(out)
            weights.append(w)
        mixed = concat(outputs, axis=1) if self.heads > 1 else outputs[0]
        return matmul(mixed, params.out_w), weights

    def driven_representation(self, z2_source: Tensor, z2_target: Tensor, direction: str,
                              params: MatchingParams, training: bool = False,
                              rng: np.random.Generator | None = None) -> Tensor:
        """
        W (z2_S || z2_T) + b for direction 'source', the reversed concatenation for 'target',
        followed by residual self-attention over the N rows.
        """
        if direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got '{direction}'")
        if z2_source.shape != z2_target.shape:
            raise ShapeError("driven_representation", z2_source.shape, z2_target.shape)
        if z2_source.ndim != 2 or z2_source.shape[1] != self.dim:
            raise ShapeError("driven_representation", z2_source.shape, (z2_source.shape[0], self.dim))
        ordered = [z2_source, z2_target] if direction == "source" else [z2_target, z2_source]
        projected = linear(concat(ordered, axis=1), params.driven_w, params.driven_b)
        attended, _ = self.self_attention(projected, params, training, rng)
        return add(projected, attended)

    def predictive_distribution(self, driven: Tensor, view: str, params: MatchingParams) -> DiagGaussian:
        """LeakyReLU (or ReLU) mean head and softplus scale head (floored) of one view."""
        if driven.ndim != 2 or driven.shape[1] != self.width:
            raise ShapeError("predictive_distribution", driven.shape, (driven.shape[0], self.width))
        mean_w, mean_b, scale_w, scale_b = params.view_heads(view)
        scale = clamp_min(softplus(linear(driven, scale_w, scale_b)), SCALE_FLOOR)
        mean_ = mean_head(linear(driven, mean_w, mean_b), self.mean_activation, self.negative_slope)
        return DiagGaussian(mean_, scale)

    def invariant_preference(self, z2_source: Tensor, z2_target: Tensor, params: MatchingParams,
                             training: bool = False, rng: np.random.Generator | None = None) -> InvariantPreference:
        views = {}
        for view in DIRECTIONS:
            driven = self.driven_representation(z2_source, z2_target, view, params, training, rng)
            views[view] = self.predictive_distribution(driven, view, params)
        return InvariantPreference(views["source"], views["target"])


def gaussian_kl(p: DiagGaussian, q: DiagGaussian) -> Tensor:
    """
    KL(p || q) of diagonal Gaussians in closed form, summed over dimensions and averaged
    over rows: ln(s_q / s_p) + (s_p^2 + (m_p - m_q)^2) / (2 s_q^2) - 1/2 per entry.
    """
    if p.shape != q.shape:
        raise ShapeError("gaussian_kl", p.shape, q.shape)
    p.check_floor()
    q.check_floor()
    spread = add(square(p.scale), square(sub(p.mean, q.mean)))
    per_entry = sub(add(log(div(q.scale, p.scale)), div(spread, mul(square(q.scale), 2.0))), 0.5)
    if per_entry.ndim < 2:
        return sum(per_entry)
    return mean(sum(per_entry, axis=1))


def matching_loss(inv: InvariantPreference) -> Tensor:
    """Symmetrized KL: 0.5 * (KL(p_S || p_T) + KL(p_T || p_S))."""
    return mul(add(gaussian_kl(inv.source, inv.target), gaussian_kl(inv.target, inv.source)), 0.5)


def monte_carlo_kl(p_mean: np.ndarray, p_scale: np.ndarray, q_mean: np.ndarray, q_scale: np.ndarray,
                   samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """
    Sampled estimate of the same row-averaged KL(p || q) from reparameterized draws of p.

    :return: (estimate, standard error of the estimate).
    """
    p_mean, p_scale = np.atleast_2d(p_mean), np.atleast_2d(p_scale)
    q_mean, q_scale = np.atleast_2d(q_mean), np.atleast_2d(q_scale)
    eps = rng.standard_normal((samples,) + p_mean.shape)
    x = p_mean + p_scale * eps
    log_ratio = (
        -0.5 * eps ** 2 - np.log(p_scale)
        + 0.5 * ((x - q_mean) / q_scale) ** 2 + np.log(q_scale)
    )
    per_sample = log_ratio.sum(axis=2).mean(axis=1)
    return float(per_sample.mean()), float(per_sample.std(ddof=1) / np.sqrt(samples))
