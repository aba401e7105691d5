import logging
from dataclasses import dataclass, field

import numpy as np

from .Tensor import ShapeError, Tensor


@dataclass
class AdamState:
    """Moment accumulators and settings of one Adam optimizer; ``step`` counts updates."""
    lr: float = 1e-3
    weight_decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moments: list[np.ndarray] = field(default_factory=list)
    second_moments: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros(cls, params: list[Tensor], **settings) -> "AdamState":
        state = cls(**settings)
        state.first_moments = [np.zeros_like(p.values) for p in params]
        state.second_moments = [np.zeros_like(p.values) for p in params]
        return state


def adam_step(params: list[Tensor], grads: list[np.ndarray | None], state: AdamState):
    """
    One bias-corrected Adam update with decoupled weight decay, applied in place.
    A missing gradient counts as zero.

    :return: (params, state), both updated.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moments):
        raise ShapeError("adam_step", (len(params),), (len(grads),), (len(state.first_moments),))
    for p, g, m in zip(params, grads, state.first_moments):
        if (g is not None and np.shape(g) != p.shape) or m.shape != p.shape:
            raise ShapeError("adam_step", p.shape, np.shape(g) if g is not None else m.shape)

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        g = np.zeros_like(p.values) if g is None else np.asarray(g, dtype=np.float64)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p.values -= state.lr * state.weight_decay * p.values
        p.values -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params, state


class Adam:
    """
    Adam over a fixed list of parameter tensors, reading gradients from ``Tensor.grad``.

    :param logger: logging.Logger instance for logging messages.
    :param params: Trainable tensors, updated in place.
    :param lr: Learning rate (default: 1e-3).
    :param weight_decay: Decoupled weight decay (default: 1e-6).
    """

    def __init__(self, logger: logging.Logger, params: list[Tensor], lr: float = 1e-3,
                 weight_decay: float = 1e-6, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be > 0")
        if weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("beta1 and beta2 must be in [0, 1)")
        self.logger = logger
        self.params = list(params)
        self.state = AdamState.zeros(self.params, lr=lr, weight_decay=weight_decay,
                                     beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state)
        self.logger.debug(f"[Adam] step {self.state.step}")

    def zero_grad(self):
        for p in self.params:
            p.grad = None
