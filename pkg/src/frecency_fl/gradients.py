"""Finite-difference gradients of black-box losses over the model weights."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .frecency import ModelParams

DEFAULT_EPSILON = 1e-4


class DiffMode(enum.Enum):
    CENTRAL = "central"
    FORWARD = "forward"


@dataclass(frozen=True)
class GradConfig:
    epsilon: float = DEFAULT_EPSILON
    mode: DiffMode = DiffMode.CENTRAL

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon!r}")
        object.__setattr__(self, "mode", DiffMode(self.mode))


class NonFiniteLossError(ArithmeticError):
    def __init__(self, component: int | None, value: float):
        where = "at the unperturbed point" if component is None else f"when perturbing weight {component}"
        super().__init__(f"loss is not finite ({value!r}) {where}")
        self.component = component
        self.value = value


def perturbation_sizes(theta: np.ndarray, epsilon: float) -> np.ndarray:
    """Per-weight step ``epsilon * max(1, |theta_k|)``."""
    return epsilon * np.maximum(1.0, np.abs(theta))


def approx_gradient_array(
    loss_fn: Callable[[np.ndarray], float],
    theta: np.ndarray,
    cfg: GradConfig = GradConfig(),
) -> np.ndarray:
    """Difference quotients of ``loss_fn`` around the weight vector ``theta``.

    Each component perturbs a single weight and keeps the others fixed.
    Central mode makes ``2 * d`` loss calls, forward mode ``d + 1``.
    """
    theta = np.array(theta, dtype=float)
    steps = perturbation_sizes(theta, cfg.epsilon)
    grad = np.empty_like(theta)

    def evaluate(k: int | None, vec: np.ndarray) -> float:
        value = float(loss_fn(vec))
        if not math.isfinite(value):
            raise NonFiniteLossError(k, value)
        return value

    if cfg.mode is DiffMode.FORWARD:
        base = evaluate(None, theta.copy())
    for k in range(theta.size):
        up = theta.copy()
        up[k] += steps[k]
        if cfg.mode is DiffMode.CENTRAL:
            down = theta.copy()
            down[k] -= steps[k]
            # Divide by the realized spacing, not the nominal one.
            grad[k] = (evaluate(k, up) - evaluate(k, down)) / (up[k] - down[k])
        else:
            grad[k] = (evaluate(k, up) - base) / (up[k] - theta[k])
    return grad


def approx_gradient(
    loss_fn: Callable[[ModelParams], float],
    params: ModelParams,
    cfg: GradConfig = GradConfig(),
) -> np.ndarray:
    """Gradient estimate of ``loss_fn`` at ``params``; ``params`` is never modified."""
    return approx_gradient_array(
        lambda theta: loss_fn(ModelParams.from_array(theta)), params.to_array(), cfg
    )
