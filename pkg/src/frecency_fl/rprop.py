"""Server-side Rprop, sign-vote aggregation and the safeguard projection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .frecency import NUM_BUCKETS, NUM_WEIGHTS, ModelParams


@dataclass(frozen=True)
class RpropConfig:
    """Rprop hyperparameters.

    ``alpha`` grows a step size while the gradient sign persists, ``beta``
    shrinks it after a sign flip. Step sizes are clipped to
    ``[eta_min, eta_max]``.
    """

    eta0: float = 0.5
    alpha: float = 1.2
    beta: float = 0.5
    eta_min: float = 1e-3
    eta_max: float = 2.0

    def __post_init__(self):
        if not self.alpha > 1.0 > self.beta > 0.0:
            raise ValueError(f"need alpha > 1 > beta > 0, got alpha={self.alpha}, beta={self.beta}")
        if not 0.0 < self.eta_min <= self.eta0 <= self.eta_max:
            raise ValueError("need 0 < eta_min <= eta0 <= eta_max")


@dataclass(frozen=True)
class RpropState:
    step_sizes: np.ndarray
    prev_grad_signs: np.ndarray
    hyper: RpropConfig = field(default_factory=RpropConfig)

    @classmethod
    def initial(cls, hyper: RpropConfig = RpropConfig(), size: int = NUM_WEIGHTS) -> "RpropState":
        return cls(np.full(size, hyper.eta0), np.zeros(size), hyper)

    def to_dict(self) -> dict:
        return {
            "step_sizes": self.step_sizes.tolist(),
            "prev_grad_signs": [int(s) for s in self.prev_grad_signs],
            "hyper": {
                "eta0": self.hyper.eta0,
                "alpha": self.hyper.alpha,
                "beta": self.hyper.beta,
                "eta_min": self.hyper.eta_min,
                "eta_max": self.hyper.eta_max,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RpropState":
        return cls(
            np.array(data["step_sizes"], dtype=float),
            np.array(data["prev_grad_signs"], dtype=float),
            RpropConfig(**data["hyper"]),
        )

    def __eq__(self, other):
        if not isinstance(other, RpropState):
            return NotImplemented
        return (
            self.hyper == other.hyper
            and np.array_equal(self.step_sizes, other.step_sizes)
            and np.array_equal(self.prev_grad_signs, other.prev_grad_signs)
        )


@dataclass(frozen=True)
class ConstraintSpec:
    nonneg: bool = True
    monotone_recency: bool = True
    max_step: float = RpropConfig.eta_max

    def __post_init__(self):
        if not self.max_step > 0:
            raise ValueError("max_step must be > 0")


class NonFiniteGradientError(ArithmeticError):
    pass


def update_step_sizes(state: RpropState, signs: np.ndarray) -> np.ndarray:
    hyper = state.hyper
    agreement = signs * state.prev_grad_signs
    eta = state.step_sizes.copy()
    grow = agreement > 0
    shrink = agreement < 0
    eta[grow] = np.minimum(eta[grow] * hyper.alpha, hyper.eta_max)
    eta[shrink] = np.maximum(eta[shrink] * hyper.beta, hyper.eta_min)
    return eta


def rprop_delta(state: RpropState, grad) -> tuple[np.ndarray, RpropState]:
    """Raw weight change for one Rprop iteration, before any projection.

    Step sizes are adapted first and the step is taken with the adapted size.
    """
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.step_sizes.shape:
        raise ValueError(f"gradient shape {grad.shape} != {state.step_sizes.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError(f"non-finite gradient components at {np.flatnonzero(~np.isfinite(grad)).tolist()}")
    signs = np.sign(grad)
    eta = update_step_sizes(state, signs)
    return -eta * signs, replace(state, step_sizes=eta, prev_grad_signs=signs)


def rprop_step(
    state: RpropState,
    grad,
    params: ModelParams,
    constraints: ConstraintSpec = ConstraintSpec(),
) -> tuple[ModelParams, RpropState]:
    delta, new_state = rprop_delta(state, grad)
    delta = np.clip(delta, -constraints.max_step, constraints.max_step)
    stepped = ModelParams.from_array(params.to_array() + delta)
    return project(stepped, constraints), new_state


def sign_vote(updates) -> np.ndarray:
    """Componentwise most common sign; an exact tie for the lead gives 0."""
    signs = np.sign(np.asarray(updates, dtype=float))
    if signs.ndim != 2 or signs.shape[0] == 0:
        raise ValueError("sign_vote needs a nonempty list of sign vectors")
    pos = (signs > 0).sum(axis=0)
    neg = (signs < 0).sum(axis=0)
    zero = (signs == 0).sum(axis=0)
    vote = np.zeros(signs.shape[1])
    vote[(pos > neg) & (pos > zero)] = 1.0
    vote[(neg > pos) & (neg > zero)] = -1.0
    return vote


def project(params: ModelParams, spec: ConstraintSpec = ConstraintSpec()) -> ModelParams:
    theta = params.to_array()
    if spec.nonneg:
        theta = np.maximum(theta, 0.0)
    if spec.monotone_recency:
        for b in range(1, NUM_BUCKETS):
            theta[b] = min(theta[b], theta[b - 1])
    return ModelParams.from_array(theta)
