"""Run configuration and its JSON loader.

A run is described by one JSON object whose keys mirror the dataclasses
below. Unknown keys are rejected anywhere in the tree::

    {
      "num_clients_total": 5000,
      "clients_per_iteration": 200,
      "num_iterations": 100,
      "seed": 1,
      "aggregation_mode": "weighted_average",
      "initial_weights": {"type_typed": 0.5, "recency_4d": 40.0},
      "clients": {"pages_per_client": {"kind": "fixed", "value": 50}},
      "rprop": {"eta_max": 2.0}
    }

``initial_weights`` and ``ground_truth`` are partial overrides of the
default frecency weights, keyed by :data:`frecency_fl.frecency.PARAM_NAMES`.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frecency import DEFAULT_DECAY_RATE, DEFAULT_PARAMS, PARAM_NAMES, ModelParams
from .gradients import GradConfig
from .ranking_loss import LossConfig
from .rprop import ConstraintSpec, RpropConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IntDist:
    """Integer distribution: ``fixed`` (value), ``uniform`` (low..high inclusive) or ``poisson`` (mean)."""

    kind: str = "fixed"
    value: int = 1
    low: int = 0
    high: int = 0
    mean: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform", "poisson"):
            raise ConfigError(f"unknown integer distribution {self.kind!r}")
        if self.kind == "fixed" and self.value < 0:
            raise ConfigError("fixed value must be >= 0")
        if self.kind == "uniform" and not 0 <= self.low <= self.high:
            raise ConfigError("uniform needs 0 <= low <= high")
        if self.kind == "poisson" and not self.mean >= 0:
            raise ConfigError("poisson mean must be >= 0")

    def sample(self, rng: np.random.Generator) -> int:
        if self.kind == "fixed":
            return int(self.value)
        if self.kind == "uniform":
            return int(rng.integers(self.low, self.high + 1))
        return int(rng.poisson(self.mean))


@dataclass(frozen=True)
class AgeDist:
    """Visit-age distribution in days: truncated ``exponential`` or ``uniform`` on [0, max_days]."""

    kind: str = "exponential"
    mean: float = 20.0
    max_days: float = 365.0

    def __post_init__(self):
        if self.kind not in ("exponential", "uniform"):
            raise ConfigError(f"unknown age distribution {self.kind!r}")
        if not (self.mean > 0 and self.max_days > 0):
            raise ConfigError("age distribution needs mean > 0 and max_days > 0")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        if self.kind == "uniform":
            return u * self.max_days
        # Inverse CDF of an exponential truncated at max_days.
        tail = -np.expm1(-self.max_days / self.mean)
        return -self.mean * np.log1p(-u * tail)


@dataclass(frozen=True)
class ClientConfig:
    pages_per_client: IntDist = IntDist("uniform", low=50, high=150)
    # Mean of the visit-count distribution (counts are ceil(Exp) >= 1).
    visit_frequency_lambda: float = 7.0
    bookmark_fraction: float = 0.15
    click_noise_variance: float = 30.0
    recency_shape: AgeDist = AgeDist()
    searches_per_round: IntDist = IntDist("poisson", mean=2.0)
    display_limit: int = 10
    # followed_link, typed, bookmarked, other
    visit_type_probs: tuple[float, ...] = (0.6, 0.25, 0.1, 0.05)
    # Which page a search is for: weighted by ground-truth frecency, by visit count, or uniform.
    target_choice: str = "truth_frecency"

    def __post_init__(self):
        object.__setattr__(self, "visit_type_probs", tuple(float(p) for p in self.visit_type_probs))
        if not self.visit_frequency_lambda > 0:
            raise ConfigError("visit_frequency_lambda must be > 0")
        if not 0.0 <= self.bookmark_fraction <= 1.0:
            raise ConfigError("bookmark_fraction must be in [0, 1]")
        if not self.click_noise_variance >= 0:
            raise ConfigError("click_noise_variance must be >= 0")
        if self.display_limit < 1:
            raise ConfigError("display_limit must be >= 1")
        probs = self.visit_type_probs
        if len(probs) != 4 or min(probs) < 0 or not np.isclose(sum(probs), 1.0):
            raise ConfigError("visit_type_probs must be 4 nonnegative values summing to 1")
        if self.target_choice not in ("truth_frecency", "visit_count", "uniform"):
            raise ConfigError(f"unknown target_choice {self.target_choice!r}")


@dataclass(frozen=True)
class ConvergenceConfig:
    max_iterations: typing.Optional[int] = None
    # Stop once the largest weight change stays below this for `patience` rounds.
    min_step_norm: float = 0.0
    patience: int = 5


@dataclass(frozen=True)
class AdaptiveConfig:
    enabled: bool = False
    variance_threshold: float = 0.0
    min_updates: int = 1


@dataclass(frozen=True)
class EvalConfig:
    min_events_per_arm: int = 20000
    decay_rate: float = DEFAULT_DECAY_RATE
    alpha: float = 0.05
    num_comparisons: int = 6


@dataclass(frozen=True)
class StabilityConfig:
    sample_size: int = 2000
    trials: int = 50


@dataclass(frozen=True)
class RunConfig:
    num_clients_total: int = 5000
    clients_per_iteration: int = 200
    num_iterations: int = 100
    seed: int = 0
    aggregation_mode: str = "weighted_average"
    ground_truth: typing.Optional[dict] = None
    initial_weights: typing.Optional[dict] = None
    loss: LossConfig = LossConfig()
    grad: GradConfig = GradConfig()
    rprop: RpropConfig = RpropConfig()
    constraints: ConstraintSpec = ConstraintSpec()
    convergence: ConvergenceConfig = ConvergenceConfig()
    adaptive: AdaptiveConfig = AdaptiveConfig()
    clients: ClientConfig = ClientConfig()
    evaluation: EvalConfig = EvalConfig()
    stability: StabilityConfig = StabilityConfig()

    def __post_init__(self):
        if not 1 <= self.clients_per_iteration <= self.num_clients_total:
            raise ConfigError("need 1 <= clients_per_iteration <= num_clients_total")
        if self.num_iterations < 0:
            raise ConfigError("num_iterations must be >= 0")
        if self.aggregation_mode not in ("weighted_average", "sign_vote"):
            raise ConfigError(f"unknown aggregation_mode {self.aggregation_mode!r}")
        for name in ("ground_truth", "initial_weights"):
            weights = getattr(self, name)
            if weights is not None:
                unknown = set(weights) - set(PARAM_NAMES)
                if unknown:
                    raise ConfigError(f"{name}: unknown weight names {sorted(unknown)}")

    @property
    def truth_params(self) -> ModelParams:
        return _override(DEFAULT_PARAMS, self.ground_truth)

    @property
    def initial_params(self) -> ModelParams:
        return _override(DEFAULT_PARAMS, self.initial_weights)

    @property
    def max_iterations(self) -> int:
        limit = self.convergence.max_iterations
        return self.num_iterations if limit is None else min(self.num_iterations, limit)


def _override(base: ModelParams, weights: typing.Optional[dict]) -> ModelParams:
    merged = base.to_dict()
    merged.update(weights or {})
    return ModelParams.from_dict(merged)


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce(hints[key], value, f"{path}.{key}" if path else key)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _coerce(hint, value, path: str):
    origin = typing.get_origin(hint)
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        return None if value is None else _coerce(args[0], value, path)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path)
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        try:
            return hint(value)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if origin is tuple:
        return tuple(value)
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint in (int, bool, str) and not isinstance(value, hint):
        raise ConfigError(f"{path}: expected {hint.__name__}, got {value!r}")
    if hint is int and isinstance(value, bool):
        raise ConfigError(f"{path}: expected int, got {value!r}")
    return value


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    """Plain-JSON view of a config dataclass (enums become their values)."""
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            value = config_to_dict(value)
        elif isinstance(value, enum.Enum):
            value = value.value
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out
