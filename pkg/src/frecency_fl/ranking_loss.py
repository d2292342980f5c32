"""Pointwise SVM ranking loss for a single search event."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frecency import ModelParams, Page, frecency, page_features, weight_outer_array

DEFAULT_MARGIN = 5.0


@dataclass(frozen=True)
class SearchEvent:
    candidates: tuple[Page, ...]
    selected_index: int
    chars_typed: int = 0
    query: str = ""

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("a search event needs at least one candidate")
        if not 0 <= self.selected_index < len(self.candidates):
            raise ValueError(
                f"selected_index {self.selected_index} out of range for "
                f"{len(self.candidates)} candidates"
            )
        if self.chars_typed < 0:
            raise ValueError("chars_typed must be >= 0")


@dataclass(frozen=True)
class LossConfig:
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError(f"margin must be > 0, got {self.margin!r}")


def svm_loss(scores, selected_index: int, margin: float) -> float:
    """Sum of ``max(0, s_j + margin - s_i)`` over every ``j != i``."""
    scores = np.asarray(scores, dtype=float)
    if not 0 <= selected_index < len(scores):
        raise IndexError(f"selected_index {selected_index} out of range for {len(scores)} scores")
    hinge = np.maximum(0.0, scores + margin - scores[selected_index])
    hinge[selected_index] = 0.0
    return float(hinge.sum())


def event_loss(params: ModelParams, event: SearchEvent, cfg: LossConfig = LossConfig()) -> float:
    scores = [frecency(page, params) for page in event.candidates]
    return svm_loss(scores, event.selected_index, cfg.margin)


class EventLoss:
    """Loss of one event as a function of the weight vector.

    Candidate features are computed once, so repeated evaluation during
    gradient estimation only costs one small matrix product. Agrees with
    :func:`event_loss` up to floating-point rounding.
    """

    def __init__(self, event: SearchEvent, cfg: LossConfig = LossConfig(), features=None):
        self.event = event
        self.margin = cfg.margin
        if features is None:
            features = np.stack([page_features(page) for page in event.candidates])
        self.features = features

    def scores(self, theta: np.ndarray) -> np.ndarray:
        return self.features @ weight_outer_array(np.asarray(theta, dtype=float))

    def __call__(self, params) -> float:
        theta = params.to_array() if isinstance(params, ModelParams) else params
        return svm_loss(self.scores(theta), self.event.selected_index, self.margin)
