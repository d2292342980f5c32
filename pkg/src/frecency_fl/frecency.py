"""Parameterized frecency scoring.

A page's score is built from its most recent visits. Each visit is worth
``recency(age) * type(visit_type)``; the page score averages the last
``RECENT_VISIT_CAP`` visit values and scales the average by the total number
of visits ever made to the page.

The eight optimizable weights live in :class:`ModelParams`. Bucket boundaries
and the recent-visit cap are structural and never optimized.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: Upper edges (inclusive, in days) of the first four recency buckets.
BUCKET_BOUNDARIES: tuple[float, ...] = (4.0, 14.0, 31.0, 90.0)
RECENT_VISIT_CAP = 10
NUM_BUCKETS = len(BUCKET_BOUNDARIES) + 1
NUM_TYPES = 3
NUM_WEIGHTS = NUM_BUCKETS + NUM_TYPES

PARAM_NAMES: tuple[str, ...] = (
    "recency_4d",
    "recency_14d",
    "recency_31d",
    "recency_90d",
    "recency_older",
    "type_followed_link",
    "type_typed",
    "type_bookmarked",
)

DEFAULT_DECAY_RATE = 0.025


class VisitType(enum.Enum):
    FOLLOWED_LINK = "followed_link"
    TYPED = "typed"
    BOOKMARKED = "bookmarked"
    OTHER = "other"


# Column of each visit type in the type-weight vector; OTHER has none.
TYPE_INDEX = {
    VisitType.FOLLOWED_LINK: 0,
    VisitType.TYPED: 1,
    VisitType.BOOKMARKED: 2,
}


@dataclass(frozen=True)
class Visit:
    age_days: float
    visit_type: VisitType

    def __post_init__(self):
        if not self.age_days >= 0:
            raise ValueError(f"visit age must be >= 0, got {self.age_days!r}")


@dataclass(frozen=True)
class Page:
    """A history entry.

    ``visits`` holds the recorded visits, newest first. ``total_visit_count``
    may exceed ``len(visits)`` when older visits were not retained.
    """

    id: int
    url: str
    visits: tuple[Visit, ...] = ()
    total_visit_count: int = 0
    bookmarked: bool = False

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(self.visits))
        if self.total_visit_count < len(self.visits):
            raise ValueError(
                f"page {self.id}: total_visit_count {self.total_visit_count} "
                f"< {len(self.visits)} recorded visits"
            )
        ages = [v.age_days for v in self.visits]
        if any(a > b for a, b in zip(ages, ages[1:])):
            raise ValueError(f"page {self.id}: visits must be sorted newest first")


@dataclass(frozen=True)
class ModelParams:
    recency_weights: tuple[float, ...] = (100.0, 70.0, 50.0, 30.0, 10.0)
    type_weights: tuple[float, ...] = (1.2, 2.0, 1.4)
    bucket_boundaries: tuple[float, ...] = field(default=BUCKET_BOUNDARIES, repr=False)
    recent_visit_cap: int = field(default=RECENT_VISIT_CAP, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "recency_weights", tuple(float(w) for w in self.recency_weights))
        object.__setattr__(self, "type_weights", tuple(float(w) for w in self.type_weights))
        if len(self.recency_weights) != NUM_BUCKETS:
            raise ValueError(f"expected {NUM_BUCKETS} recency weights")
        if len(self.type_weights) != NUM_TYPES:
            raise ValueError(f"expected {NUM_TYPES} type weights")

    def to_array(self) -> np.ndarray:
        return np.array(self.recency_weights + self.type_weights, dtype=float)

    @classmethod
    def from_array(cls, values) -> "ModelParams":
        values = [float(v) for v in values]
        if len(values) != NUM_WEIGHTS:
            raise ValueError(f"expected {NUM_WEIGHTS} weights, got {len(values)}")
        return cls(tuple(values[:NUM_BUCKETS]), tuple(values[NUM_BUCKETS:]))

    def to_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, self.to_array().tolist()))

    @classmethod
    def from_dict(cls, weights: dict[str, float]) -> "ModelParams":
        unknown = set(weights) - set(PARAM_NAMES)
        missing = set(PARAM_NAMES) - set(weights)
        if unknown or missing:
            raise ValueError(f"bad weight names: unknown={sorted(unknown)} missing={sorted(missing)}")
        return cls.from_array([weights[name] for name in PARAM_NAMES])


DEFAULT_PARAMS = ModelParams()


def recency_bucket(age_days: float, boundaries: Sequence[float] = BUCKET_BOUNDARIES) -> int:
    """Index of the bucket holding ``age_days``; a boundary day belongs to the newer bucket."""
    if not age_days >= 0:
        raise ValueError(f"age must be >= 0, got {age_days!r}")
    for idx, edge in enumerate(boundaries):
        if age_days <= edge:
            return idx
    return len(boundaries)


def recency_weight(age_days: float, params: ModelParams = DEFAULT_PARAMS) -> float:
    return params.recency_weights[recency_bucket(age_days, params.bucket_boundaries)]


def visit_score(visit: Visit, params: ModelParams = DEFAULT_PARAMS) -> float:
    if visit.visit_type is VisitType.OTHER:
        return 0.0
    return recency_weight(visit.age_days, params) * params.type_weights[TYPE_INDEX[visit.visit_type]]


def frecency(page: Page, params: ModelParams = DEFAULT_PARAMS) -> float:
    recent = page.visits[: params.recent_visit_cap]
    if not recent:
        return 0.0
    total = sum(visit_score(v, params) for v in recent)
    return page.total_visit_count / len(recent) * total


def page_features(page: Page, params: ModelParams = DEFAULT_PARAMS) -> np.ndarray:
    """Scaled (bucket, type) visit counts of a page, flattened to length 15.

    Frecency is bilinear in the weights, so
    ``frecency(page, p) == page_features(page) @ weight_outer(p)``.
    Only the structural constants of ``params`` are used.
    """
    counts = np.zeros((NUM_BUCKETS, NUM_TYPES))
    recent = page.visits[: params.recent_visit_cap]
    for visit in recent:
        if visit.visit_type is VisitType.OTHER:
            continue
        counts[recency_bucket(visit.age_days, params.bucket_boundaries), TYPE_INDEX[visit.visit_type]] += 1
    if recent:
        counts *= page.total_visit_count / len(recent)
    return counts.ravel()


def weight_outer(params: ModelParams) -> np.ndarray:
    return np.outer(params.recency_weights, params.type_weights).ravel()


def weight_outer_array(theta: np.ndarray) -> np.ndarray:
    return np.outer(theta[:NUM_BUCKETS], theta[NUM_BUCKETS:]).ravel()


def rank_pages(scores: np.ndarray, page_ids: np.ndarray) -> np.ndarray:
    """Order of indices by descending score; ties go to the smaller page id."""
    return np.lexsort((page_ids, -np.asarray(scores, dtype=float)))


def apply_decay(scores, rate: float = DEFAULT_DECAY_RATE, days=1) -> np.ndarray:
    """Multiply cached scores by ``(1 - rate) ** days``.

    ``days`` may be an array aligned with ``scores`` to decay each cached
    score by the number of days since it was last refreshed.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"decay rate must be in [0, 1), got {rate!r}")
    scores = np.asarray(scores, dtype=float)
    return scores * (1.0 - rate) ** np.asarray(days, dtype=float)
