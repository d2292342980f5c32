"""Evaluation statistics: loss smoothing, Mann-Whitney U, arm comparison and update stability."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import comb, ndtr
from scipy.stats import rankdata

from .protocol import ClientUpdate, weighted_average

EVAL_CSV_HEADER = ("arm", "metric", "mean", "n", "U", "p", "significant")
STABILITY_CSV_HEADER = ("iteration", "mean_l1", "std_l1")
METRICS = ("chars_typed", "selected_rank")

# Samples with at most this many pooled observations get an exact p-value.
EXACT_MAX_POOLED = 40


def rolling_average(series: Sequence[float], window: int = 5) -> list[float]:
    """Element ``t`` is the mean of the last ``min(t + 1, window)`` values."""
    if window < 1:
        raise ValueError("window must be >= 1")
    values = np.asarray(series, dtype=float)
    if values.size == 0:
        return []
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(values.size)
    lo = np.maximum(0, idx + 1 - window)
    return ((csum[idx + 1] - csum[lo]) / (idx + 1 - lo)).tolist()


def l1_distance(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(np.abs(u - v).sum())


class MWUResult(NamedTuple):
    u: float
    p: float


def _exact_p(ranks: np.ndarray, n1: int, u_obs: float) -> float:
    """Two-sided permutation p of U, counting subsets by tie group.

    Ranks are doubled so midranks are integers; the count of size-``n1``
    subsets with each rank sum is built group by group, picking ``k`` of the
    ``m`` tied observations in ``C(m, k)`` ways.
    """
    values, counts = np.unique(np.rint(2 * ranks).astype(np.int64), return_counts=True)
    # ways[j] maps doubled rank sum -> number of subsets of size j
    ways: list[dict[int, int]] = [defaultdict(int) for _ in range(n1 + 1)]
    ways[0][0] = 1
    for value, m in zip(values.tolist(), counts.tolist()):
        for j in range(n1, 0, -1):
            for k in range(1, min(m, j) + 1):
                factor = comb(m, k, exact=True)
                for total, w in ways[j - k].items():
                    ways[j][total + k * value] += w * factor
    n2 = ranks.size - n1
    offset = n1 * (n1 + 1)  # doubled
    mu2 = n1 * n2  # doubled mean of U
    obs = abs(2 * u_obs - mu2)
    hits = sum(w for total, w in ways[n1].items() if abs(total - offset - mu2) >= obs - 1e-9)
    return min(1.0, hits / comb(ranks.size, n1, exact=True))


def mann_whitney_u(a, b, method: str = "auto", use_continuity: bool = True) -> MWUResult:
    """Mann-Whitney U of sample ``a`` against ``b`` with a two-sided p-value.

    ``U`` counts pairs with ``a_i > b_j`` plus half the ties (midranks).
    ``method="asymptotic"`` uses the tie-corrected normal approximation with
    continuity correction; ``"exact"`` the permutation distribution; ``"auto"``
    picks exact when the pooled sample is small (at most
    ``EXACT_MAX_POOLED``), where the normal approximation is poor.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be nonempty")
    if method not in ("auto", "exact", "asymptotic"):
        raise ValueError(f"unknown method {method!r}")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2)
    n = n1 + n2
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float((tie_counts.astype(float) ** 3 - tie_counts).sum())
    if tie_term == n**3 - n:
        return MWUResult(u, 1.0)
    if method == "exact" or (method == "auto" and n <= EXACT_MAX_POOLED):
        return MWUResult(u, _exact_p(ranks, n1, u))
    mu = n1 * n2 / 2.0
    sigma = math.sqrt(n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))))
    dev = abs(u - mu)
    if use_continuity:
        dev = max(dev - 0.5, 0.0)
    p = 2.0 * ndtr(-dev / sigma)
    return MWUResult(u, float(min(1.0, p)))


@dataclass(frozen=True)
class ArmMetrics:
    name: str
    chars_typed: tuple[int, ...]
    selected_rank: tuple[int, ...]

    @classmethod
    def from_events(cls, name: str, events) -> "ArmMetrics":
        return cls(
            name,
            tuple(e.chars_typed for e in events),
            tuple(e.selected_index for e in events),
        )

    def values(self, metric: str) -> tuple[int, ...]:
        return getattr(self, metric)


@dataclass(frozen=True)
class ComparisonResult:
    arm: str
    reference: str
    metric: str
    u: float
    p: float
    significant: bool


@dataclass
class EvalReport:
    means: dict[tuple[str, str], float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    tests: list[ComparisonResult] = field(default_factory=list)
    threshold: float = 0.05
    arms: list[str] = field(default_factory=list)

    def test(self, arm: str, metric: str) -> Optional[ComparisonResult]:
        for t in self.tests:
            if t.arm == arm and t.metric == metric:
                return t
        return None

    def rows(self) -> list[tuple]:
        out = []
        for arm in self.arms:
            for metric in METRICS:
                t = self.test(arm, metric)
                out.append(
                    (
                        arm,
                        metric,
                        self.means[(arm, metric)],
                        self.counts[arm],
                        "" if t is None else t.u,
                        "" if t is None else t.p,
                        "" if t is None else str(t.significant).lower(),
                    )
                )
        return out


def compare_arms(
    treatment: ArmMetrics,
    controls: Sequence[ArmMetrics],
    alpha: float = 0.05,
    num_comparisons: int = 6,
) -> EvalReport:
    """Test the treatment against every control arm on both metrics at ``alpha / num_comparisons``."""
    threshold = alpha / num_comparisons
    report = EvalReport(threshold=threshold, arms=[treatment.name] + [c.name for c in controls])
    for arm in (treatment, *controls):
        report.counts[arm.name] = len(arm.chars_typed)
        for metric in METRICS:
            report.means[(arm.name, metric)] = float(np.mean(arm.values(metric)))
    for control in controls:
        for metric in METRICS:
            res = mann_whitney_u(treatment.values(metric), control.values(metric))
            report.tests.append(
                ComparisonResult(control.name, treatment.name, metric, res.u, res.p, res.p < threshold)
            )
    return report


@dataclass(frozen=True)
class StabilityRow:
    iteration: int
    mean_l1: float
    std_l1: float
    num_updates: int
    subsampled: bool


@dataclass
class StabilityReport:
    rows: list[StabilityRow] = field(default_factory=list)

    def qualifying(self) -> list[StabilityRow]:
        return [r for r in self.rows if r.subsampled]


def group_by_iteration(updates: Sequence[ClientUpdate]) -> dict[int, list[ClientUpdate]]:
    groups: dict[int, list[ClientUpdate]] = defaultdict(list)
    for u in updates:
        groups[u.iteration].append(u)
    return dict(sorted(groups.items()))


def stability_study(
    updates: Sequence[ClientUpdate],
    sample_size: int = 2000,
    trials: int = 50,
    seed: int = 0,
) -> StabilityReport:
    """L1 distance between each round's full aggregate and aggregates of random subsamples.

    Rounds with fewer than ``sample_size`` updates are reported with zero
    distance and ``subsampled=False``.
    """
    if sample_size < 1 or trials < 1:
        raise ValueError("sample_size and trials must be >= 1")
    report = StabilityReport()
    for iteration, group in group_by_iteration(updates).items():
        group = sorted(group, key=lambda u: u.client_id)
        if len(group) < sample_size:
            report.rows.append(StabilityRow(iteration, 0.0, 0.0, len(group), False))
            continue
        full = weighted_average(group)
        dists = []
        for trial in range(trials):
            rng = np.random.default_rng([seed, iteration, trial])
            picks = rng.choice(len(group), size=sample_size, replace=False)
            dists.append(l1_distance(weighted_average([group[i] for i in picks]), full))
        report.rows.append(
            StabilityRow(iteration, float(np.mean(dists)), float(np.std(dists)), len(group), True)
        )
    return report


def quartile_means(values: Sequence[float]) -> tuple[float, float]:
    """Mean over the first and over the last quarter of ``values``."""
    values = list(values)
    q = max(1, len(values) // 4)
    return float(np.mean(values[:q])), float(np.mean(values[-q:]))
