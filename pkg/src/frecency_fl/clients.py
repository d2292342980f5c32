"""Synthetic client histories and simulated URL-bar searches.

Each client owns deterministic random streams keyed by
``(seed, stream, [iteration,] client_id)``, so any client's history or round
can be regenerated independently of every other client.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .config import ClientConfig, ConfigError
from .frecency import (
    BUCKET_BOUNDARIES,
    NUM_BUCKETS,
    NUM_TYPES,
    RECENT_VISIT_CAP,
    ModelParams,
    Page,
    Visit,
    VisitType,
    apply_decay,
    frecency,
    page_features,
    rank_pages,
    weight_outer,
)
from .gradients import GradConfig, approx_gradient_array
from .protocol import ClientUpdate
from .ranking_loss import EventLoss, LossConfig, SearchEvent

STREAM_HISTORY = 0
STREAM_TRAIN = 1
STREAM_EVAL = 2

_TYPE_ORDER = (VisitType.FOLLOWED_LINK, VisitType.TYPED, VisitType.BOOKMARKED, VisitType.OTHER)
_SCHEME = "https://"


def client_rng(seed: int, stream: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream, *(int(k) for k in keys)])


def page_url(page_index: int, client_id: int) -> str:
    return f"{_SCHEME}site{page_index}.example/{client_id}"


def typed_text(url: str) -> str:
    """What a user types to reach ``url``: the address without its scheme."""
    return url[len(_SCHEME):] if url.startswith(_SCHEME) else url


@dataclass(frozen=True)
class ClientHistory:
    client_id: int
    pages: tuple[Page, ...]
    seed: int = 0

    def __post_init__(self):
        ids = [p.id for p in self.pages]
        if len(set(ids)) != len(ids):
            raise ValueError(f"client {self.client_id}: duplicate page ids")

    def round_rng(self, iteration: int, stream: int = STREAM_TRAIN) -> np.random.Generator:
        return client_rng(self.seed, stream, iteration, self.client_id)

    @cached_property
    def features(self) -> np.ndarray:
        if not self.pages:
            return np.zeros((0, 15))
        return np.stack([page_features(p) for p in self.pages])

    @cached_property
    def page_ids(self) -> np.ndarray:
        return np.array([p.id for p in self.pages])

    @cached_property
    def visit_counts(self) -> np.ndarray:
        return np.array([p.total_visit_count for p in self.pages], dtype=float)

    @cached_property
    def days_since_refresh(self) -> np.ndarray:
        return np.array([math.floor(p.visits[0].age_days) if p.visits else 0 for p in self.pages], dtype=float)

    @cached_property
    def search_urls(self) -> list[str]:
        return [p.url.lower() for p in self.pages]

    @cached_property
    def _row_of(self) -> dict[int, int]:
        return {p.id: row for row, p in enumerate(self.pages)}

    def candidate_features(self, pages: Sequence[Page]) -> np.ndarray:
        return self.features[[self._row_of[p.id] for p in pages]]

    def scores(self, params: ModelParams) -> np.ndarray:
        return self.features @ weight_outer(params)


def gen_history(client_id: int, cfg: ClientConfig = ClientConfig(), seed: int = 0) -> ClientHistory:
    rng = client_rng(seed, STREAM_HISTORY, client_id)
    n_pages = cfg.pages_per_client.sample(rng)
    counts = np.maximum(1, np.ceil(rng.exponential(cfg.visit_frequency_lambda, n_pages))).astype(int)
    bookmarked = rng.random(n_pages) < cfg.bookmark_fraction
    ages = cfg.recency_shape.sample(rng, int(counts.sum()))
    kept = np.minimum(counts, RECENT_VISIT_CAP)
    kinds = rng.choice(4, size=int(kept.sum()), p=cfg.visit_type_probs)
    # A bookmark visit needs a bookmark; elsewhere that draw becomes a followed link.
    kinds[(kinds == 2) & np.repeat(~bookmarked, kept)] = 0
    age_ends = np.cumsum(counts).tolist()
    newest = np.concatenate(
        [np.sort(ages[end - c : end])[:k] for end, c, k in zip(age_ends, counts.tolist(), kept.tolist())]
    ) if n_pages else np.zeros(0)
    starts = (np.cumsum(kept) - kept).tolist()
    ages_list, kinds_list = newest.tolist(), kinds.tolist()
    pages = []
    for idx in range(n_pages):
        lo, hi = starts[idx], starts[idx] + int(kept[idx])
        visits = tuple(Visit(a, _TYPE_ORDER[k]) for a, k in zip(ages_list[lo:hi], kinds_list[lo:hi]))
        pages.append(Page(idx, page_url(idx, client_id), visits, int(counts[idx]), bool(bookmarked[idx])))
    hist = ClientHistory(client_id, tuple(pages), seed)
    # Same values page_features would give, built in one pass.
    features = np.zeros((n_pages, NUM_BUCKETS * NUM_TYPES))
    owner = np.repeat(np.arange(n_pages), kept)
    scored = kinds < NUM_TYPES
    column = np.searchsorted(BUCKET_BOUNDARIES, newest, side="left") * NUM_TYPES + kinds
    np.add.at(features, (owner[scored], column[scored]), 1.0)
    features *= (counts / kept)[:, None]
    hist.__dict__["features"] = features
    return hist


def noisy_argmax(scores, noise_variance: float, rng: np.random.Generator) -> int:
    scores = np.asarray(scores, dtype=float)
    noise = rng.normal(0.0, math.sqrt(noise_variance), size=scores.shape)
    return int(np.argmax(scores + noise))


def simulate_click(
    candidates: Sequence[Page],
    ground_truth: ModelParams,
    noise_variance: float,
    rng: np.random.Generator,
) -> int:
    """Index of the candidate with the largest noisy ground-truth frecency."""
    if not candidates:
        raise ValueError("no candidates to click")
    return noisy_argmax([frecency(p, ground_truth) for p in candidates], noise_variance, rng)


def _choose_target(
    client: ClientHistory, cfg: ClientConfig, truth_scores: np.ndarray, rng: np.random.Generator
) -> int:
    n = len(client.pages)
    if cfg.target_choice == "uniform":
        return int(rng.integers(n))
    weights = truth_scores if cfg.target_choice == "truth_frecency" else client.visit_counts
    total = weights.sum()
    if not total > 0:
        return int(rng.integers(n))
    return int(rng.choice(n, p=weights / total))


def simulate_search_round(
    client: ClientHistory,
    model: ModelParams,
    truth: ModelParams,
    cfg: ClientConfig,
    rng: np.random.Generator,
    decay_rate: Optional[float] = None,
) -> list[SearchEvent]:
    """Simulate one round of URL-bar searches for ``client``.

    For every search the user has a target page (see
    ``ClientConfig.target_choice``) and types its address one
    character at a time. Matches (case-insensitive substring) are ranked by
    ``model`` and cut to ``display_limit``; typing stops as soon as the target
    is displayed. The click then goes to the displayed page with the highest
    noisy ground-truth frecency. ``decay_rate`` decays each displayed score by
    the days since the page was last visited.
    """
    n_searches = cfg.searches_per_round.sample(rng)
    if n_searches == 0 or not client.pages:
        return []
    model_scores = client.scores(model)
    if decay_rate is not None:
        model_scores = apply_decay(model_scores, decay_rate, client.days_since_refresh)
    truth_scores = client.scores(truth)
    order = rank_pages(model_scores, client.page_ids)
    urls = client.search_urls
    events = []
    for _ in range(n_searches):
        target = _choose_target(client, cfg, truth_scores, rng)
        text = typed_text(client.pages[target].url).lower()
        displayed = None
        for n_chars in range(1, len(text) + 1):
            prefix = text[:n_chars]
            shown = [i for i in order if prefix in urls[i]][: cfg.display_limit]
            if target in shown:
                displayed = shown
                break
        assert displayed is not None, "target must match its own address"
        selected = noisy_argmax(truth_scores[displayed], cfg.click_noise_variance, rng)
        events.append(
            SearchEvent(
                candidates=tuple(client.pages[i] for i in displayed),
                selected_index=selected,
                chars_typed=n_chars,
                query=prefix,
            )
        )
    return events


def client_round_update(
    client: ClientHistory,
    model: ModelParams,
    events: Sequence[SearchEvent],
    iteration: int,
    loss_cfg: LossConfig = LossConfig(),
    grad_cfg: GradConfig = GradConfig(),
    sign_only: bool = False,
) -> Optional[ClientUpdate]:
    """Mean finite-difference gradient and metrics over one round's events."""
    if not events:
        return None
    theta = model.to_array()
    grads = []
    losses = []
    for event in events:
        loss_fn = EventLoss(event, loss_cfg, client.candidate_features(event.candidates))
        grads.append(approx_gradient_array(loss_fn, theta, grad_cfg))
        losses.append(loss_fn(theta))
    gradient = np.mean(grads, axis=0)
    if sign_only:
        gradient = np.sign(gradient)
    return ClientUpdate(
        client_id=client.client_id,
        iteration=iteration,
        gradient=tuple(gradient),
        n_examples=len(events),
        mean_loss=float(np.mean(losses)),
        chars_typed=tuple(e.chars_typed for e in events),
        selected_ranks=tuple(e.selected_index for e in events),
    )


class SyntheticClientPool:
    """A population of synthetic clients, generated lazily and cached."""

    def __init__(
        self,
        num_clients: int,
        cfg: ClientConfig = ClientConfig(),
        truth: ModelParams = ModelParams(),
        seed: int = 0,
        loss_cfg: LossConfig = LossConfig(),
        grad_cfg: GradConfig = GradConfig(),
    ):
        if num_clients < 1:
            raise ConfigError("need at least one client")
        self.num_clients = num_clients
        self.cfg = cfg
        self.truth = truth
        self.seed = seed
        self.loss_cfg = loss_cfg
        self.grad_cfg = grad_cfg
        self._histories: dict[int, ClientHistory] = {}

    @classmethod
    def from_run_config(cls, run_cfg) -> "SyntheticClientPool":
        return cls(
            run_cfg.num_clients_total,
            run_cfg.clients,
            run_cfg.truth_params,
            run_cfg.seed,
            run_cfg.loss,
            run_cfg.grad,
        )

    @property
    def client_ids(self) -> range:
        return range(self.num_clients)

    def history(self, client_id: int) -> ClientHistory:
        hist = self._histories.get(client_id)
        if hist is None:
            hist = gen_history(client_id, self.cfg, self.seed)
            # Warm the derived arrays so concurrent readers only ever see them built.
            hist.features, hist.page_ids, hist.visit_counts, hist.search_urls, hist._row_of
            self._histories[client_id] = hist
        return hist

    def round_events(
        self,
        client_id: int,
        model: ModelParams,
        iteration: int,
        stream: int = STREAM_TRAIN,
        decay_rate: Optional[float] = None,
    ) -> list[SearchEvent]:
        hist = self.history(client_id)
        return simulate_search_round(
            hist, model, self.truth, self.cfg, hist.round_rng(iteration, stream), decay_rate
        )

    def compute_update(
        self, client_id: int, params: ModelParams, iteration: int, sign_only: bool = False
    ) -> Optional[ClientUpdate]:
        events = self.round_events(client_id, params, iteration)
        return client_round_update(
            self.history(client_id), params, events, iteration, self.loss_cfg, self.grad_cfg, sign_only
        )


def simulate_evaluation(
    pool: SyntheticClientPool,
    model: ModelParams,
    min_events: int,
    decay_rate: Optional[float] = None,
    max_rounds: int = 1000,
) -> list[SearchEvent]:
    """Fresh evaluation events for every client, round after round, until ``min_events`` exist.

    Uses the evaluation stream, so no event coincides with a training event.
    Every arm evaluated on the same pool sees the same random draws.
    """
    events: list[SearchEvent] = []
    for round_index in range(max_rounds):
        for cid in pool.client_ids:
            events.extend(pool.round_events(cid, model, round_index, STREAM_EVAL, decay_rate))
        if len(events) >= min_events:
            break
    return events
