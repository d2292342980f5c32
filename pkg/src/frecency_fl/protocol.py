"""Server-coordinated federated training loop.

The server never touches client histories. It sees clients only through a
pool object exposing ``client_ids`` and
``compute_update(client_id, params, iteration, sign_only) -> ClientUpdate | None``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .config import AdaptiveConfig, RunConfig
from .frecency import ModelParams
from .rprop import NonFiniteGradientError, RpropState, project, rprop_step, sign_vote

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClientUpdate:
    client_id: int
    iteration: int
    gradient: tuple[float, ...]
    n_examples: int
    mean_loss: float
    chars_typed: tuple[int, ...] = ()
    selected_ranks: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gradient", tuple(float(g) for g in self.gradient))
        object.__setattr__(self, "chars_typed", tuple(int(c) for c in self.chars_typed))
        object.__setattr__(self, "selected_ranks", tuple(int(r) for r in self.selected_ranks))
        if self.n_examples < 1:
            raise ValueError("n_examples must be >= 1")
        if not np.all(np.isfinite(self.gradient)):
            raise ValueError(f"client {self.client_id}: non-finite gradient")

    def to_dict(self) -> dict:
        return {
            "client_id": self.client_id,
            "iteration": self.iteration,
            "gradient": list(self.gradient),
            "n_examples": self.n_examples,
            "metrics": {
                "mean_loss": self.mean_loss,
                "chars_typed": list(self.chars_typed),
                "selected_ranks": list(self.selected_ranks),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClientUpdate":
        metrics = data["metrics"]
        return cls(
            client_id=data["client_id"],
            iteration=data["iteration"],
            gradient=tuple(data["gradient"]),
            n_examples=data["n_examples"],
            mean_loss=metrics["mean_loss"],
            chars_typed=tuple(metrics["chars_typed"]),
            selected_ranks=tuple(metrics["selected_ranks"]),
        )


class ClientPool(Protocol):
    @property
    def client_ids(self) -> Sequence[int]: ...

    def compute_update(
        self, client_id: int, params: ModelParams, iteration: int, sign_only: bool = False
    ) -> Optional[ClientUpdate]: ...


class ProtocolError(RuntimeError):
    pass


def weighted_average(updates: Sequence[ClientUpdate]) -> np.ndarray:
    """Sum of ``n_i / N * H_i`` with ``N = sum(n_i)``, accumulated in client-id order."""
    if not updates:
        raise ProtocolError("cannot average an empty set of updates")
    if len({u.iteration for u in updates}) > 1:
        raise ProtocolError("updates from different iterations cannot be combined")
    ordered = sorted(updates, key=lambda u: u.client_id)
    total = sum(u.n_examples for u in ordered)
    acc = np.zeros(len(ordered[0].gradient))
    for u in ordered:
        acc += (u.n_examples / total) * np.asarray(u.gradient)
    return acc


def update_dispersion(updates: Sequence[ClientUpdate]) -> float:
    """Mean L1 distance of each gradient to the weighted-average gradient."""
    center = weighted_average(updates)
    return float(np.mean([np.abs(np.asarray(u.gradient) - center).sum() for u in updates]))


def close_iteration_adaptively(pending: Sequence[ClientUpdate], cfg: AdaptiveConfig) -> bool:
    if not cfg.enabled or len(pending) < max(cfg.min_updates, 1):
        return False
    return update_dispersion(pending) < cfg.variance_threshold


@dataclass
class ServerState:
    iteration: int
    params: ModelParams
    rprop: RpropState
    rng: np.random.Generator

    @classmethod
    def initial(cls, cfg: RunConfig) -> "ServerState":
        return cls(
            iteration=0,
            params=cfg.initial_params,
            rprop=RpropState.initial(cfg.rprop),
            rng=np.random.default_rng(cfg.seed),
        )


@dataclass
class IterationRecord:
    iteration: int
    snapshot_id: str
    num_updates: int
    mean_loss: float
    median_loss: float
    aggregated_update: Optional[list[float]]
    params_before: list[float]
    params: list[float]
    raw_delta: list[float]
    step_sizes: list[float]
    applied: bool


@dataclass
class RunRecord:
    seed: int
    initial_params: list[float]
    initial_snapshot_id: str = "snapshot_00000"
    iterations: list[IterationRecord] = field(default_factory=list)
    updates: list[ClientUpdate] = field(default_factory=list)
    final_params: Optional[list[float]] = None
    wall_clock_seconds: float = 0.0
    converged: bool = False

    @property
    def losses(self) -> list[float]:
        return [rec.mean_loss for rec in self.iterations]


def snapshot_id(index: int) -> str:
    return f"snapshot_{index:05d}"


def _collect(
    pool: ClientPool,
    selected: Sequence[int],
    params: ModelParams,
    iteration: int,
    cfg: RunConfig,
    executor: Optional[ThreadPoolExecutor],
) -> list[ClientUpdate]:
    sign_only = cfg.aggregation_mode == "sign_vote"

    def compute(cid):
        return pool.compute_update(cid, params, iteration, sign_only)

    if cfg.adaptive.enabled:
        # Updates arrive in sampling order; the round may close early.
        received = []
        for cid in selected:
            update = compute(cid)
            if update is None:
                continue
            received.append(update)
            if close_iteration_adaptively(received, cfg.adaptive):
                break
        return received
    results = executor.map(compute, selected) if executor is not None else map(compute, selected)
    return [u for u in results if u is not None]


def run_iteration(
    state: ServerState,
    pool: ClientPool,
    cfg: RunConfig,
    executor: Optional[ThreadPoolExecutor] = None,
) -> tuple[ServerState, IterationRecord, list[ClientUpdate]]:
    ids = list(pool.client_ids)
    picks = state.rng.choice(len(ids), size=min(cfg.clients_per_iteration, len(ids)), replace=False)
    selected = [ids[p] for p in picks]
    updates = _collect(pool, selected, state.params, state.iteration, cfg, executor)
    updates.sort(key=lambda u: u.client_id)

    before = state.params
    params, rprop = before, state.rprop
    aggregated = None
    applied = False
    raw_delta = np.zeros(len(before.to_array()))
    if not updates:
        log.warning("iteration %d: no updates received, optimizer step skipped", state.iteration)
    else:
        if cfg.aggregation_mode == "sign_vote":
            aggregated = sign_vote([u.gradient for u in updates])
        else:
            aggregated = weighted_average(updates)
        try:
            params, rprop = rprop_step(state.rprop, aggregated, before, cfg.constraints)
            raw_delta = -rprop.step_sizes * np.sign(aggregated)
            applied = True
        except NonFiniteGradientError:
            log.error("iteration %d: non-finite aggregate, optimizer step skipped", state.iteration)
            params, rprop = before, state.rprop

    losses = [u.mean_loss for u in updates]
    record = IterationRecord(
        iteration=state.iteration,
        snapshot_id=snapshot_id(state.iteration + 1),
        num_updates=len(updates),
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
        median_loss=float(np.median(losses)) if losses else float("nan"),
        aggregated_update=None if aggregated is None else aggregated.tolist(),
        params_before=before.to_array().tolist(),
        params=params.to_array().tolist(),
        raw_delta=raw_delta.tolist(),
        step_sizes=rprop.step_sizes.tolist(),
        applied=applied,
    )
    new_state = ServerState(state.iteration + 1, params, rprop, state.rng)
    return new_state, record, updates


def run_training(
    cfg: RunConfig,
    pool: ClientPool,
    state: Optional[ServerState] = None,
    threads: int = 1,
    on_iteration: Optional[Callable[[ServerState, IterationRecord, list[ClientUpdate]], None]] = None,
    keep_updates: bool = True,
) -> RunRecord:
    """Iterate rounds until ``cfg.max_iterations`` or convergence.

    ``state`` resumes from a loaded snapshot; ``on_iteration`` is called after
    every round (persistence hooks in here).
    """
    start = time.perf_counter()
    state = state if state is not None else ServerState.initial(cfg)
    record = RunRecord(
        seed=cfg.seed,
        initial_params=state.params.to_array().tolist(),
        initial_snapshot_id=snapshot_id(state.iteration),
    )
    quiet_rounds = 0
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        while state.iteration < cfg.max_iterations:
            state, entry, updates = run_iteration(state, pool, cfg, executor)
            record.iterations.append(entry)
            if keep_updates:
                record.updates.extend(updates)
            if on_iteration is not None:
                on_iteration(state, entry, updates)
            change = np.max(np.abs(np.subtract(entry.params, entry.params_before)))
            quiet_rounds = quiet_rounds + 1 if change < cfg.convergence.min_step_norm else 0
            if quiet_rounds >= cfg.convergence.patience:
                record.converged = True
                log.info("converged after iteration %d", entry.iteration)
                break
    finally:
        if executor is not None:
            executor.shutdown()
    record.final_params = state.params.to_array().tolist()
    record.wall_clock_seconds = time.perf_counter() - start
    return record
