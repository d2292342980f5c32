"""Command-line entry point: ``frecency-fl {gen-data,train,evaluate,stability}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, persistence
from .clients import SyntheticClientPool, simulate_evaluation
from .config import ConfigError, RunConfig, load_config
from .frecency import DEFAULT_PARAMS
from .protocol import ServerState, run_training, snapshot_id

log = logging.getLogger("frecency_fl")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

ARMS = ("treatment", "control", "control-no-decay", "initial")


class RuntimeFailure(RuntimeError):
    pass


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def history_record(hist) -> dict:
    return {
        "client_id": hist.client_id,
        "pages": [
            {
                "id": p.id,
                "url": p.url,
                "total_visit_count": p.total_visit_count,
                "bookmarked": p.bookmarked,
                "visits": [[v.age_days, v.visit_type.value] for v in p.visits],
            }
            for p in hist.pages
        ],
    }


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pool = SyntheticClientPool.from_run_config(cfg)
    n_pages = n_visits = 0
    path = out / "histories.jsonl"
    with open(path, "w") as fh:
        for cid in pool.client_ids:
            hist = pool.history(cid)
            n_pages += len(hist.pages)
            n_visits += sum(p.total_visit_count for p in hist.pages)
            fh.write(json.dumps(history_record(hist), sort_keys=True) + "\n")
            # Histories are not reused; keep memory flat.
            pool._histories.clear()
    print(f"wrote {path}: {cfg.num_clients_total} clients, {n_pages} pages, {n_visits} visits")
    return EXIT_OK


def _truncate_log(path: Path, before_iteration: int) -> None:
    if not path.exists():
        return
    kept = [u for u in persistence.iter_updates(path) if u.iteration < before_iteration]
    path.write_text("".join(persistence.dumps_update(u) + "\n" for u in kept))


def write_loss_csv(path: Path, updates_path: Path, num_iterations: int) -> None:
    """Rebuild the loss curve from the update log so resumed runs stay consistent."""
    groups = analysis.group_by_iteration(persistence.read_updates(updates_path)) if updates_path.exists() else {}
    rows = []
    means = []
    for t in range(num_iterations):
        losses = [u.mean_loss for u in groups.get(t, [])]
        mean = float(np.mean(losses)) if losses else float("nan")
        median = float(np.median(losses)) if losses else float("nan")
        means.append(mean)
        rows.append([t, mean, median, len(losses)])
    rolling = analysis.rolling_average(means, 5)
    persistence.write_rows(path, persistence.LOSS_CSV_HEADER, [r + [roll] for r, roll in zip(rows, rolling)])


def cmd_train(args) -> int:
    cfg = _load(args)
    state = None
    if args.resume:
        state = persistence.read_snapshot(args.resume)
    out = Path(args.out)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    updates_path = out / "updates.jsonl"
    if state is None:
        state = ServerState.initial(cfg)
        updates_path.write_text("")
    else:
        _truncate_log(updates_path, state.iteration)
    persistence.write_snapshot(snap_dir / f"{snapshot_id(state.iteration)}.json", state)

    def persist(new_state, entry, updates):
        persistence.append_updates(updates_path, updates)
        persistence.write_snapshot(snap_dir / f"{entry.snapshot_id}.json", new_state)

    pool = SyntheticClientPool.from_run_config(cfg)
    try:
        record = run_training(cfg, pool, state, threads=args.threads, on_iteration=persist, keep_updates=False)
    except OSError as exc:
        raise RuntimeFailure(f"I/O failure during training: {exc}") from exc
    final_iteration = record.iterations[-1].iteration + 1 if record.iterations else state.iteration
    write_loss_csv(out / "loss.csv", updates_path, final_iteration)
    weights = ", ".join(f"{k}={v:.4g}" for k, v in zip(DEFAULT_PARAMS.to_dict(), record.final_params))
    print(f"trained {len(record.iterations)} iterations in {record.wall_clock_seconds:.1f}s; final weights: {weights}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    arms = [a.strip() for a in args.arms.split(",") if a.strip()]
    unknown = [a for a in arms if a not in ARMS]
    if unknown or not arms:
        raise ConfigError(f"unknown arms {unknown}; choose from {ARMS}")
    if not Path(args.snapshot).exists():
        raise RuntimeFailure(f"snapshot not found: {args.snapshot}")
    trained = persistence.read_snapshot_params(args.snapshot)
    models = {
        "treatment": (trained, None),
        "control": (DEFAULT_PARAMS, cfg.evaluation.decay_rate),
        "control-no-decay": (DEFAULT_PARAMS, None),
        "initial": (cfg.initial_params, None),
    }
    pool = SyntheticClientPool.from_run_config(cfg)
    metrics = []
    for arm in arms:
        params, decay = models[arm]
        events = simulate_evaluation(pool, params, cfg.evaluation.min_events_per_arm, decay)
        metrics.append(analysis.ArmMetrics.from_events(arm, events))
    report = analysis.compare_arms(
        metrics[0], metrics[1:], cfg.evaluation.alpha, cfg.evaluation.num_comparisons
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    persistence.write_rows(out / "evaluation.csv", analysis.EVAL_CSV_HEADER, report.rows())
    for row in report.rows():
        print(",".join(str(v) for v in row))
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = _load(args)
    updates = persistence.read_updates(args.updates)
    report = analysis.stability_study(
        updates, cfg.stability.sample_size, cfg.stability.trials, cfg.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(r.iteration, r.mean_l1, r.std_l1) for r in report.qualifying()]
    persistence.write_rows(out / "stability.csv", analysis.STABILITY_CSV_HEADER, rows)
    print(f"{len(rows)} iterations with at least {cfg.stability.sample_size} updates")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frecency-fl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run config (JSON)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")

    p = sub.add_parser("gen-data", help="write the synthetic client histories")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run federated training")
    common(p)
    p.add_argument("--resume", help="snapshot to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compare arms on fresh evaluation events")
    common(p)
    p.add_argument("--snapshot", required=True, help="trained model snapshot")
    p.add_argument("--arms", default="treatment,control,control-no-decay",
                   help=f"comma-separated arms, first is the treatment; from {', '.join(ARMS)}")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stability", help="subsampled-update stability study")
    common(p, config_required=False)
    p.add_argument("--updates", required=True, help="update log (JSON lines)")
    p.set_defaults(func=cmd_stability)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, persistence.SnapshotError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
