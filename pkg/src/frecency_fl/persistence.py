"""On-disk formats: model snapshots, the update log and metric CSVs."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .frecency import ModelParams
from .protocol import ClientUpdate, IterationRecord, ServerState
from .rprop import RpropState

SNAPSHOT_FORMAT = "frecency-fl-snapshot/1"
LOSS_CSV_HEADER = ("iteration", "mean_loss", "median_loss", "num_updates", "rolling5_loss")


class SnapshotError(ValueError):
    pass


def snapshot_to_dict(state: ServerState) -> dict:
    return {
        "format": SNAPSHOT_FORMAT,
        "iteration": state.iteration,
        "weights": state.params.to_dict(),
        "rprop": state.rprop.to_dict(),
        "rng_state": state.rng.bit_generator.state,
    }


def snapshot_from_dict(data: dict) -> ServerState:
    if data.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotError(f"unsupported snapshot format {data.get('format')!r}")
    rng_state = data["rng_state"]
    bit_gen = getattr(np.random, rng_state["bit_generator"])()
    bit_gen.state = rng_state
    return ServerState(
        iteration=int(data["iteration"]),
        params=ModelParams.from_dict(data["weights"]),
        rprop=RpropState.from_dict(data["rprop"]),
        rng=np.random.Generator(bit_gen),
    )


def dumps_snapshot(state: ServerState) -> str:
    # json writes floats with repr(), which round-trips exactly.
    return json.dumps(snapshot_to_dict(state), indent=2, sort_keys=True) + "\n"


def write_snapshot(path, state: ServerState) -> None:
    Path(path).write_text(dumps_snapshot(state))


def read_snapshot(path) -> ServerState:
    try:
        return snapshot_from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"{path}: malformed snapshot ({exc})") from exc


def read_snapshot_params(path) -> ModelParams:
    return read_snapshot(path).params


def dumps_update(update: ClientUpdate) -> str:
    return json.dumps(update.to_dict(), sort_keys=True)


def append_updates(path, updates: Iterable[ClientUpdate]) -> None:
    with open(path, "a") as fh:
        for update in updates:
            fh.write(dumps_update(update) + "\n")


def iter_updates(path) -> Iterator[ClientUpdate]:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                yield ClientUpdate.from_dict(json.loads(line))


def read_updates(path) -> list[ClientUpdate]:
    return list(iter_updates(path))


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def loss_csv(records: Sequence[IterationRecord], rolling: Sequence[float]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOSS_CSV_HEADER)
    for rec, roll in zip(records, rolling):
        writer.writerow([rec.iteration, _fmt(rec.mean_loss), _fmt(rec.median_loss), rec.num_updates, _fmt(roll)])
    return buf.getvalue()


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_loss_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
