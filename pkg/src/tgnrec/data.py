"""Interaction logs: CSV parsing, dense re-indexing, chronological splits, batches."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DataError


class InteractionEvent(NamedTuple):
    user: int
    item: int
    timestamp: float
    edge_features: np.ndarray


@dataclass(frozen=True)
class Schema:
    user_col: str = "user_id"
    item_col: str = "item_id"
    time_col: str = "timestamp"
    # None: every column other than the three above, in header order
    feature_cols: tuple[str, ...] | None = None


@dataclass(frozen=True, eq=False)
class EventLog:
    """Time-ordered events stored column-wise.

    ``user_ids[k]`` / ``item_ids[k]`` give the raw id for dense index ``k``;
    split and batch views share these maps with their parent.
    """

    users: np.ndarray
    items: np.ndarray
    timestamps: np.ndarray
    features: np.ndarray
    num_users: int
    num_items: int
    user_ids: tuple = ()
    item_ids: tuple = ()

    def __post_init__(self):
        n = len(self.users)
        if not (len(self.items) == len(self.timestamps) == self.features.shape[0] == n):
            raise DataError("event columns have different lengths")
        if n:
            if self.users.min() < 0 or self.users.max() >= self.num_users:
                raise DataError("user index out of range")
            if self.items.min() < 0 or self.items.max() >= self.num_items:
                raise DataError("item index out of range")
            if self.timestamps.min() < 0:
                raise DataError("negative timestamp")
            if np.any(np.diff(self.timestamps) < 0):
                raise DataError("events are not sorted by timestamp")

    def __len__(self) -> int:
        return len(self.users)

    @property
    def d_e(self) -> int:
        return self.features.shape[1]

    def __getitem__(self, k: int) -> InteractionEvent:
        return InteractionEvent(int(self.users[k]), int(self.items[k]),
                                float(self.timestamps[k]), self.features[k])

    def __iter__(self) -> Iterator[InteractionEvent]:
        for k in range(len(self)):
            yield self[k]

    def slice(self, start: int, stop: int) -> "EventLog":
        return EventLog(self.users[start:stop], self.items[start:stop],
                        self.timestamps[start:stop], self.features[start:stop],
                        self.num_users, self.num_items, self.user_ids, self.item_ids)

    def select(self, mask: np.ndarray) -> "EventLog":
        """Subsequence of events (order kept), same id maps."""
        return EventLog(self.users[mask], self.items[mask], self.timestamps[mask],
                        self.features[mask], self.num_users, self.num_items,
                        self.user_ids, self.item_ids)

    @classmethod
    def concat(cls, logs: Sequence["EventLog"]) -> "EventLog":
        first = logs[0]
        return cls(np.concatenate([g.users for g in logs]),
                   np.concatenate([g.items for g in logs]),
                   np.concatenate([g.timestamps for g in logs]),
                   np.concatenate([g.features for g in logs], axis=0),
                   first.num_users, first.num_items, first.user_ids, first.item_ids)

    @classmethod
    def from_arrays(cls, users, items, timestamps, features=None, num_users=None,
                    num_items=None) -> "EventLog":
        """Build from dense indices; events are stably sorted by timestamp."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        timestamps = np.asarray(timestamps, dtype=np.float64)
        if features is None:
            features = np.zeros((len(users), 0))
        features = np.asarray(features, dtype=np.float64).reshape(len(users), -1)
        order = np.argsort(timestamps, kind="stable")
        nu = int(num_users if num_users is not None else (users.max() + 1 if len(users) else 0))
        ni = int(num_items if num_items is not None else (items.max() + 1 if len(items) else 0))
        return cls(users[order], items[order], timestamps[order], features[order], nu, ni,
                   tuple(str(k) for k in range(nu)), tuple(str(k) for k in range(ni)))


@dataclass(frozen=True, eq=False)
class Batch:
    events: EventLog
    batch_index: int

    def __len__(self) -> int:
        return len(self.events)


def _data_lines(fh) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, text), skipping leading ``#`` comment lines."""
    header_seen = False
    for lineno, line in enumerate(fh, start=1):
        if not header_seen and line.startswith("#"):
            continue
        if not line.strip():
            continue
        header_seen = True
        yield lineno, line


def parse_events(path: str | Path, schema: Schema = Schema()) -> EventLog:
    """Read a comma-separated interaction file with a header row.

    Raw ids are mapped to dense indices in order of first appearance in the
    file; events are then stably sorted by timestamp.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = list(_data_lines(fh))
    if not lines:
        raise DataError(f"{path}: no events")
    header = next(csv.reader([lines[0][1]]))
    header = [h.strip() for h in header]
    col = {name: i for i, name in enumerate(header)}
    for name in (schema.user_col, schema.item_col, schema.time_col):
        if name not in col:
            raise DataError(f"{path}: missing column {name!r} in header")
    if schema.feature_cols is None:
        skip = {schema.user_col, schema.item_col, schema.time_col}
        feat_cols = [h for h in header if h not in skip]
    else:
        feat_cols = list(schema.feature_cols)
        for name in feat_cols:
            if name not in col:
                raise DataError(f"{path}: missing feature column {name!r}")
    ui, ii, ti = col[schema.user_col], col[schema.item_col], col[schema.time_col]
    fi = [col[c] for c in feat_cols]

    user_map: dict[str, int] = {}
    item_map: dict[str, int] = {}
    users, items, times, feats = [], [], [], []
    for lineno, text in lines[1:]:
        row = next(csv.reader([text]))
        if len(row) != len(header):
            kind = "inconsistent feature arity" if len(row) > 3 else "malformed row"
            raise DataError(f"{path}:{lineno}: {kind}: expected {len(header)} fields, got {len(row)}")
        try:
            t = float(row[ti])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric timestamp {row[ti]!r}") from None
        if not math.isfinite(t) or t < 0:
            raise DataError(f"{path}:{lineno}: invalid timestamp {row[ti]!r}")
        try:
            f = [float(row[i]) for i in fi]
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric edge feature") from None
        u, v = row[ui].strip(), row[ii].strip()
        if not u or not v:
            raise DataError(f"{path}:{lineno}: malformed row: empty id")
        users.append(user_map.setdefault(u, len(user_map)))
        items.append(item_map.setdefault(v, len(item_map)))
        times.append(t)
        feats.append(f)
    if not users:
        raise DataError(f"{path}: no events")

    order = np.argsort(np.asarray(times), kind="stable")
    return EventLog(np.asarray(users, dtype=np.int64)[order],
                    np.asarray(items, dtype=np.int64)[order],
                    np.asarray(times, dtype=np.float64)[order],
                    np.asarray(feats, dtype=np.float64).reshape(len(users), len(fi))[order],
                    len(user_map), len(item_map),
                    tuple(user_map), tuple(item_map))


def split_sizes(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_val = math.floor(ratios[1] * n + 1e-9)
    return n_train, n_val, n - n_train - n_val


def chronological_split(log: EventLog, ratios=(0.8, 0.1, 0.1)) -> tuple[EventLog, EventLog, EventLog]:
    n_train, n_val, n_test = split_sizes(len(log), tuple(ratios))
    if min(n_train, n_val, n_test) == 0:
        raise DataError(f"chronological split of {len(log)} events leaves an empty part "
                        f"(sizes {n_train}, {n_val}, {n_test})")
    return (log.slice(0, n_train), log.slice(n_train, n_train + n_val),
            log.slice(n_train + n_val, len(log)))


def make_batches(log: EventLog, batch_size: int) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    return [Batch(log.slice(s, s + batch_size), k)
            for k, s in enumerate(range(0, len(log), batch_size))]
