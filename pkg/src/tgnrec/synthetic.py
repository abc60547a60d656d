"""Planted-preference interaction streams for end-to-end checks."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import EventLog


@dataclass(frozen=True)
class SyntheticConfig:
    groups: int = 2
    users: int = 200
    items: int = 200
    events: int = 20000
    noise: float = 0.2
    seed: int = 0
    # mean seconds between consecutive events
    spacing: float = 60.0


def user_group(user: int, cfg: SyntheticConfig) -> int:
    return user % cfg.groups


def item_group(item: int, cfg: SyntheticConfig) -> int:
    return item % cfg.groups


def aligned_group(user: int, event_index: int, cfg: SyntheticConfig) -> int:
    """Group a user prefers at a given event; shifts by one at the midpoint."""
    shift = 1 if event_index >= cfg.events // 2 else 0
    return (user_group(user, cfg) + shift) % cfg.groups


def generate_synthetic(cfg: SyntheticConfig = SyntheticConfig()) -> EventLog:
    """Each event picks a uniform user; with probability 1 - noise the item is
    uniform within the user's currently aligned item group, otherwise uniform
    among items outside it. Timestamps are sorted uniform draws."""
    if min(cfg.groups, cfg.users, cfg.items, cfg.events) < 1 or not 0 <= cfg.noise <= 1:
        raise ValueError(f"invalid synthetic config {cfg}")
    rng = np.random.default_rng(cfg.seed)
    by_group = [np.flatnonzero(np.arange(cfg.items) % cfg.groups == g) for g in range(cfg.groups)]
    outside = [np.flatnonzero(np.arange(cfg.items) % cfg.groups != g) for g in range(cfg.groups)]
    users = rng.integers(0, cfg.users, size=cfg.events)
    noisy = rng.random(cfg.events) < cfg.noise
    items = np.empty(cfg.events, dtype=np.int64)
    for k in range(cfg.events):
        g = aligned_group(int(users[k]), k, cfg)
        pool = outside[g] if noisy[k] and len(outside[g]) else by_group[g]
        items[k] = pool[rng.integers(0, len(pool))]
    times = np.sort(rng.uniform(0.0, cfg.events * cfg.spacing, size=cfg.events))
    return EventLog.from_arrays(users, items, times, num_users=cfg.users, num_items=cfg.items)


def alignment_rate(log: EventLog, cfg: SyntheticConfig) -> float:
    hits = [item_group(int(v), cfg) == aligned_group(int(u), k, cfg)
            for k, (u, v) in enumerate(zip(log.users, log.items))]
    return float(np.mean(hits))


def write_csv(log: EventLog, path: str | Path, cfg: SyntheticConfig | None = None) -> None:
    """CSV with a ``#`` metadata line, a header, and ``u<k>``/``i<k>`` raw ids."""
    lines = []
    if cfg is not None:
        meta = " ".join(f"{k}={v}" for k, v in asdict(cfg).items())
        lines.append(f"# synthetic {meta}")
    lines.append("user_id,item_id,timestamp")
    for u, v, t in zip(log.users, log.items, log.timestamps):
        lines.append(f"u{u},i{v},{float(t)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
