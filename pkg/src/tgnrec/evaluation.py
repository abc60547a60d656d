"""Streaming Recall@k under the 1-positive + 100-sampled-negatives protocol.

Candidate lists depend only on the event stream and a seed, never on the
model, so the TGN and the popularity baseline are ranked on identical cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import EventLog
from .embedding import MemoryView, embed_batch
from .errors import DataError
from .memory import apply_pending
from .model import ModelSpec
from .training import TrainSettings, advance, warm_state

K_LIST = (5, 10, 20)


@dataclass
class RankedCase:
    user: int
    time: float
    positive: int
    candidates: np.ndarray  # positive first, then sampled negatives
    flagged: bool = False   # fewer eligible negatives than requested
    rank: int = 0
    scores: np.ndarray | None = None  # kept only on request


@dataclass
class MetricsReport:
    recall: dict[int, float]
    cases: int
    flagged: int = 0
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {f"recall@{k}": v for k, v in sorted(self.recall.items())}
        out.update(cases=self.cases, flagged_cases=self.flagged, config=self.config)
        return out


def recall_at_k(ranks: Sequence[int], k: int) -> float:
    if len(ranks) == 0:
        raise ValueError("recall of an empty rank list")
    ranks = np.asarray(ranks)
    return float(np.count_nonzero(ranks <= k)) / len(ranks)


def rank_of_positive(candidates: np.ndarray, scores: np.ndarray) -> int:
    """1-based rank of ``candidates[0]``; ties go to the smaller item index."""
    pos_item, pos_score = candidates[0], scores[0]
    rest_items, rest = candidates[1:], scores[1:]
    ahead = (rest > pos_score) | ((rest == pos_score) & (rest_items < pos_item))
    return 1 + int(np.count_nonzero(ahead))


def build_cases(history: Sequence[EventLog], split: EventLog, n_neg: int,
                rng: np.random.Generator, mode: str = "global",
                batch_size: int = 1000) -> list[RankedCase]:
    """Sample candidates for every event of ``split``.

    Negatives exclude every item the user interacted with strictly before the
    event time (history included) as well as the positive itself.
    """
    if mode not in ("global", "batch"):
        raise ValueError(f"unknown negative mode {mode!r}")
    num_items = split.num_items
    universe = np.arange(num_items)
    seen: list[set[int]] = [set() for _ in range(split.num_users)]
    buffer: list[tuple[int, int]] = []
    buffer_time = -np.inf

    def observe(u, v, t):
        nonlocal buffer_time
        if t > buffer_time:
            flush()
            buffer_time = t
        buffer.append((u, v))

    def flush():
        for u, v in buffer:
            seen[u].add(v)
        buffer.clear()

    for lg in history:
        for u, v, t in zip(lg.users, lg.items, lg.timestamps):
            observe(int(u), int(v), float(t))

    cases = []
    for k in range(len(split)):
        u, v, t = int(split.users[k]), int(split.items[k]), float(split.timestamps[k])
        if t > buffer_time:
            flush()
            buffer_time = t
        if mode == "global":
            pool = universe
        else:
            start = (k // batch_size) * batch_size
            pool = np.unique(split.items[start:start + batch_size])
        excluded = np.fromiter(seen[u] | {v}, dtype=np.int64)
        eligible = pool[~np.isin(pool, excluded)]
        flagged = len(eligible) < n_neg
        negs = eligible if flagged else rng.choice(eligible, size=n_neg, replace=False)
        cases.append(RankedCase(u, t, v, np.concatenate([[v], negs]).astype(np.int64), flagged))
        buffer.append((u, v))
    return cases


def summarize(cases: Sequence[RankedCase], k_list=K_LIST, config: dict | None = None) -> MetricsReport:
    ranks = [c.rank for c in cases]
    return MetricsReport({k: recall_at_k(ranks, k) for k in k_list}, len(cases),
                         sum(c.flagged for c in cases), dict(config or {}))


def rank_cases(cases: Sequence[RankedCase], score: Callable[[int, RankedCase], np.ndarray]) -> None:
    """Fill ``rank`` using ``score(case_index, case) -> scores over candidates``."""
    for k, case in enumerate(cases):
        case.rank = rank_of_positive(case.candidates, np.asarray(score(k, case), dtype=np.float64))


def eval_cases(settings: TrainSettings, history: Sequence[EventLog], split: EventLog,
               split_tag: int) -> list[RankedCase]:
    rng = np.random.default_rng([settings.seed, 10, split_tag])
    return build_cases(history, split, settings.n_neg_eval, rng, settings.eval_negatives,
                       settings.batch_size)


def evaluate_split(params, spec: ModelSpec, history: Sequence[EventLog], split: EventLog,
                   settings: TrainSettings, split_tag: int = 2, k_list=K_LIST,
                   cases: list[RankedCase] | None = None, keep_scores: bool = False) -> MetricsReport:
    """Replay ``history`` without gradients, then stream ``split`` one event at
    a time: score the 101 candidates at the event time, then apply the event."""
    if cases is None:
        cases = eval_cases(settings, history, split, split_tag)
    state = warm_state(list(history), params, spec, settings.batch_size)
    nbr_rng = np.random.default_rng([settings.seed, 3, split_tag])
    offset = spec.num_users
    for k, case in enumerate(cases):
        if case.time < state.clock:
            raise DataError(f"evaluation event at t={case.time} precedes t={state.clock}")
        apply_pending(state.memory, params, spec)
        view = MemoryView(state.memory.memory)
        nodes = np.concatenate([[case.user], case.candidates + offset])
        z = embed_batch(nodes, np.full(len(nodes), case.time), view, state.adjacency,
                        params, spec, nbr_rng).data
        scores = z[1:] @ z[0]
        case.rank = rank_of_positive(case.candidates, scores)
        if keep_scores:
            case.scores = scores
        advance(split.slice(k, k + 1), state, spec)
    return summarize(cases, k_list, {"variant": spec.variant, "memory_updater": spec.memory_updater})


def popularity_baseline(split: EventLog, train_log: EventLog, settings: TrainSettings,
                        history: Sequence[EventLog] | None = None, split_tag: int = 2,
                        cases: list[RankedCase] | None = None) -> MetricsReport:
    """Rank candidates by training-set interaction counts."""
    if cases is None:
        cases = eval_cases(settings, history if history is not None else [train_log], split, split_tag)
    counts = np.bincount(train_log.items, minlength=split.num_items).astype(np.float64)
    rank_cases(cases, lambda k, case: counts[case.candidates])
    return summarize(cases, config={"model": "popularity"})
