"""Chronological training: pending-memory application, embedding, time-aware
negative sampling, BPR loss, and Adam steps."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import EventLog, make_batches
from .embedding import MemoryView, embed_batch
from .errors import DataError
from .graph import TemporalAdjacency
from .memory import MemoryStore, apply_pending, install_pending
from .model import ModelSpec
from .optim import AdamState, adam_step
from .params import ModelParams

log = logging.getLogger(__name__)


class PositiveSetIndex:
    """Items each user has interacted with so far."""

    def __init__(self, num_users: int):
        self.num_users = num_users
        self.reset()

    def reset(self) -> None:
        self.sets: list[set[int]] = [set() for _ in range(self.num_users)]

    def add_log(self, events: EventLog) -> None:
        for u, v in zip(events.users, events.items):
            self.sets[int(u)].add(int(v))

    def __getitem__(self, user: int) -> set[int]:
        return self.sets[user]


@dataclass
class StreamState:
    """Everything that evolves while the event stream is consumed."""

    memory: MemoryStore
    adjacency: TemporalAdjacency
    positives: PositiveSetIndex
    clock: float = -np.inf

    @classmethod
    def fresh(cls, spec: ModelSpec) -> "StreamState":
        return cls(MemoryStore(spec.num_nodes, spec.d_mem),
                   TemporalAdjacency(spec.num_users, spec.num_items, spec.d_e),
                   PositiveSetIndex(spec.num_users))

    def reset(self) -> None:
        self.memory.reset()
        self.adjacency = TemporalAdjacency(self.adjacency.num_users, self.adjacency.num_items,
                                           self.adjacency.d_e)
        self.positives.reset()
        self.clock = -np.inf


@dataclass
class BatchStats:
    loss: float
    pairs: int
    skipped: int
    grad_norm: float


def sample_negatives(user: int, t: float, batch_items: np.ndarray, excluded: set[int],
                     n_neg: int, rng: np.random.Generator) -> np.ndarray | None:
    """Draw ``n_neg`` items from the batch item set minus ``excluded``.

    Without replacement when possible, with replacement (and a warning)
    otherwise; ``None`` when nothing is eligible.
    """
    pool = batch_items[~np.isin(batch_items, np.fromiter(excluded, dtype=np.int64, count=len(excluded)))]
    if len(pool) == 0:
        return None
    if len(pool) < n_neg:
        log.warning("user %d at t=%s: only %d eligible negatives for %d draws; "
                    "sampling with replacement", user, t, len(pool), n_neg)
        return rng.choice(pool, size=n_neg, replace=True)
    return rng.choice(pool, size=n_neg, replace=False)


def bpr_loss(z_u: Tensor, z_p: Tensor, z_negs: Tensor) -> Tensor:
    """sum over negatives of -log sigmoid(z_u . z_p - z_u . z_n) for one
    (user, positive) pair; ``z_negs`` is (n_neg, d)."""
    n = z_negs.shape[0]
    return pairwise_bpr(ad.stack_rows([z_u] * n), ad.stack_rows([z_p] * n), z_negs)


def pairwise_bpr(zu: Tensor, zp: Tensor, zn: Tensor) -> Tensor:
    """Batched form: rows of ``zu``, ``zp``, ``zn`` are aligned (user, positive,
    negative) triples."""
    diff = ad.sum_(ad.mul(zu, ad.sub(zp, zn)), axis=1)
    return ad.scale(ad.sum_(ad.log_sigmoid(diff)), -1.0)


def _batch_examples(events: EventLog, state: StreamState, n_neg: int, rng):
    """(rows, negatives, skipped): rows index events with a usable sample."""
    batch_items = np.unique(events.items)
    rows, negs, skipped = [], [], 0
    for k in range(len(events)):
        u, t = int(events.users[k]), float(events.timestamps[k])
        same_batch = events.items[(events.users == u) & (events.timestamps <= t)]
        excluded = state.positives[u] | {int(i) for i in same_batch}
        drawn = sample_negatives(u, t, batch_items, excluded, n_neg, rng)
        if drawn is None:
            skipped += 1
            continue
        rows.append(k)
        negs.append(drawn)
    return np.array(rows, dtype=np.int64), np.array(negs, dtype=np.int64).reshape(-1, n_neg), skipped


def score_embeddings(nodes: np.ndarray, times: np.ndarray, view: MemoryView, state: StreamState,
                     params, spec: ModelSpec, rng=None) -> tuple[Tensor, np.ndarray]:
    """Embed each distinct (node, time) pair once; returns the table and
    the row of each input pair in it."""
    pairs = np.stack([nodes.astype(np.float64), times], axis=1)
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    table = embed_batch(uniq[:, 0].astype(np.int64), uniq[:, 1], view,
                        state.adjacency, params, spec, rng)
    return table, inverse.reshape(-1)


def batch_loss(events: EventLog, state: StreamState, view: MemoryView, params, spec: ModelSpec,
               n_neg: int, rng: np.random.Generator, nbr_rng=None) -> tuple[Tensor | None, int, int]:
    rows, negs, skipped = _batch_examples(events, state, n_neg, rng)
    if len(rows) == 0:
        return None, 0, skipped
    offset = spec.num_users
    users = events.users[rows]
    pos = events.items[rows] + offset
    times = events.timestamps[rows]
    m = len(rows)
    nodes = np.concatenate([users, pos, negs.reshape(-1) + offset])
    when = np.concatenate([times, times, np.repeat(times, n_neg)])
    table, where = score_embeddings(nodes, when, view, state, params, spec, nbr_rng)
    u_rows = np.repeat(where[:m], n_neg)
    p_rows = np.repeat(where[m:2 * m], n_neg)
    n_rows = where[2 * m:]
    loss = pairwise_bpr(ad.gather(table, u_rows), ad.gather(table, p_rows), ad.gather(table, n_rows))
    return loss, m * n_neg, skipped


def advance(events: EventLog, state: StreamState, spec: ModelSpec) -> None:
    """Make a processed batch visible: pending messages, edges, positives."""
    install_pending(state.memory, events, spec)
    state.adjacency.insert_log(events)
    state.positives.add_log(events)
    if len(events):
        state.clock = float(events.timestamps[-1])


def _check_order(events: EventLog, state: StreamState) -> None:
    if len(events) and events.timestamps[0] < state.clock:
        raise DataError(f"batch starts at t={events.timestamps[0]} before the stream clock "
                        f"t={state.clock}")


def train_batch(events: EventLog, state: StreamState, params: ModelParams, opt: AdamState,
                spec: ModelSpec, n_neg: int, rng: np.random.Generator, nbr_rng=None,
                trace: Callable[[str], None] | None = None) -> BatchStats:
    _check_order(events, state)
    trace = trace or (lambda step: None)
    with Tape() as tape:
        nodes, rows = apply_pending(state.memory, params, spec)
        trace("apply_pending")
        view = MemoryView(state.memory.memory, nodes, rows)
        loss, pairs, skipped = batch_loss(events, state, view, params, spec, n_neg, rng, nbr_rng)
        trace("loss")
    grad_norm = 0.0
    if loss is not None:
        grads = ad.backward(tape, loss, params)
        grad_norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        adam_step(params, grads, opt)
        trace("step")
    advance(events, state, spec)
    trace("advance")
    return BatchStats(float(loss.data) if loss is not None else 0.0, pairs, skipped, grad_norm)


def replay(log_: EventLog, state: StreamState, params, spec: ModelSpec, batch_size: int) -> None:
    """Consume events batch by batch without gradients or scoring."""
    for batch in make_batches(log_, batch_size):
        _check_order(batch.events, state)
        apply_pending(state.memory, params, spec)
        advance(batch.events, state, spec)


def warm_state(logs: list[EventLog], params, spec: ModelSpec, batch_size: int) -> StreamState:
    state = StreamState.fresh(spec)
    for lg in logs:
        replay(lg, state, params, spec, batch_size)
    return state


@dataclass
class TrainSettings:
    epochs: int = 10
    batch_size: int = 1000
    lr: float = 1e-4
    n_neg: int = 1
    early_stopping: bool = False
    patience: int = 3
    seed: int = 0
    n_neg_eval: int = 100
    eval_negatives: str = "global"
    record_timing: bool = False


@dataclass
class TrainResult:
    params: ModelParams
    stats: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_recall10: float = float("nan")


def train(spec: ModelSpec, settings: TrainSettings, train_log: EventLog, val_log: EventLog | None,
          params: ModelParams, on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Run ``settings.epochs`` epochs; memory, adjacency and positive sets are
    reset at each epoch start. Returns the parameters of the epoch with the
    best validation Recall@10 (the initial ones if no epoch ran)."""
    from .evaluation import evaluate_split  # evaluation imports this module

    opt = AdamState(lr=settings.lr)
    rng = np.random.default_rng([settings.seed, 1])
    nbr_rng = np.random.default_rng([settings.seed, 2])
    state = StreamState.fresh(spec)
    best = params.arrays()
    result = TrainResult(params=params)
    bad_epochs = 0
    for epoch in range(1, settings.epochs + 1):
        started = time.perf_counter()
        state.reset()
        total, pairs, skipped = 0.0, 0, 0
        for batch in make_batches(train_log, settings.batch_size):
            s = train_batch(batch.events, state, params, opt, spec, settings.n_neg, rng, nbr_rng)
            total += s.loss
            pairs += s.pairs
            skipped += s.skipped
        row = {"epoch": epoch, "train_loss": total / pairs if pairs else 0.0}
        recall10 = float("nan")
        if val_log is not None and len(val_log):
            report = evaluate_split(params, spec, [train_log], val_log, settings, split_tag=1)
            for k in (5, 10, 20):
                row[f"val_recall@{k}"] = report.recall[k]
            recall10 = report.recall[10]
        row["skipped_examples"] = skipped
        row["wall_ms"] = round((time.perf_counter() - started) * 1000) if settings.record_timing else None
        result.stats.append(row)
        if on_epoch:
            on_epoch(row)
        log.info("epoch %d loss %.6f val recall@10 %.4f", epoch, row["train_loss"], recall10)
        if result.best_epoch == 0 or recall10 > result.best_recall10 or np.isnan(result.best_recall10):
            result.best_epoch, result.best_recall10 = epoch, recall10
            best = params.arrays()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if settings.early_stopping and bad_epochs >= settings.patience:
                log.info("early stop after epoch %d", epoch)
                break
    params.load_arrays(best)
    return result
