"""Per-node memory: message construction, last-message aggregation, and
recurrent (GRU or plain RNN) updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, constant
from .data import EventLog
from .embedding import encode_time
from .model import ModelSpec


@dataclass
class RawMessage:
    counterpart: int
    event_time: float
    delta_t: float
    edge_features: np.ndarray
    # only filled when counterpart memories are read at creation time
    counterpart_memory: np.ndarray | None = None


class MemoryStore:
    def __init__(self, num_nodes: int, d_mem: int):
        self.num_nodes = num_nodes
        self.d_mem = d_mem
        self.reset()

    def reset(self) -> None:
        self.memory = np.zeros((self.num_nodes, self.d_mem))
        self.last_update = np.zeros(self.num_nodes)
        self.pending: dict[int, RawMessage] = {}
        self.applications = np.zeros(self.num_nodes, dtype=np.int64)


def reset_memory(store: MemoryStore) -> None:
    store.reset()


def build_messages(events: EventLog, store: MemoryStore, snapshot: bool = False) -> dict[int, list[RawMessage]]:
    """One message per endpoint per event, in event order. Item ``v`` is node
    ``num_users + v``."""
    out: dict[int, list[RawMessage]] = {}
    offset = events.num_users
    for k in range(len(events)):
        u, v = int(events.users[k]), offset + int(events.items[k])
        t = float(events.timestamps[k])
        for node, other in ((u, v), (v, u)):
            dt = t - store.last_update[node]
            if dt < 0:
                raise ValueError(f"negative time gap for node {node} at t={t}: events out of order")
            snap = store.memory[other].copy() if snapshot else None
            out.setdefault(node, []).append(RawMessage(other, t, dt, events.features[k], snap))
    return out


def aggregate_last(messages: dict[int, list[RawMessage]]) -> dict[int, RawMessage]:
    """Keep each node's latest message; on equal timestamps the later one wins."""
    out = {}
    for node, msgs in messages.items():
        best = msgs[0]
        for m in msgs[1:]:
            if m.event_time >= best.event_time:
                best = m
        out[node] = best
    return out


def gru_cell(params, x: Tensor, s: Tensor) -> Tensor:
    def gate(g):
        return ad.add(ad.add(ad.matmul(x, params[f"memory.gru.W_{g}"]),
                             ad.matmul(s, params[f"memory.gru.U_{g}"])),
                      params[f"memory.gru.b_{g}"])

    z = ad.sigmoid(gate("z"))
    r = ad.sigmoid(gate("r"))
    cand = ad.tanh(ad.add(ad.add(ad.matmul(x, params["memory.gru.W_h"]),
                                 ad.matmul(ad.mul(r, s), params["memory.gru.U_h"])),
                          params["memory.gru.b_h"]))
    # s' = (1 - z) * s + z * cand
    return ad.add(ad.sub(s, ad.mul(z, s)), ad.mul(z, cand))


def rnn_cell(params, x: Tensor, s: Tensor) -> Tensor:
    return ad.tanh(ad.add(ad.add(ad.matmul(x, params["memory.rnn.W"]),
                                 ad.matmul(s, params["memory.rnn.U"])),
                          params["memory.rnn.b"]))


def message_inputs(store: MemoryStore, nodes: np.ndarray, params, spec: ModelSpec) -> Tensor:
    """Rows s_i || s_j || time(dt) || e_ij for the pending message of each node."""
    msgs = [store.pending[int(n)] for n in nodes]
    others = np.array([m.counterpart for m in msgs], dtype=np.int64)
    own = store.memory[nodes]
    if spec.counterpart_read == "creation":
        other = np.stack([m.counterpart_memory for m in msgs])
    else:
        other = store.memory[others]
    dts = np.array([m.delta_t for m in msgs])
    if spec.delta_t_mode == "encoded":
        dt_part = encode_time(dts, params)
    else:
        dt_part = constant(dts.reshape(-1, 1))
    parts = [constant(own), constant(other), dt_part]
    if spec.d_e:
        parts.append(constant(np.stack([m.edge_features for m in msgs])))
    return ad.concat(parts, axis=1)


def apply_pending(store: MemoryStore, params, spec: ModelSpec, nodes=None) -> tuple[np.ndarray, Tensor | None]:
    """Run the updater on pending messages and commit the new rows.

    All reads happen before any write, so two nodes updated together see each
    other's previous memory. Returns the node ids (sorted) and the new rows as
    a tensor, which is on the active tape if there is one. Nodes without a
    pending message are skipped.
    """
    if nodes is None:
        nodes = sorted(store.pending)
    nodes = np.array([n for n in nodes if int(n) in store.pending], dtype=np.int64)
    if len(nodes) == 0:
        return nodes, None
    x = message_inputs(store, nodes, params, spec)
    s = constant(store.memory[nodes])
    cell = gru_cell if spec.memory_updater == "gru" else rnn_cell
    new = cell(params, x, s)
    store.memory[nodes] = new.data
    for n in nodes:
        msg = store.pending.pop(int(n))
        store.last_update[n] = msg.event_time
    store.applications[nodes] += 1
    return nodes, new


def install_pending(store: MemoryStore, events: EventLog, spec: ModelSpec) -> None:
    msgs = aggregate_last(build_messages(events, store, spec.counterpart_read == "creation"))
    for node, msg in msgs.items():
        if node in store.pending:
            raise RuntimeError(f"node {node} already has an unapplied message")
        store.pending[node] = msg
