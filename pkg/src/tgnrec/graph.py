"""Continuous-time adjacency with recency-bounded neighbor queries.

Nodes live in one index space: users are ``0..U-1`` and item ``v`` is node
``U + v``. Every edge is stored in both endpoints' lists.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from .data import EventLog


@dataclass
class NeighborSample:
    neighbors: np.ndarray       # (n_nbr,) node indices, 0 where padded
    timestamps: np.ndarray      # (n_nbr,)
    edge_ids: np.ndarray        # (n_nbr,) -1 where padded
    edge_features: np.ndarray   # (n_nbr, d_e)
    mask: np.ndarray            # (n_nbr,) True for real entries

    def real(self) -> list[tuple[int, float]]:
        return [(int(n), float(t)) for n, t, m in zip(self.neighbors, self.timestamps, self.mask) if m]


class TemporalAdjacency:
    def __init__(self, num_users: int, num_items: int, d_e: int = 0):
        self.num_users = num_users
        self.num_items = num_items
        self.d_e = d_e
        self.num_nodes = num_users + num_items
        self._nbrs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        self._times: list[list[float]] = [[] for _ in range(self.num_nodes)]
        self._edges: list[list[int]] = [[] for _ in range(self.num_nodes)]
        self._features = np.zeros((16, d_e))
        self.num_edges = 0
        self.latest = -np.inf

    @classmethod
    def build(cls, log: EventLog) -> "TemporalAdjacency":
        """Bulk construction; input order is irrelevant, ties keep input order."""
        adj = cls(log.num_users, log.num_items, log.d_e)
        for k in np.argsort(log.timestamps, kind="stable"):
            adj.insert_event(int(log.users[k]), int(log.items[k]),
                             float(log.timestamps[k]), log.features[k])
        return adj

    def item_node(self, item: int) -> int:
        return self.num_users + item

    def insert_event(self, user: int, item: int, timestamp: float, features=None) -> int:
        """Append edge (user, item, t); returns its edge id. Stream inserts
        must arrive in nondecreasing time order."""
        if not (0 <= user < self.num_users) or not (0 <= item < self.num_items):
            raise IndexError(f"node out of range: user={user}, item={item}")
        if timestamp < self.latest:
            raise ValueError(f"out-of-order insert: t={timestamp} after {self.latest}")
        self.latest = timestamp
        eid = self.num_edges
        if eid >= len(self._features):
            grown = np.zeros((2 * len(self._features), self.d_e))
            grown[:eid] = self._features[:eid]
            self._features = grown
        if self.d_e:
            self._features[eid] = features
        self.num_edges += 1
        v = self.num_users + item
        for a, b in ((user, v), (v, user)):
            self._nbrs[a].append(b)
            self._times[a].append(timestamp)
            self._edges[a].append(eid)
        return eid

    def insert_log(self, log: EventLog) -> None:
        for k in range(len(log)):
            self.insert_event(int(log.users[k]), int(log.items[k]),
                              float(log.timestamps[k]), log.features[k])

    def entries(self, node: int) -> list[tuple[int, float, int]]:
        return list(zip(self._nbrs[node], self._times[node], self._edges[node]))

    def edge_features(self, edge_ids: np.ndarray) -> np.ndarray:
        edge_ids = np.asarray(edge_ids)
        out = self._features[np.where(edge_ids >= 0, edge_ids, 0)]
        out[edge_ids < 0] = 0.0
        return out

    def sample(self, nodes, times, n_nbr: int, policy: str = "recent",
               rng: np.random.Generator | None = None):
        """Neighbors of many (node, t) queries at once.

        Returns ``(neighbors, timestamps, edge_ids, mask)``, each of shape
        ``(len(nodes), n_nbr)``. Real entries are left-aligned, oldest first;
        only edges with timestamp strictly below the query time qualify.
        """
        if n_nbr < 1:
            raise ValueError("n_nbr must be >= 1")
        if policy not in ("recent", "uniform"):
            raise ValueError(f"unknown sampling policy {policy!r}")
        if policy == "uniform" and rng is None:
            raise ValueError("uniform sampling needs an rng")
        m = len(nodes)
        nbr = np.zeros((m, n_nbr), dtype=np.int64)
        ts = np.zeros((m, n_nbr))
        eids = np.full((m, n_nbr), -1, dtype=np.int64)
        mask = np.zeros((m, n_nbr), dtype=bool)
        for row, (node, t) in enumerate(zip(nodes, times)):
            node = int(node)
            times_list = self._times[node]
            end = bisect_left(times_list, t)
            if end == 0:
                continue
            if policy == "recent":
                picks = range(max(0, end - n_nbr), end)
            else:
                picks = np.sort(rng.integers(0, end, size=n_nbr))
            for col, p in enumerate(picks):
                nbr[row, col] = self._nbrs[node][p]
                ts[row, col] = times_list[p]
                eids[row, col] = self._edges[node][p]
                mask[row, col] = True
        return nbr, ts, eids, mask

    def recent_neighbors(self, node: int, t: float, n_nbr: int) -> NeighborSample:
        nbr, ts, eids, mask = self.sample([node], [t], n_nbr)
        return NeighborSample(nbr[0], ts[0], eids[0], self.edge_features(eids[0]), mask[0])

    def k_hop_neighborhood(self, node: int, t: float, n_nbr: int, layers: int) -> list[list[NeighborSample]]:
        """Layer 1 is the node's own sample; layer l+1 holds one sample per
        real entry of layer l, all queried at the same time ``t``."""
        if layers < 1:
            raise ValueError("layers must be >= 1")
        out = [[self.recent_neighbors(node, t, n_nbr)]]
        for _ in range(layers - 1):
            nxt = []
            for s in out[-1]:
                for j, _tj in s.real():
                    nxt.append(self.recent_neighbors(j, t, n_nbr))
            out.append(nxt)
        return out
