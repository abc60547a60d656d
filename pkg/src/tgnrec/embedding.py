"""Time encoding and temporal node embeddings (attention, sum, GCN).

All three aggregators read node memories through a :class:`MemoryView` and
neighbors through :meth:`TemporalAdjacency.sample`, so the same code runs
under a tape (training) and without one (evaluation).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, constant
from .graph import TemporalAdjacency
from .model import VARIANTS, ModelSpec


def encode_time(delta_t, params) -> Tensor:
    """cos(delta_t * omega + phase), one row per entry of ``delta_t``."""
    dt = np.asarray(delta_t, dtype=np.float64).reshape(-1, 1)
    if np.any(dt < 0):
        raise ValueError("time encoder received a negative interval")
    omega, phase = params["time.omega"], params["time.phase"]
    proj = ad.matmul(constant(dt), ad.reshape(omega, (1, omega.shape[0])))
    return ad.cos(ad.add(proj, phase))


class MemoryView:
    """Read access to node memories.

    ``rows`` may carry freshly updated memories (a tape output) for
    ``nodes``; reads of those nodes then route gradients into the updater.
    """

    def __init__(self, memory: np.ndarray, nodes: np.ndarray | None = None,
                 rows: Tensor | None = None):
        n = memory.shape[0]
        if rows is None or len(nodes) == 0:
            self.table = constant(memory)
            self.pos = None
        else:
            self.table = ad.concat([constant(memory), rows], axis=0)
            self.pos = np.arange(n)
            self.pos[np.asarray(nodes)] = n + np.arange(len(nodes))

    def rows(self, index) -> Tensor:
        index = np.asarray(index, dtype=np.int64)
        return ad.gather(self.table, index if self.pos is None else self.pos[index])


def embed_batch(nodes, times, view: MemoryView, adj: TemporalAdjacency, params,
                spec: ModelSpec, rng: np.random.Generator | None = None) -> Tensor:
    """Embeddings z_i(t) for paired ``nodes`` and ``times``: (len, d_node)."""
    if spec.variant not in VARIANTS:
        raise ValueError(f"unknown embedding variant {spec.variant!r}")
    nodes = np.asarray(nodes, dtype=np.int64)
    times = np.asarray(times, dtype=np.float64)
    return _represent(nodes, times, spec.layers, view, adj, params, spec, rng)


def _represent(nodes, times, layer, view, adj, params, spec, rng) -> Tensor:
    if layer == 0:
        return view.rows(nodes)
    m, k = len(nodes), spec.neighbors
    nbr, nts, eids, mask = adj.sample(nodes, times, k, spec.sampling, rng)
    h_self = _represent(nodes, times, layer - 1, view, adj, params, spec, rng)
    h_nbr = _represent(nbr.reshape(-1), np.repeat(times, k), layer - 1,
                       view, adj, params, spec, rng)
    d = h_self.shape[1]
    gaps = np.where(mask, times[:, None] - nts, 0.0)
    parts = [h_nbr]
    if spec.d_e:
        parts.append(constant(adj.edge_features(eids).reshape(m * k, spec.d_e)))
    parts.append(encode_time(gaps.reshape(-1), params))
    nbr_in = ad.concat(parts, axis=1)                       # (m*k, d + d_e + d_time)
    prefix = f"embedding.{spec.variant}.l{layer}"
    if spec.variant == "attn":
        return _attention(h_self, nbr_in, mask, params, prefix, spec, layer)
    if spec.variant == "sum":
        return _temporal_sum(h_self, nbr_in, mask, params, prefix, spec)
    return _gcn(h_self, ad.reshape(h_nbr, (m, k, d)), mask, params, prefix)


def _attention(h_self, nbr_in, mask, params, prefix, spec, layer) -> Tensor:
    m, k = mask.shape
    heads, dh = spec.heads, spec.head_dim(layer)
    q_in = ad.concat([h_self, encode_time(np.zeros(m), params)], axis=1)
    q = ad.reshape(ad.matmul(q_in, params[f"{prefix}.W_q"]), (m, heads, dh))
    keys = ad.reshape(ad.matmul(nbr_in, params[f"{prefix}.W_k"]), (m, k, heads, dh))
    values = ad.reshape(ad.matmul(nbr_in, params[f"{prefix}.W_v"]), (m, k, heads, dh))
    logits = ad.scale(ad.einsum("mhd,mkhd->mhk", q, keys), 1.0 / np.sqrt(dh))
    weights = ad.softmax(logits, axis=-1, mask=mask[:, None, :])
    attended = ad.reshape(ad.einsum("mhk,mkhd->mhd", weights, values), (m, heads * dh))
    out = ad.matmul(attended, params[f"{prefix}.W_o"])
    hidden = ad.relu(ad.add(ad.matmul(ad.concat([out, h_self], axis=1), params[f"{prefix}.W_1"]),
                            params[f"{prefix}.b_1"]))
    return ad.add(ad.matmul(hidden, params[f"{prefix}.W_2"]), params[f"{prefix}.b_2"])


def _temporal_sum(h_self, nbr_in, mask, params, prefix, spec) -> Tensor:
    m, k = mask.shape
    proj = ad.reshape(ad.matmul(nbr_in, params[f"{prefix}.W1"]), (m, k, spec.d_node))
    keep = constant(np.broadcast_to(mask[:, :, None], (m, k, spec.d_node)).astype(np.float64))
    h = ad.relu(ad.sum_(ad.mul(proj, keep), axis=1))
    return ad.matmul(ad.concat([h_self, h], axis=1), params[f"{prefix}.W2"])


def _gcn(h_self, h_nbr, mask, params, prefix) -> Tensor:
    m, k, d = h_nbr.shape
    keep = constant(np.broadcast_to(mask[:, :, None], (m, k, d)).astype(np.float64))
    total = ad.add(h_self, ad.sum_(ad.mul(h_nbr, keep), axis=1))
    inv_deg = 1.0 / (mask.sum(axis=1) + 1.0)
    mean = ad.mul(total, constant(np.broadcast_to(inv_deg[:, None], (m, d))))
    return ad.relu(ad.add(ad.matmul(mean, params[f"{prefix}.W"]), params[f"{prefix}.b"]))


def _single(node, t, view, adj, params, spec, rng, variant) -> Tensor:
    if spec.variant != variant:
        raise ValueError(f"model is configured for {spec.variant!r}, not {variant!r}")
    return embed_batch([node], [t], view, adj, params, spec, rng)[0]


def embed_attention(node, t, view, adj, params, spec, rng=None) -> Tensor:
    return _single(node, t, view, adj, params, spec, rng, "attn")


def embed_sum(node, t, view, adj, params, spec, rng=None) -> Tensor:
    return _single(node, t, view, adj, params, spec, rng, "sum")


def embed_gcn(node, t, view, adj, params, spec, rng=None) -> Tensor:
    return _single(node, t, view, adj, params, spec, rng, "gcn")
