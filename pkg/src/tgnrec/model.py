"""Model shape description and parameter construction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ModelParams, glorot

UPDATERS = ("gru", "rnn")
VARIANTS = ("attn", "sum", "gcn")


@dataclass(frozen=True)
class ModelSpec:
    num_users: int
    num_items: int
    d_e: int = 0
    d_mem: int = 31
    d_node: int = 31
    d_time: int = 100
    memory_updater: str = "gru"
    variant: str = "attn"
    heads: int = 2
    layers: int = 1
    neighbors: int = 10
    sampling: str = "recent"
    delta_t_mode: str = "encoded"       # or "raw": bare seconds as one message column
    counterpart_read: str = "application"  # or "creation"

    def __post_init__(self):
        if self.memory_updater not in UPDATERS:
            raise ValueError(f"memory_updater must be one of {UPDATERS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown embedding variant {self.variant!r}")
        if self.delta_t_mode not in ("encoded", "raw"):
            raise ValueError(f"unknown delta_t_mode {self.delta_t_mode!r}")
        if self.counterpart_read not in ("application", "creation"):
            raise ValueError(f"unknown counterpart_read {self.counterpart_read!r}")
        for name in ("d_mem", "d_node", "d_time", "heads", "layers", "neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def d_msg(self) -> int:
        dt = self.d_time if self.delta_t_mode == "encoded" else 1
        return 2 * self.d_mem + dt + self.d_e

    def layer_input_dim(self, layer: int) -> int:
        return self.d_mem if layer == 1 else self.d_node

    def head_dim(self, layer: int) -> int:
        return math.ceil((self.layer_input_dim(layer) + self.d_time) / self.heads)


def build_params(spec: ModelSpec, rng: np.random.Generator, init: str = "glorot") -> ModelParams:
    """All trainable weights for the configured updater and embedding variant.

    ``init="zeros"`` sets every weight to zero (time frequencies included),
    which makes every embedding identical.
    """
    params = ModelParams()
    zero = init == "zeros"

    def mat(name, fan_in, fan_out):
        params.add(name, np.zeros((fan_in, fan_out)) if zero else glorot(rng, fan_in, fan_out))

    def vec(name, n):
        params.add(name, np.zeros(n))

    # cosine time features with log-spaced frequencies, so both seconds and
    # months map to distinguishable phases
    params.add("time.omega", np.zeros(spec.d_time) if zero
               else 1.0 / 10 ** np.linspace(0, 9, spec.d_time))
    vec("time.phase", spec.d_time)

    d_in, d_hid = spec.d_msg, spec.d_mem
    if spec.memory_updater == "gru":
        for gate in ("z", "r", "h"):
            mat(f"memory.gru.W_{gate}", d_in, d_hid)
            mat(f"memory.gru.U_{gate}", d_hid, d_hid)
            vec(f"memory.gru.b_{gate}", d_hid)
    else:
        mat("memory.rnn.W", d_in, d_hid)
        mat("memory.rnn.U", d_hid, d_hid)
        vec("memory.rnn.b", d_hid)

    for layer in range(1, spec.layers + 1):
        d_self = spec.layer_input_dim(layer)
        d_nbr = d_self + spec.d_e + spec.d_time
        p = f"embedding.{spec.variant}.l{layer}"
        if spec.variant == "attn":
            width = spec.heads * spec.head_dim(layer)
            mat(f"{p}.W_q", d_self + spec.d_time, width)
            mat(f"{p}.W_k", d_nbr, width)
            mat(f"{p}.W_v", d_nbr, width)
            mat(f"{p}.W_o", width, spec.d_node)
            mat(f"{p}.W_1", spec.d_node + d_self, spec.d_node)
            vec(f"{p}.b_1", spec.d_node)
            mat(f"{p}.W_2", spec.d_node, spec.d_node)
            vec(f"{p}.b_2", spec.d_node)
        elif spec.variant == "sum":
            mat(f"{p}.W1", d_nbr, spec.d_node)
            mat(f"{p}.W2", d_self + spec.d_node, spec.d_node)
        else:
            mat(f"{p}.W", d_self, spec.d_node)
            vec(f"{p}.b", spec.d_node)
    return params
