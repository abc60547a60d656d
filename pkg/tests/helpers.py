"""Shared builders for small graphs and full-pipeline loss closures."""

import numpy as np

from tgnrec.autodiff import Tape
from tgnrec import autodiff as ad
from tgnrec.data import EventLog
from tgnrec.embedding import MemoryView
from tgnrec.memory import apply_pending
from tgnrec.model import ModelSpec, build_params
from tgnrec.training import StreamState, advance, batch_loss

TOY_SPEC = dict(d_mem=4, d_node=3, d_time=5, heads=2, neighbors=3)


def toy_log(d_e=2, seed=0):
    """Five events over 2 users and 4 items; with a 3/2 split user 1 sees two
    neighbors in the second batch and both second-batch events get a negative."""
    rng = np.random.default_rng(seed)
    return EventLog.from_arrays([1, 1, 0, 0, 1], [0, 3, 0, 2, 1], [1.0, 2.0, 3.0, 4.0, 5.0],
                                rng.normal(size=(5, d_e)), num_users=2, num_items=4)


def toy_spec(log, **kw):
    opts = dict(TOY_SPEC)
    opts.update(kw)
    return ModelSpec(log.num_users, log.num_items, log.d_e, **opts)


def small_params(spec, seed=0, scale=1.0):
    params = build_params(spec, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 100)
    for name, p in params.items():
        if name == "time.omega":
            p.data[:] = rng.uniform(0.1, 1.0, size=p.shape)
        else:
            # nonzero biases so every parameter is exercised
            p.data[:] = p.data * scale + (rng.normal(scale=0.3, size=p.shape) if p.ndim == 1 else 0.0)
    return params


def pipeline_loss(log, spec, params, split=3, n_neg=1, seed=0, memory_scale=0.5):
    """Loss of the second batch after the first batch was processed; returns
    a closure ``f() -> Tensor`` that rebuilds state each call so the loss
    can be differentiated by finite differences.  Memory starts from a fixed
    random state (as if earlier history had been consumed) so the recurrent
    weights acting on memory receive gradient."""
    first, second = log.slice(0, split), log.slice(split, len(log))

    def f():
        state = StreamState.fresh(spec)
        state.memory.memory[:] = np.random.default_rng(seed + 7).normal(
            scale=memory_scale, size=state.memory.memory.shape)
        apply_pending(state.memory, params, spec)
        advance(first, state, spec)
        nodes, rows = apply_pending(state.memory, params, spec)
        view = MemoryView(state.memory.memory, nodes, rows)
        loss, _, _ = batch_loss(second, state, view, params, spec, n_neg, np.random.default_rng(seed))
        return loss

    return f


def param_fd_errors(f, params, h=1e-5):
    """Per-parameter max relative error of analytic vs central differences."""
    with Tape() as tape:
        loss = f()
    grads = ad.backward(tape, loss, params)
    out = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        worst = 0.0
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + h
            up = float(f().data)
            flat[k] = keep - h
            down = float(f().data)
            flat[k] = keep
            num = (up - down) / (2 * h)
            a = grads[name].reshape(-1)[k]
            worst = max(worst, abs(a - num) / max(1.0, abs(a)))
        out[name] = (worst, float(np.abs(grads[name]).max()))
    return out
