"""Named trainable parameters and the checkpoint file format.

Checkpoint layout (all integers little-endian)::

    8 bytes   magic  b"TGNREC01"
    8 bytes   uint64 length H of the JSON header
    H bytes   UTF-8 JSON: {"meta": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
    rest      float64 little-endian payload; ``offset`` counts float64 elements

Values are stored as raw IEEE doubles, so a save/load round trip is exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

MAGIC = b"TGNREC01"


class ModelParams(dict):
    """Mapping from dotted parameter path (``memory.gru.W_z``) to a trainable
    :class:`Tensor`. Insertion order is the canonical order."""

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self[name] = t
        return t

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in self.items():
            if k not in arrays:
                raise KeyError(f"missing parameter {k!r}")
            if arrays[k].shape != v.shape:
                raise ValueError(f"shape mismatch for {k}: {arrays[k].shape} vs {v.shape}")
            v.data[...] = arrays[k]

    def copy(self) -> "ModelParams":
        out = ModelParams()
        for k, v in self.items():
            out.add(k, v.data)
        return out

    def num_values(self) -> int:
        return sum(v.data.size for v in self.values())


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.reshape(-1))
        offset += arr.size
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True).encode("utf-8")
    payload = np.concatenate(chunks).astype("<f8") if chunks else np.zeros(0, "<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(payload.tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    payload = np.frombuffer(raw[16 + hlen:], dtype="<f8")
    arrays = {}
    for entry in header["tensors"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        arrays[entry["name"]] = payload[start:start + size].reshape(entry["shape"]).astype(np.float64)
    return arrays, header["meta"]
