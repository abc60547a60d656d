"""Run configuration: a flat, typed ``key = value`` text format.

Grammar (one entry per line)::

    line    := blank | comment | entry
    comment := "#" anything
    entry   := key "=" value
    key     := dotted name listed in RunConfig (e.g. embedding.variant)
    value   := true | false | integer | float | JSON string | bare text

Bare text is taken verbatim after trimming. Values are converted to the
key's declared type; unknown keys and ill-typed values are errors. The
same format is used for the config echo written next to every run, and
:func:`to_text` output always parses back to an equal config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import Schema
from .errors import ConfigError
from .model import UPDATERS, VARIANTS, ModelSpec
from .training import TrainSettings


def _key(name: str, default, **extra):
    return field(default=default, metadata={"key": name, **extra})


@dataclass(frozen=True)
class RunConfig:
    data_path: str = _key("data.path", "")
    user_col: str = _key("data.user_col", "user_id")
    item_col: str = _key("data.item_col", "item_id")
    time_col: str = _key("data.time_col", "timestamp")
    feature_cols: str = _key("data.feature_cols", "auto")
    split_train: float = _key("split.train", 0.8)
    split_val: float = _key("split.val", 0.1)
    split_test: float = _key("split.test", 0.1)
    batch_size: int = _key("train.batch_size", 1000)
    epochs: int = _key("train.epochs", 10)
    lr: float = _key("train.lr", 1e-4)
    n_neg_train: int = _key("train.n_neg", 1)
    early_stopping: bool = _key("train.early_stopping", False)
    patience: int = _key("train.patience", 3)
    d_mem: int = _key("model.d_mem", 31)
    d_node: int = _key("model.d_node", 31)
    d_time: int = _key("model.d_time", 100)
    memory_updater: str = _key("model.memory_updater", "gru", choices=UPDATERS)
    delta_t_mode: str = _key("model.delta_t_mode", "encoded", choices=("encoded", "raw"))
    counterpart_read: str = _key("model.counterpart_read", "application",
                                 choices=("application", "creation"))
    init: str = _key("model.init", "glorot", choices=("glorot", "zeros"))
    variant: str = _key("embedding.variant", "attn", choices=VARIANTS)
    heads: int = _key("embedding.heads", 2)
    layers: int = _key("embedding.layers", 1)
    neighbors: int = _key("embedding.neighbors", 10)
    sampling: str = _key("embedding.sampling", "recent", choices=("recent", "uniform"))
    n_neg_eval: int = _key("eval.n_neg", 100)
    eval_negatives: str = _key("eval.negatives", "global", choices=("global", "batch"))
    seed: int = _key("seed", 0)
    output_dir: str = _key("output.dir", "runs/default")
    record_timing: bool = _key("run.record_timing", False)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            choices = f.metadata.get("choices")
            if choices and value not in choices:
                raise ConfigError(f"{f.metadata['key']}: {value!r} is not one of {list(choices)}")
            if f.type == "int" and value < (0 if f.name in ("epochs", "seed") else 1):
                raise ConfigError(f"{f.metadata['key']}: must be positive, got {value}")
        ratios = (self.split_train, self.split_val, self.split_test)
        if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must be positive and sum to 1, got {ratios}")
        if self.lr <= 0:
            raise ConfigError("train.lr must be positive")

    # -- views used by the library ------------------------------------------

    def schema(self) -> Schema:
        feats = None if self.feature_cols == "auto" else tuple(
            c.strip() for c in self.feature_cols.split(",") if c.strip())
        return Schema(self.user_col, self.item_col, self.time_col, feats)

    def model_spec(self, num_users: int, num_items: int, d_e: int) -> ModelSpec:
        return ModelSpec(num_users, num_items, d_e, self.d_mem, self.d_node, self.d_time,
                         self.memory_updater, self.variant, self.heads, self.layers,
                         self.neighbors, self.sampling, self.delta_t_mode, self.counterpart_read)

    def train_settings(self) -> TrainSettings:
        return TrainSettings(self.epochs, self.batch_size, self.lr, self.n_neg_train,
                             self.early_stopping, self.patience, self.seed, self.n_neg_eval,
                             self.eval_negatives, self.record_timing)

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.split_train, self.split_val, self.split_test)

    # -- flat form -------------------------------------------------------------

    def to_flat(self) -> dict:
        return {f.metadata["key"]: getattr(self, f.name) for f in fields(self)}

    def non_defaults(self) -> dict:
        base = RunConfig().to_flat()
        return {k: v for k, v in self.to_flat().items() if base[k] != v}

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        by_key = {f.metadata["key"]: f for f in fields(self)}
        changes = {}
        for key, raw in overrides.items():
            if key not in by_key:
                raise ConfigError(f"unknown config key {key!r}")
            f = by_key[key]
            changes[f.name] = _convert(key, raw, f.type)
        return replace(self, **changes)

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        by_key = {f.metadata["key"]: f for f in fields(cls)}
        kwargs = {}
        for key, value in flat.items():
            if key not in by_key:
                raise ConfigError(f"unknown config key {key!r}")
            f = by_key[key]
            kwargs[f.name] = _convert(key, value, f.type) if isinstance(value, str) and f.type != "str" else value
        return cls(**kwargs)


def _convert(key: str, raw, type_name: str):
    if not isinstance(raw, str):
        raw = json.dumps(raw)
    text = raw.strip()
    try:
        if type_name == "bool":
            if text.lower() not in ("true", "false"):
                raise ValueError
            return text.lower() == "true"
        if type_name == "int":
            return int(text)
        if type_name == "float":
            return float(text)
        if text.startswith('"'):
            return json.loads(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type_name}") from None


def parse_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def to_text(cfg: RunConfig) -> str:
    lines = []
    for key, value in cfg.to_flat().items():
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, str):
            text = json.dumps(value)
        else:
            text = repr(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    entries = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        entries = parse_text(p.read_text(encoding="utf-8"))
    entries.update(overrides or {})
    return RunConfig().with_overrides(entries)
