"""Command-line entry points: train, evaluate, ablate, synthetic.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
Any ``--dotted.key value`` pair after the subcommand overrides the config.
"""

from __future__ import annotations

import os

# single-threaded BLAS keeps repeated runs bit-identical
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
from concurrent.futures import ProcessPoolExecutor  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from .config import RunConfig, load_config, to_text  # noqa: E402
from .data import EventLog, chronological_split, parse_events  # noqa: E402
from .errors import ConfigError, DataError, NumericError, TGNRecError  # noqa: E402
from .evaluation import eval_cases, evaluate_split, popularity_baseline  # noqa: E402
from .model import UPDATERS, VARIANTS, build_params  # noqa: E402
from .params import load_checkpoint, save_checkpoint  # noqa: E402
from .synthetic import SyntheticConfig, generate_synthetic, write_csv  # noqa: E402
from .training import train, warm_state  # noqa: E402

log = logging.getLogger("tgnrec")

# dims that must agree between a checkpoint and the config evaluating it
SHAPE_KEYS = ("model.d_mem", "model.d_node", "model.d_time", "model.memory_updater",
              "model.delta_t_mode", "embedding.variant", "embedding.heads", "embedding.layers")


def _split_overrides(tokens: list[str]) -> dict[str, str]:
    out, i = {}, 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for --{key}")
            value = tokens[i + 1]
            i += 2
        out[key] = value
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _load_splits(cfg: RunConfig) -> tuple[EventLog, EventLog, EventLog]:
    if not cfg.data_path:
        raise ConfigError("data.path is not set")
    events = parse_events(cfg.data_path, cfg.schema())
    return chronological_split(events, cfg.ratios)


def run_training(cfg: RunConfig, out: Path, figures: bool = True) -> dict:
    """Train, write checkpoint/stats/report/config echo under ``out``; returns the report."""
    from . import plotting

    out.mkdir(parents=True, exist_ok=True)
    tr, va, te = _load_splits(cfg)
    spec = cfg.model_spec(tr.num_users, tr.num_items, tr.d_e)
    settings = cfg.train_settings()
    params = build_params(spec, np.random.default_rng([cfg.seed, 0]), cfg.init)
    (out / "config.txt").write_text(to_text(cfg), encoding="utf-8")

    stats_path = out / "stats.jsonl"
    with open(stats_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"config": cfg.to_flat(), "non_default": cfg.non_defaults()}) + "\n")

        def emit(row):
            fh.write(json.dumps(row) + "\n")
            fh.flush()

        result = train(spec, settings, tr, va, params, on_epoch=emit)

    cases = eval_cases(settings, [tr, va], te, split_tag=2)
    test = evaluate_split(params, spec, [tr, va], te, settings, cases=cases)
    pop = popularity_baseline(te, tr, settings, cases=cases)
    report = {"split": "test", **test.to_json(), "popularity": pop.to_json(),
              "best_epoch": result.best_epoch}
    report["config"] = cfg.to_flat()
    _write_json(out / "report.json", report)

    warmed = warm_state([tr, va], params, spec, settings.batch_size)
    arrays = params.arrays()
    arrays["state.memory"] = warmed.memory.memory
    arrays["state.last_update"] = warmed.memory.last_update
    save_checkpoint(out / "checkpoint.bin", arrays, {"config": cfg.to_flat()})
    if figures:
        if result.stats:
            plotting.plot_training_curves(result.stats, out / "training_curves.png")
        plotting.plot_recall({"TGN": report, "Pop": report["popularity"]}, out / "report.png")
    return report


def cmd_train(args, overrides) -> int:
    cfg = load_config(args.config, overrides)
    out = Path(cfg.output_dir)
    report = run_training(cfg, out)
    print(json.dumps({k: report[k] for k in ("recall@5", "recall@10", "recall@20")}))
    return 0


def cmd_evaluate(args, overrides) -> int:
    from . import plotting

    cfg = load_config(args.config, overrides)
    arrays, meta = load_checkpoint(args.checkpoint)
    trained = meta.get("config", {})
    flat = cfg.to_flat()
    for key in SHAPE_KEYS:
        if key in trained and trained[key] != flat[key]:
            raise ConfigError(f"checkpoint was trained with {key}={trained[key]!r} "
                              f"but config says {key}={flat[key]!r}")
    tr, va, te = _load_splits(cfg)
    spec = cfg.model_spec(tr.num_users, tr.num_items, tr.d_e)
    params = build_params(spec, np.random.default_rng(0))
    try:
        params.load_arrays(arrays)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"checkpoint does not match config: {exc}") from None
    settings = cfg.train_settings()
    history, split, tag = ([tr], va, 1) if args.split == "val" else ([tr, va], te, 2)
    cases = eval_cases(settings, history, split, tag)
    rep = evaluate_split(params, spec, history, split, settings, split_tag=tag, cases=cases)
    pop = popularity_baseline(split, tr, settings, cases=cases)
    report = {"split": args.split, **rep.to_json(), "popularity": pop.to_json()}
    report["config"] = flat
    path = Path(args.report) if args.report else Path(cfg.output_dir) / f"report_{args.split}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_json(path, report)
    plotting.plot_recall({"TGN": report, "Pop": report["popularity"]}, path.with_suffix(".png"))
    print(json.dumps({k: report[k] for k in ("recall@5", "recall@10", "recall@20")}))
    return 0


def _ablation_cell(job: tuple[dict, str]) -> dict:
    flat, out = job
    cfg = RunConfig.from_flat(flat)
    report = run_training(cfg, Path(out), figures=False)
    return {k: report[k] for k in ("recall@5", "recall@10", "recall@20")}


def ablation_text(table: dict) -> str:
    variants = list(next(iter(table.values())))
    lines = [f"{'Module':<8}" + "".join(f"{v:>10}" for v in variants)]
    for upd, row in table.items():
        lines.append(f"{upd.upper():<8}" + "".join(f"{row[v]['recall@10']:>10.4f}" for v in variants))
    return "Recall@10\n" + "\n".join(lines) + "\n"


def cmd_ablate(args, overrides) -> int:
    from . import plotting

    cfg = load_config(args.config, overrides)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs, keys = [], []
    for upd in UPDATERS:
        for variant in VARIANTS:
            cell = cfg.with_overrides({"model.memory_updater": upd, "embedding.variant": variant})
            jobs.append((cell.to_flat(), str(out / "cells" / f"{upd}_{variant}")))
            keys.append((upd, variant))
    if args.parallel:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_ablation_cell, jobs))
    else:
        results = [_ablation_cell(job) for job in jobs]
    table: dict[str, dict[str, dict]] = {}
    for (upd, variant), res in zip(keys, results):
        table.setdefault(upd, {})[variant] = res
    _write_json(out / "ablation.json", {"recall": table, "config": cfg.to_flat()})
    text = ablation_text(table)
    (out / "ablation.txt").write_text(text, encoding="utf-8")
    plotting.plot_ablation(table, out / "ablation.png")
    print(text, end="")
    return 0


def cmd_synthetic(args, overrides) -> int:
    if overrides:
        raise ConfigError(f"unknown options for synthetic: {sorted(overrides)}")
    cfg = SyntheticConfig(args.groups, args.users, args.items, args.events, args.noise, args.seed)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        raise DataError(f"output directory does not exist: {out.parent}")
    try:
        write_csv(generate_synthetic(cfg), out, cfg)
    except OSError as exc:
        raise DataError(f"cannot write {out}: {exc}") from None
    print(str(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tgnrec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and report test recall")
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config")
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--report", help="path of the report JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="memory updater x embedding variant grid")
    p.add_argument("--config")
    p.add_argument("--parallel", action="store_true", help="run cells in separate processes")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synthetic", help="write a planted-preference CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=200)
    p.add_argument("--events", type=int, default=20000)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, _split_overrides(rest))
    except TGNRecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NumericError.exit_code


if __name__ == "__main__":
    sys.exit(main())
