"""Command-line entry point: ``qpdn {train,eval,cv,ablate,grid,inspect,export}``.

Exit codes: 0 success, 2 usage or data error, 3 numeric divergence.
Structured outputs are JSON lines; human-readable reports are ``key: value`` lines.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .checkpoint import Checkpoint, CheckpointError
from .data import DataError, cv_splits, load_dataset
from .grad import DivergenceError
from .model import Variant
from .neighbors import nearest_words
from .train import (
    PAPER_POOL,
    ConfigError,
    TrainConfig,
    cross_validate,
    evaluate,
    format_ablation,
    grid_search,
    run_ablation,
    train_model,
)

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 2, 3
log = logging.getLogger("qpdn")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config plumbing

_OVERRIDES = ("n", "k", "lr", "l2", "l2_mode", "batch_size", "epochs", "patience", "seed", "variant", "folds",
              "dev_fraction", "norm_every", "measure_norm_every", "min_count", "pretrained", "sign_mode")


def read_config_file(path: str | Path) -> dict[str, str]:
    """``key = value`` lines (``#`` comments allowed), no section header needed."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string("[qpdn]\n" + p.read_text(encoding="utf-8"), source=str(p))
    return dict(parser["qpdn"])


def build_config(args) -> TrainConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _OVERRIDES:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    for name in ("data", "test_data"):
        if getattr(args, name, None):
            values[name] = getattr(args, name)
    if os.environ.get("QPDN_SEED"):
        values["seed"] = os.environ["QPDN_SEED"]
    return TrainConfig.from_mapping(values)


def _existing(path: str | None, what: str) -> str:
    if not path:
        raise UsageError(f"--{what} is required")
    if not Path(path).is_file():
        raise UsageError(f"{what} file not found: {path}")
    return path


def _load_training_data(cfg: TrainConfig):
    ds = load_dataset(_existing(cfg.data, "data"), min_count=cfg.min_count)
    test = None
    if cfg.test_data:
        test = load_dataset(_existing(cfg.test_data, "test-data"), vocab=ds.vocab, label_names=ds.label_names)
    if cfg.pretrained:
        _existing(cfg.pretrained, "pretrained")
    return ds, test


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scalar(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def write_reports(out: Path, stem: str, summary: dict, records: list[dict]) -> None:
    lines = [f"{k}: {_scalar(v)}" for k, v in summary.items() if not isinstance(v, (dict, list))]
    (out / f"{stem}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with open(out / f"{stem}.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    raise TypeError(type(o).__name__)


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    cfg = build_config(args)
    ds, test = _load_training_data(cfg)
    params, rep = train_model(cfg, ds, test=test)
    out = _out_dir(args)
    ckpt = Checkpoint(params, Variant(cfg.variant), ds.vocab, ds.label_names, cfg.seed, asdict(cfg))
    ckpt_io.save(ckpt, out / "checkpoint.qpdn")
    summary = {k: v for k, v in rep.to_dict().items() if k not in ("config", "epochs")}
    summary["checkpoint"] = str(out / "checkpoint.qpdn")
    records = [{"record": "epoch", **e} for e in rep.epochs]
    records.append({"record": "summary", **summary, "config": rep.config})
    write_reports(out, "report", {"variant": cfg.variant, **summary}, records)
    print(f"variant {cfg.variant}: train accuracy {rep.train_accuracy:.4f}, best dev {rep.best_dev_accuracy:.4f}"
          + (f", test {rep.test_accuracy:.4f}" if rep.test_accuracy is not None else ""))
    return EXIT_OK


def cmd_eval(args) -> int:
    ck = ckpt_io.load(_existing(args.checkpoint, "checkpoint"))
    ds = load_dataset(_existing(args.data, "data"), vocab=ck.vocab, label_names=ck.label_names)
    res = evaluate(ck.params, ck.variant, ds)
    print(f"accuracy: {res.accuracy:.4f}")
    print("confusion (rows=true, cols=predicted):")
    print("\t" + "\t".join(ck.label_names))
    for name, row in zip(ck.label_names, res.confusion):
        print(name + "\t" + "\t".join(str(int(x)) for x in row))
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = build_config(args)
    ds, _ = _load_training_data(cfg)
    folds = cv_splits(len(ds), cfg.folds, cfg.seed)
    res = cross_validate(cfg, ds, folds=folds, workers=args.threads)
    out = _out_dir(args)
    summary = {"variant": cfg.variant, "folds": cfg.folds, "mean_accuracy": res.mean, "std_accuracy": res.std}
    records = [{"record": "fold", "fold": i, "test_accuracy": a, "best_epoch": r.best_epoch}
               for i, (a, r) in enumerate(zip(res.fold_accuracies, res.reports))]
    records.append({"record": "summary", **summary, "fold_accuracies": res.fold_accuracies, "config": asdict(cfg)})
    write_reports(out, "cv", summary, records)
    print(f"{cfg.folds}-fold accuracy {res.mean:.4f} +/- {res.std:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = build_config(args)
    ds, test = _load_training_data(cfg)
    if test is None:
        folds = cv_splits(len(ds), cfg.folds, cfg.seed)
        train, test = ds.subset(np.flatnonzero(folds != 0)), ds.subset(np.flatnonzero(folds == 0))
    else:
        train = ds
    variants = [Variant(v.strip()) for v in args.variants.split(",")] if args.variants else list(Variant)
    rows = run_ablation(cfg, train, test, variants)
    out = _out_dir(args)
    table = format_ablation(rows)
    (out / "ablation.txt").write_text(table + "\n", encoding="utf-8")
    with open(out / "ablation.jsonl", "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")
    print(table)
    return EXIT_OK


def parse_axes(specs: list[str] | None) -> dict[str, list]:
    if not specs:
        return dict(PAPER_POOL)
    known = {f.name for f in fields(TrainConfig)}
    pool = {}
    for spec in specs:
        key, sep, vals = spec.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in known:
            raise UsageError(f"bad --axis {spec!r}; expected name=v1,v2,...")
        pool[key] = [TrainConfig.from_mapping({key: v.strip()}).__dict__[key] for v in vals.split(",") if v.strip()]
        if not pool[key]:
            raise UsageError(f"--axis {key} has no values")
    return pool


def cmd_grid(args) -> int:
    cfg = build_config(args)
    ds, _ = _load_training_data(cfg)
    pool = parse_axes(args.axis)
    best, board = grid_search(pool, ds, cfg)
    out = _out_dir(args)
    records = [{"record": "entry", "rank": i + 1, "dev_accuracy": e.dev_accuracy, "param_count": e.param_count,
                **{k: getattr(e.config, k) for k in pool}} for i, e in enumerate(board)]
    summary = {"entries": len(board), "best_dev_accuracy": board[0].dev_accuracy,
               **{f"best_{k}": getattr(best, k) for k in pool}}
    write_reports(out, "grid", summary, records)
    for r in records:
        print(f"{r['rank']:>3}  dev {r['dev_accuracy']:.4f}  " + "  ".join(f"{k}={r[k]}" for k in pool))
    return EXIT_OK


def cmd_inspect(args) -> int:
    ck = ckpt_io.load(_existing(args.checkpoint, "checkpoint"))
    if ck.variant is Variant.REAL_DOUBLE_DIM:
        raise UsageError("the real-valued baseline has no complex word states to inspect")
    report = nearest_words(ck.params, ck.vocab.itos, args.top, args.metric)
    fh = open(args.out, "w", encoding="utf-8") if args.out else None
    try:
        for item in report:
            words = ", ".join(f"{nb.word} ({nb.distance:.4f})" for nb in item.neighbors)
            print(f"measurement {item.measurement}: {words}")
            if fh:
                fh.write(json.dumps({"measurement": item.measurement,
                                     "neighbors": [asdict(nb) for nb in item.neighbors]}) + "\n")
    finally:
        if fh:
            fh.close()
    return EXIT_OK


def cmd_export(args) -> int:
    ck = ckpt_io.load(_existing(args.checkpoint, "checkpoint"))
    out = Path(args.out)
    arrays = {ckpt_io.DISK_NAMES[k]: v for k, v in ck.params.arrays().items()}
    meta = ck.metadata()
    if out.suffix == ".npz":
        np.savez(out, metadata=np.array(json.dumps(meta)), **arrays)
    elif out.suffix == ".json":
        out.write_text(json.dumps({"metadata": meta, "arrays": {k: v.tolist() for k, v in arrays.items()}}),
                       encoding="utf-8")
    else:
        raise UsageError("export target must end in .npz or .json")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="training file, one 'label<TAB>text' per line")
    p.add_argument("--test-data", dest="test_data")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--pretrained", help="text vector file used to initialise amplitudes")
    p.add_argument("--sign-mode", dest="sign_mode", choices=["abs", "phase"])
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int, help="embedding dimension")
    p.add_argument("--k", type=int, help="number of measurement states")
    p.add_argument("--lr", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--l2-mode", dest="l2_mode", choices=["coupled", "decoupled"])
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--dev-fraction", dest="dev_fraction", type=float)
    p.add_argument("--norm-every", dest="norm_every", type=int)
    p.add_argument("--measure-norm-every", dest="measure_norm_every", type=int)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--threads", type=int, default=1, help="parallel folds for cv (default 1, deterministic)")
    p.add_argument("--out", default="qpdn-run", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qpdn", description="Train, evaluate and inspect complex-valued density-matrix text classifiers.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, help_ in [
        ("train", cmd_train, "train one model and write a checkpoint"),
        ("cv", cmd_cv, "k-fold cross-validation"),
        ("ablate", cmd_ablate, "train every ablation variant and tabulate accuracy"),
        ("grid", cmd_grid, "grid search over a hyperparameter pool"),
    ]:
        p = sub.add_parser(name, help=help_)
        _add_training_flags(p)
        p.set_defaults(func=fn)
    sub.choices["ablate"].add_argument("--variants", help="comma-separated subset (default: all)")
    sub.choices["grid"].add_argument("--axis", action="append", help="name=v1,v2,... (repeatable)")

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a labelled file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="nearest words for every measurement state")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--metric", choices=["modulus", "euclidean"], default="modulus")
    p.add_argument("--out", help="also write JSON lines here")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("export", help="dump a checkpoint as .npz or .json")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "top", 1) < 1:
            raise UsageError("--top must be >= 1")
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (UsageError, ConfigError, DataError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
