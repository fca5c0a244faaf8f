"""``lfds`` command line: gen-data, embed, train, eval, gradcheck, report.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O or input
format error, 3 gradient check failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path


from . import gradcheck as gc
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, load_config, parse_config_text
from .data.cache import atomic_write_bytes
from .data import (
    embed_dataset,
    generate_pc_graphs,
    generate_separable,
    load_dataset,
    make_folds,
    parse_benchmark_dataset,
    save_dataset,
)
from .errors import FormatError, IngestionError, LfdsError
from .heads import ALL_KINDS
from .model import MAXPOOL
from .report import (
    AccuracyTable,
    accuracy_figure,
    expand_metrics_glob,
    loss_figure,
    read_metrics,
    write_metrics,
)
from .train import cross_validate, evaluate

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CHECK = 0, 1, 2, 3
DATA_KINDS = ("separable", "pc-graphs", "benchmark")
GRADCHECK_TOL = 1e-4


class UsageError(LfdsError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def data_dir() -> Path:
    return Path(os.environ.get("LFDS_DATA_DIR", "data"))


def resolve_dataset(spec: str):
    """Load a dataset cache given a path or a name inside ``$LFDS_DATA_DIR``."""
    path = Path(spec)
    if path.is_file():
        return load_dataset(path)
    expected = data_dir() / (spec if spec.endswith(".lfds") else f"{spec}.lfds")
    if expected.is_file():
        return load_dataset(expected)
    raise IngestionError(f"dataset cache not found: expected {expected}")


def _summary(ds) -> str:
    counts = " ".join(str(c) for c in ds.class_counts())
    return f"{ds.name}: {len(ds)} samples, {ds.num_classes} classes (per class: {counts}), feature_dim {ds.feature_dim}"


def cmd_gen_data(args) -> int:
    if args.kind == "separable":
        ds = generate_separable(args.per_class, seed=args.seed)
    elif args.kind == "pc-graphs":
        ds = generate_pc_graphs(args.per_class, points_per_cloud=args.points, k=args.k, seed=args.seed)
    else:
        if not args.source or not args.name:
            raise UsageError("--kind benchmark needs --source DIR and --name NAME")
        ds = parse_benchmark_dataset(args.source, args.name)
    if args.embed:
        ds = embed_dataset(ds, seed=args.seed)
        ds.name = f"{ds.name}-emb"
    out = Path(args.output) if args.output else data_dir() / f"{ds.name}.lfds"
    save_dataset(ds, out)
    print(f"wrote {out}")
    print(_summary(ds))
    return EXIT_OK


def cmd_embed(args) -> int:
    ds = resolve_dataset(args.input)
    out_ds = embed_dataset(ds, walks_per_node=args.walks, window=args.window, seed=args.seed, method=args.method)
    out_ds.name = f"{ds.name}-emb"
    out = Path(args.output) if args.output else data_dir() / f"{out_ds.name}.lfds"
    save_dataset(out_ds, out)
    print(f"wrote {out}")
    print(_summary(out_ds))
    return EXIT_OK


def _train_overrides(args) -> list[str]:
    items = list(args.set or [])
    for flag, key in (
        ("dataset", "dataset"),
        ("head", "head.kind"),
        ("m", "head.m"),
        ("epochs", "train.epochs"),
        ("seed", "seed"),
        ("folds", "train.folds"),
        ("fold_limit", "train.fold_limit"),
    ):
        value = getattr(args, flag)
        if value is not None:
            items.append(f"{key}={value}")
    return items


def cmd_train(args) -> int:
    overrides = _train_overrides(args)
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = parse_config_text("", "<flags>", overrides)
    if args.jobs < 1:
        raise UsageError(f"--jobs must be >= 1, got {args.jobs}")
    ds = resolve_dataset(cfg.dataset)
    report = cross_validate(ds, cfg, jobs=args.jobs)
    out = Path(args.output_dir)
    stem = f"{report.dataset}_{cfg.head}_{cfg.seed}"
    for f in report.folds:
        save_checkpoint(
            f.model,
            out / f"{stem}_fold{f.fold}.ckpt",
            {"fold": f.fold, "dataset": report.dataset, "run_config": cfg.to_dict()},
        )
    text = report.to_text()
    atomic_write_bytes(out / f"{stem}.report", text.encode())
    path = write_metrics(report, out)
    sys.stdout.write(text)
    print(f"metrics: {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, extra = load_checkpoint(args.checkpoint)
    spec = args.dataset or extra.get("dataset")
    if not spec:
        raise UsageError("checkpoint names no dataset; pass --dataset")
    ds = resolve_dataset(spec)
    samples = ds.samples
    fold = args.fold if args.fold is not None else (None if args.all else extra.get("fold"))
    scope = "all samples"
    if fold is not None:
        rc = extra.get("run_config", {})
        folds = args.folds or rc.get("fold_count", 10)
        seed = args.seed if args.seed is not None else rc.get("seed", 0)
        split = make_folds(ds, folds, seed)
        samples = [ds.samples[i] for i in split.test_indices(fold)]
        scope = f"test split of fold {fold} ({folds} folds, seed {seed})"
    loss, acc = evaluate(model, samples)
    print(f"dataset: {ds.name}")
    print(f"head: {model.config.head}")
    print(f"scope: {scope}")
    print(f"samples: {len(samples)}")
    print(f"loss: {loss:.6f}")
    print(f"accuracy: {acc:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    kinds = list(gc.kinds_from_flag(args.head)) if args.head != MAXPOOL else [MAXPOOL]
    ok = True
    start = time.perf_counter()
    for kind in kinds:
        errors = gc.model_gradcheck(kind, seed=args.seed)
        for group, err in gc.grouped(errors).items():
            status = "PASS" if err < GRADCHECK_TOL else "FAIL"
            ok &= err < GRADCHECK_TOL
            print(f"{kind}\t{group}\t{err:.3e}\t{status}")
    print(f"gradcheck: {'PASS' if ok else 'FAIL'} ({len(kinds)} head(s), tol {GRADCHECK_TOL:g}, {time.perf_counter() - start:.1f}s)")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_report(args) -> int:
    files = [read_metrics(p) for p in expand_metrics_glob(args.metrics)]
    table = AccuracyTable(files)
    sys.stdout.write(table.to_tsv() if args.tsv else table.render())
    if args.out_dir:
        out = Path(args.out_dir)
        atomic_write_bytes(out / "table.txt", table.render().encode())
        atomic_write_bytes(out / "table.tsv", table.to_tsv().encode())
        accuracy_figure(table, out / "accuracy.png")
        loss_figure(files, out / "loss.png")
        print(f"wrote {out / 'table.txt'}, {out / 'table.tsv'}, {out / 'accuracy.png'}, {out / 'loss.png'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    head_choices = [k.value for k in ALL_KINDS]
    p = _Parser(prog="lfds", description="Graph classification with latent fixed data structure heads.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate or ingest a dataset and write its cache file")
    g.add_argument("--kind", required=True, choices=DATA_KINDS)
    g.add_argument("--per-class", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--k", type=int, default=4, help="neighbours for pc-graphs")
    g.add_argument("--points", type=int, default=150, help="points per cloud for pc-graphs")
    g.add_argument("--source", help="benchmark directory")
    g.add_argument("--name", help="benchmark dataset name")
    g.add_argument("--embed", action="store_true", help="append 12 random-walk embedding columns")
    g.add_argument("--output", help="cache path (default $LFDS_DATA_DIR/<name>.lfds)")
    g.set_defaults(func=cmd_gen_data)

    e = sub.add_parser("embed", help="append random-walk embeddings to a cached dataset")
    e.add_argument("--input", required=True, help="cache path or dataset name")
    e.add_argument("--output")
    e.add_argument("--walks", type=int, default=10)
    e.add_argument("--window", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--method", choices=("expected", "sampled"), default="expected")
    e.set_defaults(func=cmd_embed)

    t = sub.add_parser("train", help="k-fold cross-validation run")
    t.add_argument("--config")
    t.add_argument("--dataset")
    t.add_argument("--head", choices=head_choices + [MAXPOOL])
    t.add_argument("--m", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--folds", type=int)
    t.add_argument("--fold-limit", type=int)
    t.add_argument("--jobs", type=int, default=1)
    t.add_argument("--output-dir", default="runs")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="evaluate a checkpoint")
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--dataset")
    v.add_argument("--fold", type=int)
    v.add_argument("--folds", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--all", action="store_true", help="evaluate on every sample")
    v.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of every parameter")
    c.add_argument("--head", default="all", choices=["all", MAXPOOL] + head_choices)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)

    r = sub.add_parser("report", help="aggregate metrics files into an accuracy table")
    r.add_argument("--metrics", required=True, help="glob of .metrics files")
    r.add_argument("--out-dir", help="write table.txt, table.tsv and figures here")
    r.add_argument("--tsv", action="store_true", help="print the machine-readable table")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"lfds {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestionError, FormatError, OSError) as exc:
        print(f"lfds {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LfdsError as exc:
        print(f"lfds {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
