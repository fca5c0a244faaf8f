"""Metrics files, the accuracy table across heads and datasets, and figures.

A metrics file ``{dataset}_{head}_{seed}.metrics`` starts with one
timestamp comment line, then ``# key: value`` header lines, then a
tab-separated table with columns ``fold epoch split loss accuracy lr
penalty``.  Everything after the first line is a deterministic function of
the run.
"""

from __future__ import annotations

import datetime as _dt
import glob as _glob
import json
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data.cache import atomic_write_bytes
from .errors import FormatError, IngestionError
from .heads import ALL_KINDS
from .model import MAXPOOL
from .train import EpochRecord, RunReport

COLUMNS = ("fold", "epoch", "split", "loss", "accuracy", "lr", "penalty")
HEAD_ORDER = (MAXPOOL,) + tuple(k.value for k in ALL_KINDS)


def metrics_filename(dataset: str, head: str, seed: int) -> str:
    return f"{dataset}_{head}_{seed}.metrics"


def _num(x) -> str:
    return "na" if x is None else repr(float(x))


def metrics_text(report: RunReport, timestamp: str | None = None) -> str:
    c = report.config
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    lines = [
        f"# created: {timestamp}",
        f"# dataset: {report.dataset}",
        f"# head: {c.head}",
        f"# seed: {c.seed}",
        f"# m: {c.m}",
        f"# config: {json.dumps(c.to_dict(), sort_keys=True)}",
        "\t".join(COLUMNS),
    ]
    for r in report.records():
        lines.append(
            "\t".join(
                [str(r.fold), str(r.epoch), r.split, _num(r.loss), _num(r.accuracy), _num(r.lr), _num(r.penalty)]
            )
        )
    return "\n".join(lines) + "\n"


def write_metrics(report: RunReport, directory, timestamp: str | None = None) -> Path:
    path = Path(directory) / metrics_filename(report.dataset, report.config.head, report.config.seed)
    atomic_write_bytes(path, metrics_text(report, timestamp).encode())
    return path


@dataclass
class MetricsFile:
    path: Path
    meta: dict
    records: list[EpochRecord]

    @property
    def dataset(self) -> str:
        return self.meta["dataset"]

    @property
    def head(self) -> str:
        return self.meta["head"]

    def final_accuracies(self) -> np.ndarray:
        """Test accuracy at the last epoch of every fold, in fold order."""
        last: dict[int, EpochRecord] = {}
        for r in self.records:
            if r.split == "test" and (r.fold not in last or r.epoch >= last[r.fold].epoch):
                last[r.fold] = r
        return np.array([last[k].accuracy for k in sorted(last)])

    def curve(self, split: str, field: str = "loss"):
        """Mean over folds of ``field`` per epoch for ``split``."""
        by_epoch: dict[int, list[float]] = {}
        for r in self.records:
            if r.split == split:
                by_epoch.setdefault(r.epoch, []).append(getattr(r, field))
        epochs = sorted(by_epoch)
        return np.array(epochs), np.array([np.mean(by_epoch[e]) for e in epochs])


def _parse_num(text, path, lineno):
    if text == "na":
        return None
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"expected a number, got {text!r}", path, lineno) from None


def read_metrics(path) -> MetricsFile:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise IngestionError(f"metrics file not found: {path}") from None
    meta: dict = {}
    records = []
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
            continue
        if not line.strip():
            continue
        parts = line.split("\t")
        if not header_seen:
            if tuple(parts) != COLUMNS:
                raise FormatError(f"expected column header {COLUMNS}", path, lineno)
            header_seen = True
            continue
        if len(parts) != len(COLUMNS):
            raise FormatError(f"expected {len(COLUMNS)} fields, got {len(parts)}", path, lineno)
        try:
            fold, epoch = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError("fold and epoch must be integers", path, lineno) from None
        loss, acc, lr, pen = (_parse_num(t, path, lineno) for t in parts[3:])
        records.append(EpochRecord(fold, epoch, parts[2], loss, acc, lr, pen))
    for key in ("dataset", "head"):
        if key not in meta:
            raise FormatError(f"missing '# {key}:' header line", path)
    return MetricsFile(path, meta, records)


def expand_metrics_glob(pattern: str) -> list[Path]:
    paths = sorted(Path(p) for p in _glob.glob(pattern))
    if not paths:
        raise IngestionError(f"no metrics files match {pattern!r}")
    return paths


@dataclass
class Cell:
    mean: float
    std: float
    count: int


class AccuracyTable:
    """Mean and sample std of final test accuracy; rows are heads, columns datasets.

    Files for the same head and dataset (e.g. several seeds) are pooled: the
    statistics run over all their folds.
    """

    def __init__(self, files: list[MetricsFile]):
        pooled: dict[tuple[str, str], list[float]] = OrderedDict()
        for f in files:
            pooled.setdefault((f.head, f.dataset), []).extend(f.final_accuracies().tolist())
        self.cells = {}
        for key, accs in pooled.items():
            a = np.array(accs)
            std = float(a.std(ddof=1)) if len(a) > 1 else 0.0
            self.cells[key] = Cell(float(a.mean()), std, len(a))
        heads = {h for h, _ in self.cells}
        self.heads = [h for h in HEAD_ORDER if h in heads] + sorted(heads - set(HEAD_ORDER))
        self.datasets = sorted({d for _, d in self.cells})

    def cell(self, head: str, dataset: str) -> Cell | None:
        return self.cells.get((head, dataset))

    def render(self, percent: bool = True) -> str:
        scale = 100.0 if percent else 1.0

        def fmt(c):
            return "-" if c is None else f"{scale * c.mean:.1f} ± {scale * c.std:.1f}"

        rows = [["head"] + self.datasets]
        for h in self.heads:
            rows.append([h] + [fmt(self.cell(h, d)) for d in self.datasets])
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        out = ["# accuracy (%): mean ± sample standard deviation (ddof=1) over folds"]
        for k, r in enumerate(rows):
            out.append(" | ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
            if k == 0:
                out.append("-+-".join("-" * w for w in widths))
        return "\n".join(out) + "\n"

    def to_tsv(self) -> str:
        lines = ["head\tdataset\tmean\tstd\tfolds"]
        for h in self.heads:
            for d in self.datasets:
                c = self.cell(h, d)
                if c is not None:
                    lines.append(f"{h}\t{d}\t{c.mean!r}\t{c.std!r}\t{c.count}")
        return "\n".join(lines) + "\n"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def accuracy_figure(table: AccuracyTable, path) -> Path:
    """Grouped bars of mean accuracy per dataset with one-std error bars."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(table.datasets) + 2), 3.2))
    width = 0.8 / max(1, len(table.heads))
    x = np.arange(len(table.datasets))
    for k, h in enumerate(table.heads):
        cells = [table.cell(h, d) for d in table.datasets]
        means = [100 * c.mean if c else np.nan for c in cells]
        stds = [100 * c.std if c else 0.0 for c in cells]
        ax.bar(x + (k - (len(table.heads) - 1) / 2) * width, means, width, yerr=stds, capsize=2, label=h)
    ax.set_xticks(x)
    ax.set_xticklabels(table.datasets)
    ax.set_ylabel("test accuracy (%)")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=7, ncol=2, frameon=False)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def loss_figure(files: list[MetricsFile], path) -> Path:
    """Fold-averaged train (solid) and test (dashed) loss per epoch for every file."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    for k, f in enumerate(files):
        color = f"C{k % 10}"
        label = f"{f.head} / {f.dataset} / {f.meta.get('seed', '?')}"
        ep, tr = f.curve("train")
        ax.plot(ep, tr, color=color, label=label)
        ep, te = f.curve("test")
        ax.plot(ep, te, color=color, linestyle="--")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross entropy")
    ax.legend(fontsize=6, frameon=False)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
