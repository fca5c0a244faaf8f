"""Epoch loop, learning-rate decay and the k-fold cross-validation driver."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import functional as F
from .data.folds import make_folds
from .data.graph import Dataset, GraphSample
from .errors import ContractError, ParameterError
from .heads import LfdsKind, orthonormality_error
from .model import MAXPOOL, Model, ModelConfig
from .optim import Adam
from .tensor import backward, no_grad

SPLITS = ("train", "test")


def lr_schedule(epoch: int, total_epochs: int, lr_start: float = 0.005, lr_end: float = 0.0001) -> float:
    """Linear decay from ``lr_start`` at epoch 0 to ``lr_end`` at the last epoch."""
    if not 0 <= epoch < total_epochs:
        raise ParameterError(f"epoch {epoch} outside [0, {total_epochs})")
    if total_epochs == 1:
        return lr_start
    t = epoch / (total_epochs - 1)
    return lr_start + t * (lr_end - lr_start)


@dataclass
class RunConfig:
    seed: int
    dataset: str = "separable"
    head: str = "image"
    m: int = 16
    lr_start: float = 0.005
    lr_end: float = 0.0001
    epochs: int = 100
    batch_size: int = 32
    lam: float = 1e-3
    fold_count: int = 10
    fold_limit: int = 0  # 0 runs every fold
    dropout_hidden: float = 0.5
    dropout_node: float = 0.2
    dropout_element: float = 0.4
    hidden: int = 64
    num_layers: int = 3
    classifier_hidden: int = 128
    fuse: bool = True
    normalize_adjacency: bool = False
    u_init: str = "orthonormal"  # or "normal": standard-normal U for the spectral head

    def __post_init__(self):
        if self.head != MAXPOOL:
            self.head = LfdsKind.parse(self.head).value
        if not self.lr_start > self.lr_end > 0:
            raise ParameterError(f"need lr_start > lr_end > 0, got {self.lr_start}, {self.lr_end}")
        for name in ("dropout_hidden", "dropout_node", "dropout_element"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ParameterError(f"{name} must be in [0, 1), got {p}")
        for name in ("epochs", "batch_size", "fold_count", "m", "hidden", "classifier_hidden"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.fold_limit < 0:
            raise ParameterError(f"fold_limit must be >= 0, got {self.fold_limit}")
        if self.u_init not in ("orthonormal", "normal"):
            raise ParameterError(f"u_init must be 'orthonormal' or 'normal', got {self.u_init!r}")

    def model_config(self, in_dim: int, num_classes: int) -> ModelConfig:
        return ModelConfig(
            in_dim=in_dim,
            num_classes=num_classes,
            head=self.head,
            m=self.m,
            hidden=self.hidden,
            num_layers=self.num_layers,
            classifier_hidden=self.classifier_hidden,
            dropout_hidden=self.dropout_hidden,
            dropout_node=self.dropout_node,
            dropout_element=self.dropout_element,
            lam=self.lam,
            fuse=self.fuse,
            normalize_adjacency=self.normalize_adjacency,
        )

    @property
    def folds_to_run(self) -> int:
        return self.fold_limit or self.fold_count

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class EpochRecord:
    fold: int
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: float
    penalty: float | None = None


@dataclass
class FoldResult:
    fold: int
    test_accuracy: float
    train_accuracy: float
    records: list[EpochRecord]
    model: Model
    num_train: int
    num_test: int
    u_error: tuple[float, float] | None = None  # (initial, final) for the spectral head
    seconds: float = 0.0


def evaluate(model: Model, samples, batch_size: int = 64):
    """Mean cross entropy and accuracy in eval mode."""
    samples = list(samples)
    if not samples:
        raise ParameterError("cannot evaluate on an empty set")
    total, correct = 0.0, 0
    with no_grad():
        for s in range(0, len(samples), batch_size):
            chunk = samples[s : s + batch_size]
            logits = model.forward(chunk, F.EVAL)
            labels = np.array([g.label for g in chunk])
            total += F.cross_entropy(logits, labels).item() * len(chunk)
            correct += int((np.argmax(logits.data, axis=1) == labels).sum())
    return total / len(samples), correct / len(samples)


def predict(model: Model, samples, batch_size: int = 64) -> np.ndarray:
    out = []
    with no_grad():
        samples = list(samples)
        for s in range(0, len(samples), batch_size):
            out.append(np.argmax(model.forward(samples[s : s + batch_size], F.EVAL).data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def _fold_seeds(seed: int, fold: int):
    ss = np.random.SeedSequence([seed, fold])
    init, loop = ss.spawn(2)
    return int(init.generate_state(1)[0]), np.random.default_rng(loop)


def _check_finite(model: Model, where: str) -> None:
    for name, p in model.params.items():
        if not np.all(np.isfinite(p.data)):
            raise ContractError(f"non-finite values in {name} after {where}")


def train_fold(
    train: list[GraphSample],
    test: list[GraphSample],
    config: RunConfig,
    in_dim: int,
    num_classes: int,
    fold: int = 0,
) -> FoldResult:
    """Train one model on ``train`` and report per-epoch curves and test accuracy."""
    if not train:
        raise ParameterError("empty training set")
    if not test:
        raise ParameterError("empty test set")
    start = time.perf_counter()
    init_seed, rng = _fold_seeds(config.seed, fold)
    model = Model(config.model_config(in_dim, num_classes), seed=init_seed)
    spectral = config.head == LfdsKind.PARAM_SPECTRAL.value
    if spectral and config.u_init == "normal":
        u = model.params["head.U"]
        u.data = np.random.default_rng(init_seed + 1).standard_normal(u.shape)
    u_start = orthonormality_error(model.params["head.U"].data) if spectral else None
    opt = Adam(model.params)
    records: list[EpochRecord] = []
    n = len(train)
    bs = config.batch_size
    for epoch in range(config.epochs):
        lr = lr_schedule(epoch, config.epochs, config.lr_start, config.lr_end)
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for s in range(0, n, bs):
            batch = [train[i] for i in order[s : s + bs]]
            opt.zero_grad()
            loss, logits = model.loss(batch, F.TRAIN, rng)
            backward(loss)
            opt.step(lr)
            labels = np.array([g.label for g in batch])
            loss_sum += loss.item() * len(batch)
            correct += int((np.argmax(logits.data, axis=1) == labels).sum())
        _check_finite(model, f"epoch {epoch}")
        pen = model.penalty()
        pen = None if pen is None else pen.item()
        records.append(EpochRecord(fold, epoch, "train", loss_sum / n, correct / n, lr, pen))
        test_loss, test_acc = evaluate(model, test)
        records.append(EpochRecord(fold, epoch, "test", test_loss, test_acc, lr, pen))
    u_error = None
    if spectral:
        u_error = (u_start, orthonormality_error(model.params["head.U"].data))
    return FoldResult(
        fold=fold,
        test_accuracy=records[-1].accuracy,
        train_accuracy=records[-2].accuracy,
        records=records,
        model=model,
        num_train=len(train),
        num_test=len(test),
        u_error=u_error,
        seconds=time.perf_counter() - start,
    )


@dataclass
class RunReport:
    dataset: str
    config: RunConfig
    folds: list[FoldResult]
    seconds: float = 0.0
    fold_sizes: list[int] = field(default_factory=list)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.test_accuracy for f in self.folds])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        """Sample standard deviation over folds (0 for a single fold)."""
        acc = self.accuracies
        return float(acc.std(ddof=1)) if len(acc) > 1 else 0.0

    def records(self) -> list[EpochRecord]:
        return [r for f in self.folds for r in f.records]

    def to_text(self) -> str:
        c = self.config
        lines = [
            f"dataset: {self.dataset}",
            f"head: {c.head}",
            f"m: {c.m}",
            f"seed: {c.seed}",
            f"folds: {len(self.folds)} of {c.fold_count}",
            f"epochs: {c.epochs}",
            f"mean_accuracy: {self.mean:.4f}",
            f"std_accuracy: {self.std:.4f}",
            "std_definition: sample standard deviation over folds (ddof=1)",
            f"wall_clock_seconds: {self.seconds:.1f}",
        ]
        lines += [f"config.{k}: {v}" for k, v in c.to_dict().items()]
        lines.append("")
        lines.append("fold\tnum_train\tnum_test\ttrain_accuracy\ttest_accuracy\tu_error_start\tu_error_end")
        for f in self.folds:
            ue = ("na", "na") if f.u_error is None else (f"{f.u_error[0]:.6g}", f"{f.u_error[1]:.6g}")
            lines.append(
                f"{f.fold}\t{f.num_train}\t{f.num_test}\t{f.train_accuracy:.4f}\t{f.test_accuracy:.4f}\t{ue[0]}\t{ue[1]}"
            )
        return "\n".join(lines) + "\n"


def _run_fold(args):
    dataset, config, split, fold = args
    train = [dataset.samples[i] for i in split.train_indices(fold)]
    test = [dataset.samples[i] for i in split.test_indices(fold)]
    return train_fold(train, test, config, dataset.feature_dim, dataset.num_classes, fold)


def cross_validate(dataset: Dataset, config: RunConfig, jobs: int = 1) -> RunReport:
    """Stratified k-fold training; folds may run in parallel processes."""
    start = time.perf_counter()
    split = make_folds(dataset, config.fold_count, config.seed)
    tasks = [(dataset, config, split, k) for k in range(min(config.folds_to_run, config.fold_count))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    results.sort(key=lambda r: r.fold)
    return RunReport(
        dataset=dataset.name,
        config=config,
        folds=results,
        seconds=time.perf_counter() - start,
        fold_sizes=split.sizes().tolist(),
    )
