"""Training loop, evaluation, cross-validation, grid search and ablations."""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, PretrainedInit, cv_splits, idf_weights, load_pretrained
from .grad import DivergenceError, OptimizerState, adam_step, batch_loss, loss_and_grad
from .model import FROZEN, ParamSet, Variant, count_parameters, init_params, predict, renormalize

log = logging.getLogger(__name__)

# the search pool reported for the original model
PAPER_POOL = {
    "lr": [1e-3, 1e-4, 1e-5, 1e-6],
    "l2": [1e-5, 1e-6, 1e-7, 1e-8],
    "batch_size": [8, 16, 32, 64, 128],
    "k": [5, 10, 20, 50, 100, 200],
}


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    n: int = 50
    k: int = 20
    lr: float = 1e-3
    l2: float = 1e-6
    l2_mode: str = "coupled"  # "coupled": penalty in the loss; "decoupled": Adam weight decay
    batch_size: int = 32
    epochs: int = 30
    patience: int = 5
    seed: int = 0
    variant: str = "full"
    norm_every: int = 1  # batches between word-embedding renormalisations
    measure_norm_every: int = 1  # batches between measurement-state renormalisations
    dev_fraction: float = 0.1
    folds: int = 10
    min_count: int = 1
    init_scale: float = 0.05
    real_dim: int | None = None
    data: str | None = None
    test_data: str | None = None
    pretrained: str | None = None
    sign_mode: str = "abs"

    def __post_init__(self):
        self.validate()

    def validate(self) -> "TrainConfig":
        try:
            Variant(self.variant)
        except ValueError:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {[v.value for v in Variant]}") from None
        for name in ("n", "k", "batch_size", "epochs", "patience", "norm_every", "measure_norm_every", "folds", "min_count"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.l2 < 0 or self.init_scale < 0:
            raise ConfigError("l2 and init_scale must be non-negative")
        if self.l2_mode not in ("coupled", "decoupled"):
            raise ConfigError("l2_mode must be 'coupled' or 'decoupled'")
        if not 0 <= self.dev_fraction < 1:
            raise ConfigError("dev_fraction must lie in [0, 1)")
        if self.sign_mode not in ("abs", "phase"):
            raise ConfigError("sign_mode must be 'abs' or 'phase'")
        if Variant(self.variant) is Variant.FIXED_ORTHOGONAL_PROJECTORS and self.k > self.n:
            raise ConfigError(f"fixed-orthogonal-projectors needs k <= n (k={self.k}, n={self.n})")
        return self

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        """Build from string or typed values (config files, CLI flags)."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                kwargs[key] = None
                continue
            default = known[key].default
            if isinstance(raw, str):
                if raw.strip().lower() in ("", "none"):
                    kwargs[key] = None
                    continue
                try:
                    if isinstance(default, bool):
                        raw = raw.strip().lower() in ("1", "true", "yes")
                    elif isinstance(default, int) or key == "real_dim":
                        raw = int(raw)
                    elif isinstance(default, float):
                        raw = float(raw)
                except ValueError:
                    raise ConfigError(f"bad value for {key}: {raw!r}") from None
            kwargs[key] = raw
        return cls(**kwargs)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows: true label, columns: predicted label

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


@dataclass
class RunReport:
    config: dict
    variant: str
    param_count: int
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_accuracy: float = float("nan")
    train_accuracy: float = float("nan")
    test_accuracy: float | None = None
    fold_accuracies: list[float] | None = None
    mean_accuracy: float | None = None
    std_accuracy: float | None = None
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(params: ParamSet, variant: Variant | str, split: Dataset) -> EvalResult:
    if len(split) == 0:
        raise ValueError("empty evaluation split")
    pred = predict(split.sentences, params, variant).argmax(axis=1)
    L = params.n_labels
    confusion = np.zeros((L, L), dtype=np.int64)
    np.add.at(confusion, (split.labels, pred), 1)
    return EvalResult(float(np.trace(confusion)) / len(split), confusion)


def split_dev(n_examples: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng([seed, 7919]).permutation(n_examples)
    n_dev = int(round(fraction * n_examples))
    if fraction > 0 and n_examples > 1:
        n_dev = min(max(n_dev, 1), n_examples - 1)
    return np.sort(order[n_dev:]), np.sort(order[:n_dev])


def make_params(config: TrainConfig, dataset: Dataset, init: PretrainedInit | None = None, rng=None) -> ParamSet:
    variant = Variant(config.variant)
    if init is None and config.pretrained and variant is not Variant.REAL_DOUBLE_DIM:
        init = load_pretrained(config.pretrained, dataset.vocab, config.n, config.sign_mode)
    return init_params(
        config.n,
        config.k,
        len(dataset.vocab),
        dataset.n_labels,
        variant,
        rng=np.random.default_rng(config.seed) if rng is None else rng,
        amplitudes=None if init is None or variant is Variant.REAL_DOUBLE_DIM else init.amplitudes,
        phase_offsets=None if init is None or variant is Variant.REAL_DOUBLE_DIM else init.phase_offsets,
        idf=idf_weights(None, dataset.vocab) if variant is Variant.IDF_WEIGHTS else None,
        real_dim=config.real_dim,
        init_scale=config.init_scale,
    )


def train_model(
    config: TrainConfig,
    dataset: Dataset,
    *,
    dev: Dataset | None = None,
    test: Dataset | None = None,
    init: PretrainedInit | None = None,
    on_step=None,
) -> tuple[ParamSet, RunReport]:
    """Train one model and return the parameters from the best dev epoch.

    When ``dev`` is not given, ``config.dev_fraction`` of ``dataset`` is held
    out by seed; with ``dev_fraction=0`` the training set doubles as dev set.
    ``RunReport.train_accuracy`` is measured on all of ``dataset``, dev
    portion included.
    ``on_step(step, loss, grads)`` is called after every update.
    """
    config.validate()
    if len(dataset) == 0:
        raise ValueError("empty training set")
    t0 = time.perf_counter()
    variant = Variant(config.variant)
    frozen = FROZEN[variant]
    train = dataset
    if dev is None and config.dev_fraction > 0 and len(dataset) > 1:
        tr_idx, dev_idx = split_dev(len(dataset), config.dev_fraction, config.seed)
        train, dev = dataset.subset(tr_idx), dataset.subset(dev_idx)
    elif dev is None:
        dev = dataset

    rng = np.random.default_rng(config.seed)
    params = make_params(config, dataset, init, rng)
    coupled = config.l2_mode == "coupled"
    opt = OptimizerState.for_params(params, lr=config.lr, weight_decay=0.0 if coupled else config.l2)
    report = RunReport(config=asdict(config), variant=variant.value, param_count=count_parameters(params, variant))

    best = params.copy()
    best_acc, best_loss, bad, step = -1.0, math.inf, 0, 0
    labels = train.labels
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            loss, grads, _ = loss_and_grad(
                [train.sentences[j] for j in idx], labels[idx], params, variant, config.l2 if coupled else 0.0
            )
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step + 1}")
            adam_step(params, grads, opt, frozen)
            step += 1
            renormalize(
                params,
                variant,
                embeddings=step % config.norm_every == 0 and "R" not in frozen,
                measurements=step % config.measure_norm_every == 0 and "V_amp" not in frozen,
            )
            losses.append(loss)
            if on_step is not None:
                on_step(step, loss, grads)
        renormalize(params, variant, embeddings="R" not in frozen, measurements="V_amp" not in frozen)
        dev_probs = predict(dev.sentences, params, variant)
        dev_acc = float(np.mean(dev_probs.argmax(axis=1) == dev.labels))
        dev_loss = float(batch_loss(dev_probs, dev.labels).mean())
        report.epochs.append(
            {"epoch": epoch, "train_loss": float(np.mean(losses)), "dev_accuracy": dev_acc, "dev_loss": dev_loss}
        )
        log.info("epoch %d loss %.4f dev %.4f", epoch, np.mean(losses), dev_acc)
        # a lower dev loss at equal accuracy replaces the kept copy but does not reset patience
        improved = dev_acc > best_acc
        if improved or (dev_acc == best_acc and dev_loss < best_loss):
            best_acc, best_loss, best = dev_acc, dev_loss, params.copy()
            report.best_epoch = epoch
        bad = 0 if improved else bad + 1
        if bad >= config.patience:
            break

    report.best_dev_accuracy = best_acc
    report.train_accuracy = evaluate(best, variant, dataset).accuracy
    if test is not None and len(test):
        report.test_accuracy = evaluate(best, variant, test).accuracy
    report.wall_clock = time.perf_counter() - t0
    return best, report


@dataclass
class CVResult:
    mean: float
    std: float
    fold_accuracies: list[float]
    reports: list[RunReport]


def _run_fold(config, train, test, init):
    return train_model(config, train, test=test, init=init)[1]


def cross_validate(
    config: TrainConfig,
    dataset: Dataset,
    *,
    folds: np.ndarray | None = None,
    init: PretrainedInit | None = None,
    max_folds: int | None = None,
    workers: int = 1,
) -> CVResult:
    """Train one model per fold, test each on its held-out fold.

    Folds are independent, so ``workers > 1`` runs them in separate processes
    with identical results.  ``max_folds`` limits how many folds are run.
    """
    if folds is None:
        folds = dataset.folds if dataset.folds is not None else cv_splits(len(dataset), config.folds, config.seed)
    folds = np.asarray(folds)
    fold_ids = sorted(int(f) for f in np.unique(folds) if f >= 0)
    if len(fold_ids) < 2:
        raise ValueError("cross-validation needs at least two folds")
    if init is None and config.pretrained and Variant(config.variant) is not Variant.REAL_DOUBLE_DIM:
        init = load_pretrained(config.pretrained, dataset.vocab, config.n, config.sign_mode)
    jobs = []
    for f in fold_ids[:max_folds]:
        test_idx = np.flatnonzero(folds == f)
        train_idx = np.flatnonzero((folds != f) & (folds >= 0))
        if np.intersect1d(test_idx, train_idx).size:
            raise AssertionError(f"fold {f} overlaps its training set")
        jobs.append((config, dataset.subset(train_idx), dataset.subset(test_idx), init))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_fold, *zip(*jobs)))
    else:
        reports = [_run_fold(*job) for job in jobs]
    accs = [r.test_accuracy for r in reports]
    for f, a in zip(fold_ids, accs):
        log.info("fold %d: test accuracy %.4f", f, a)
    return CVResult(float(np.mean(accs)), float(np.std(accs)), accs, reports)


@dataclass
class LeaderboardEntry:
    config: TrainConfig
    dev_accuracy: float
    param_count: int

    def sort_key(self):
        return (-self.dev_accuracy, self.param_count, self.config.lr)


def grid_search(
    pool: dict[str, Sequence],
    dataset: Dataset,
    base: TrainConfig | None = None,
    *,
    init: PretrainedInit | None = None,
) -> tuple[TrainConfig, list[LeaderboardEntry]]:
    """Evaluate the Cartesian product of ``pool`` by best dev accuracy.

    Ties go to the smaller model, then to the lower learning rate.
    """
    base = base or TrainConfig()
    if not pool or any(len(v) == 0 for v in pool.values()):
        raise ValueError("every pool axis needs at least one value")
    keys = list(pool)
    board = []
    for values in itertools.product(*(pool[k] for k in keys)):
        cfg = base.with_(**dict(zip(keys, values))).validate()
        _, rep = train_model(cfg, dataset, init=init)
        board.append(LeaderboardEntry(cfg, rep.best_dev_accuracy, rep.param_count))
    board.sort(key=LeaderboardEntry.sort_key)
    return board[0].config, board


ABLATION_ORDER = [
    ("real-single-dim", Variant.REAL_DOUBLE_DIM),
    ("real-double-dim", Variant.REAL_DOUBLE_DIM),
    ("fixed-amplitude", Variant.FIXED_AMPLITUDE),
    ("mean-weights", Variant.MEAN_WEIGHTS),
    ("idf-weights", Variant.IDF_WEIGHTS),
    ("fixed-orthogonal-projectors", Variant.FIXED_ORTHOGONAL_PROJECTORS),
    ("dense-on-rho", Variant.DENSE_ON_RHO),
    ("full", Variant.FULL),
]

ABLATION_LABELS = {
    "real-single-dim": "bag of real word vectors (n dims)",
    "real-double-dim": "bag of real word vectors (2n dims)",
    "fixed-amplitude": "fixed amplitudes, trainable phases",
    "mean-weights": "fixed mean term weights",
    "idf-weights": "fixed IDF term weights",
    "fixed-orthogonal-projectors": "fixed orthogonal projectors",
    "dense-on-rho": "dense layer on the density matrix",
    "full": "full model",
}


@dataclass
class AblationRow:
    setting: str
    variant: str
    accuracy: float
    delta: float
    param_count: int
    frozen_grad_max: dict[str, float] = field(default_factory=dict)


def run_ablation(
    config: TrainConfig,
    train: Dataset,
    test: Dataset,
    variants: Iterable[Variant | str] | None = None,
    *,
    single_dim_baseline: bool | None = None,
    init: PretrainedInit | None = None,
) -> list[AblationRow]:
    """Train each variant with the same seed and budget and tabulate test accuracy.

    Rows follow the layout of the usual ablation table, full model last, with
    ``delta = accuracy - full accuracy``.  The full model is always trained as
    the reference.  ``single_dim_baseline`` adds a real bag-of-vectors row at
    ``n`` dimensions next to the ``2n`` one (default: whenever the real
    baseline is requested).  Frozen blocks are monitored during training and
    their largest gradient magnitude is recorded.
    """
    wanted = {Variant(v) for v in (variants if variants is not None else list(Variant))}
    if single_dim_baseline is None:
        single_dim_baseline = Variant.REAL_DOUBLE_DIM in wanted
    if init is None and config.pretrained:
        init = load_pretrained(config.pretrained, train.vocab, config.n, config.sign_mode)
    results: dict[str, tuple[float, int, dict]] = {}
    for setting, variant in ABLATION_ORDER:
        if setting == "real-single-dim" and not single_dim_baseline:
            continue
        if setting != "real-single-dim" and variant not in wanted and variant is not Variant.FULL:
            continue
        cfg = config.with_(variant=variant.value, real_dim=config.n if setting == "real-single-dim" else None)
        frozen = FROZEN[variant]
        seen = {name: 0.0 for name in frozen}

        def watch(step, loss, grads, seen=seen):
            arrays = grads.arrays()
            for name in seen:
                seen[name] = max(seen[name], float(np.max(np.abs(arrays[name]), initial=0.0)))

        _, rep = train_model(cfg, train, test=test, init=init, on_step=watch)
        log.info("ablation %s: %.4f", setting, rep.test_accuracy)
        results[setting] = (rep.test_accuracy, rep.param_count, seen)
    full_acc = results["full"][0]
    return [
        AblationRow(setting, variant.value, acc, acc - full_acc, pc, seen)
        for setting, variant in ABLATION_ORDER
        if setting in results
        for acc, pc, seen in [results[setting]]
    ]


def format_ablation(rows: Sequence[AblationRow]) -> str:
    width = max(len(ABLATION_LABELS[r.setting]) for r in rows)
    lines = [f"{'setting':<{width}}  accuracy  delta"]
    for r in rows:
        delta = "-" if r.setting == "full" else f"{r.delta:+.4f}"
        lines.append(f"{ABLATION_LABELS[r.setting]:<{width}}  {r.accuracy:.4f}    {delta}")
    return "\n".join(lines)
