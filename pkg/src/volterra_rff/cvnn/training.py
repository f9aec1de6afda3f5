"""Seeded training, evaluation and stratified k-fold cross-validation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, StratificationError
from ..iq import derive_rng
from ..volterra.featio import FeatureSet
from . import layers as L
from .network import NetworkConfig, NetworkParams, forward, init_params, loss_and_grads, update_running_stats

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    train_fraction: float = 0.8
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 2:
            raise ConfigError("epochs must be >= 1 and batch_size >= 2")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


class Adam:
    def __init__(self, params: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params: dict, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k, g in grads.items():
            params[k] = params[k] - self.lr * g


def _optimizer(params: dict, tc: TrainConfig):
    if tc.optimizer == "adam":
        return Adam(params, tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps)
    return SGD(params, tc.learning_rate)


@dataclass
class EvalResult:
    confusion: np.ndarray  # rows = true class, columns = predicted
    accuracy: float
    loss: float = float("nan")


@dataclass
class TrainResult:
    params: NetworkParams
    history: list = field(default_factory=list)  # one dict per epoch
    train_index: np.ndarray | None = None
    val_index: np.ndarray | None = None


def check_classes(labels: np.ndarray, n_classes: int, what: str = "training set") -> None:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise StratificationError(f"{what} has labels outside [0, {n_classes})")
    missing = np.setdiff1d(np.arange(n_classes), labels)
    if missing.size:
        shown = ", ".join(map(str, missing[:10])) + (" ..." if missing.size > 10 else "")
        raise StratificationError(f"{what} has no samples for class(es) {shown}")


def stratified_split(labels: np.ndarray, train_fraction: float, rng: np.random.Generator):
    """Per-class shuffled split; every class keeps at least one sample on each side."""
    labels = np.asarray(labels)
    train, val = [], []
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        if idx.size < 2:
            raise StratificationError(f"class {c} has {idx.size} sample(s); a train/validation split needs 2")
        n_train = min(max(int(round(train_fraction * idx.size)), 1), idx.size - 1)
        train.append(idx[:n_train])
        val.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def stratified_folds(labels: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """``k`` disjoint index sets covering every sample, each holding about 1/k of every class."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    labels = np.asarray(labels)
    folds = [[] for _ in range(k)]
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        if idx.size < k:
            raise StratificationError(f"class {c} has {idx.size} samples, fewer than k={k}")
        for f, part in enumerate(np.array_split(idx, k)):
            folds[f].append(part)
    return [np.sort(np.concatenate(parts)) for parts in folds]


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and batches[-1].size < 2:
        # batch norm needs two samples; fold a lone straggler into the previous batch
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def predict_logits(net: NetworkParams, theta: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits for complex features ``(count, D)``."""
    theta = np.atleast_2d(theta)
    out = [forward(net, net.standardize(theta[i : i + batch_size]), "eval")[0]
           for i in range(0, theta.shape[0], batch_size)]
    return np.concatenate(out, axis=0)


def confusion_matrix(labels: np.ndarray, predicted: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(predicted)), 1)
    return cm


def evaluate(net: NetworkParams, theta: np.ndarray, labels: np.ndarray) -> EvalResult:
    labels = np.asarray(labels, dtype=np.int64)
    logits = predict_logits(net, theta)
    cm = confusion_matrix(labels, logits.argmax(axis=1), net.config.n_classes)
    total = cm.sum()
    acc = float(np.trace(cm) / total) if total else float("nan")
    return EvalResult(cm, acc, L.cross_entropy(logits, labels) if total else float("nan"))


def fit(train_set: FeatureSet, val_set: FeatureSet | None, net_cfg: NetworkConfig, tc: TrainConfig,
        stream: tuple = ()) -> TrainResult:
    """Train a fresh network on ``train_set``; ``stream`` separates seeds of repeated fits."""
    if train_set.dim != net_cfg.input_len:
        raise ConfigError(f"features have D={train_set.dim}, network expects input_len={net_cfg.input_len}")
    check_classes(train_set.labels, net_cfg.n_classes)
    if len(train_set) < 2:
        raise StratificationError("training needs at least 2 samples")
    net = init_params(net_cfg, derive_rng(tc.seed, "init", *stream))
    net.fit_standardization(train_set.theta)
    x_all = net.standardize(train_set.theta)
    opt = _optimizer(net.params, tc)
    shuffle_rng = derive_rng(tc.seed, "shuffle", *stream)
    history = []
    for epoch in range(1, tc.epochs + 1):
        for idx in _batches(len(train_set), tc.batch_size, shuffle_rng):
            x = L.ComplexTensor(x_all.re[idx], x_all.im[idx])
            _, grads, stats, _ = loss_and_grads(net, x, train_set.labels[idx])
            opt.step(net.params, grads)
            update_running_stats(net, stats)
        tr = evaluate(net, train_set.theta, train_set.labels)
        row = {"epoch": epoch, "train_acc": tr.accuracy, "train_loss": tr.loss}
        if val_set is not None and len(val_set):
            va = evaluate(net, val_set.theta, val_set.labels)
            row.update(val_acc=va.accuracy, val_loss=va.loss)
        else:
            row.update(val_acc=None, val_loss=None)
        history.append(row)
    return TrainResult(net, history)


def train(features: FeatureSet, net_cfg: NetworkConfig, tc: TrainConfig) -> TrainResult:
    """Stratified train/validation split by ``tc.train_fraction`` then :func:`fit`."""
    if np.unique(features.labels).size < 2:
        raise StratificationError("training needs at least 2 classes")
    check_classes(features.labels, net_cfg.n_classes, "feature set")
    tr_idx, va_idx = stratified_split(features.labels, tc.train_fraction, derive_rng(tc.seed, "split"))
    result = fit(features.subset(tr_idx), features.subset(va_idx), net_cfg, tc)
    result.train_index, result.val_index = tr_idx, va_idx
    return result


def summarize(accuracies) -> dict:
    a = np.asarray(accuracies, dtype=np.float64)
    q1, median, q3 = np.percentile(a, [25, 50, 75])
    return {"mean": float(a.mean()), "min": float(a.min()), "max": float(a.max()),
            "median": float(median), "q1": float(q1), "q3": float(q3)}


@dataclass
class KFoldResult:
    accuracies: list
    summary: dict
    folds: list  # validation index arrays
    confusion: np.ndarray  # summed over folds


def kfold(features: FeatureSet, k: int, net_cfg: NetworkConfig, tc: TrainConfig) -> KFoldResult:
    check_classes(features.labels, net_cfg.n_classes, "feature set")
    folds = stratified_folds(features.labels, k, derive_rng(tc.seed, "folds", k))
    accs = []
    total = np.zeros((net_cfg.n_classes, net_cfg.n_classes), dtype=np.int64)
    everything = np.arange(len(features))
    for f, val_idx in enumerate(folds):
        train_idx = np.setdiff1d(everything, val_idx)
        result = fit(features.subset(train_idx), None, net_cfg, tc, stream=(k, f))
        ev = evaluate(result.params, features.theta[val_idx], features.labels[val_idx])
        accs.append(ev.accuracy)
        total += ev.confusion
    return KFoldResult(accs, summarize(accs), folds, total)
