"""Small softmax classifiers trained with mini-batch SGD plus momentum.

The model family is a linear softmax or a ReLU MLP over dense features;
backprop is written out by hand against the analytic logit gradients from
:mod:`lqloss.losses`, and ``grad_check`` validates every parameter
gradient against central finite differences. Training honors a binary
per-sample mask so the truncated-loss alternation can exclude samples;
per-epoch metrics are always computed on the full, unmasked data.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .data import ExperimentData, NoisyDataset
from .errors import ConfigError, DataError
from .losses import LossConfig, logit_grads, loss_values, softmax


@dataclass(frozen=True)
class TrainConfig:
    """SGD recipe: one pass of ``train_epoch`` consumes one epoch of this."""

    loss: LossConfig
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_schedule: tuple = ()  # (epoch, divisor) pairs; lr = base/divisor from that epoch on
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        object.__setattr__(self, "lr_schedule",
                           tuple(sorted((int(e), float(v)) for e, v in self.lr_schedule)))

    def lr_at(self, epoch: int) -> float:
        lr = self.learning_rate
        for start, divisor in self.lr_schedule:
            if epoch >= start:
                lr = self.learning_rate / divisor
        return lr


@dataclass
class EpochMetrics:
    """Learning-dynamics snapshot taken after one epoch.

    ``avg_softmax_correct`` averages the softmax probability assigned to
    the (noisy) training label over samples whose label is uncorrupted;
    ``avg_softmax_wrong`` does the same over corrupted samples and is None
    when the training set has none.
    """

    epoch: int
    train_loss: float
    val_accuracy: float
    test_accuracy: float
    avg_softmax_correct: float | None
    avg_softmax_wrong: float | None
    active_samples: int
    warning: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class Classifier:
    """Feed-forward softmax classifier: list of (weights, bias) layers."""

    def __init__(self, layers):
        self.layers = [(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for w, b in layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.layers[-1][0].shape[1]

    def copy(self) -> "Classifier":
        return Classifier([(w.copy(), b.copy()) for w, b in self.layers])

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)


def init_classifier(arch, c: int, d: int, seed: int) -> Classifier:
    """Fresh classifier with hidden widths ``arch`` ([] = linear softmax).

    Weights are drawn from N(0, 1/fan_in) and biases start at zero, so the
    initial prediction at the origin is the uniform distribution.
    """
    widths = [int(w) for w in arch]
    if any(w < 1 for w in widths):
        raise ConfigError("hidden widths must be >= 1")
    if c < 2 or d < 1:
        raise ConfigError("need c >= 2 classes and d >= 1 features")
    rng = np.random.default_rng(seed)
    sizes = [d] + widths + [c]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    return Classifier(layers)


def logits_of(clf: Classifier, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != clf.input_dim:
        raise DataError(f"input width {a.shape[1]} does not match model dim {clf.input_dim}")
    for w, b in clf.layers[:-1]:
        a = np.maximum(a @ w + b, 0.0)
    w, b = clf.layers[-1]
    z = a @ w + b
    return z[0] if single else z


def forward(clf: Classifier, x: np.ndarray) -> np.ndarray:
    """Softmax output for a single feature vector or a batch of rows."""
    return softmax(logits_of(clf, x))


def predict(clf: Classifier, x: np.ndarray) -> np.ndarray:
    return np.argmax(logits_of(clf, x), axis=-1)


def _forward_trace(clf, X):
    acts = [X]
    a = X
    for w, b in clf.layers[:-1]:
        a = np.maximum(a @ w + b, 0.0)
        acts.append(a)
    w, b = clf.layers[-1]
    return acts, a @ w + b


def _backprop(clf, X, labels, loss_config):
    """Mean-loss gradients for one batch: list of (dW, db) matching layers."""
    acts, z = _forward_trace(clf, X)
    dz = logit_grads(loss_config, z, labels) / X.shape[0]
    grads = [None] * len(clf.layers)
    for li in range(len(clf.layers) - 1, -1, -1):
        w, _ = clf.layers[li]
        a_in = acts[li]
        grads[li] = (a_in.T @ dz, dz.sum(axis=0))
        if li > 0:
            da = dz @ w.T
            dz = da * (acts[li] > 0.0)
    return grads


class SgdState:
    """Momentum velocities; persists across epochs of one training run."""

    def __init__(self, clf: Classifier):
        self.velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in clf.layers]


def train_epoch(clf: Classifier, data: ExperimentData, mask: np.ndarray,
                config: TrainConfig, epoch_index: int,
                state: SgdState | None = None) -> tuple[Classifier, EpochMetrics]:
    """One shuffled pass over the masked-in training samples.

    The shuffle stream is derived from (seed, epoch) so runs are
    bit-reproducible. If the mask excludes everything, parameters are left
    untouched and the metrics carry a warning. Metrics are computed on the
    full train/val/test data regardless of the mask.
    """
    train = data.train
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (train.n,):
        raise ConfigError(f"mask must have length {train.n}")
    if state is None:
        state = SgdState(clf)
    active = np.flatnonzero(mask)
    warning = None
    if active.size == 0:
        warning = "empty-mask: no active samples, parameters unchanged"
    else:
        rng = np.random.default_rng([config.seed, epoch_index])
        order = active[rng.permutation(active.size)]
        lr = config.lr_at(epoch_index)
        mom, wd = config.momentum, config.weight_decay
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = _backprop(clf, train.features[batch], train.noisy_labels[batch], config.loss)
            for li, ((w, b), (gw, gb), (vw, vb)) in enumerate(
                    zip(clf.layers, grads, state.velocity)):
                if wd:
                    gw = gw + wd * w
                vw *= mom
                vw -= lr * gw
                vb *= mom
                vb -= lr * gb
                clf.layers[li] = (w + vw, b + vb)
    metrics = _epoch_metrics(clf, data, config.loss, epoch_index, int(active.size), warning)
    return clf, metrics


def _epoch_metrics(clf, data, loss_config, epoch, active_samples, warning=None):
    train = data.train
    p_train = forward(clf, train.features)
    train_loss = float(loss_values(loss_config, p_train, train.noisy_labels).mean())
    p_label = p_train[np.arange(train.n), train.noisy_labels]
    correct_rows = ~train.corrupted
    avg_correct = float(p_label[correct_rows].mean()) if correct_rows.any() else None
    avg_wrong = float(p_label[train.corrupted].mean()) if train.corrupted.any() else None
    val_acc = float((predict(clf, data.val.features) == data.val.noisy_labels).mean())
    test_acc = float((predict(clf, data.test.features) == data.test.labels).mean())
    return EpochMetrics(epoch=epoch, train_loss=train_loss, val_accuracy=val_acc,
                        test_accuracy=test_acc, avg_softmax_correct=avg_correct,
                        avg_softmax_wrong=avg_wrong, active_samples=active_samples,
                        warning=warning)


def evaluate(clf: Classifier, data: ExperimentData, split: str) -> dict:
    """Metrics fragment for one split.

    Train: loss and average label-softmax against noisy labels, split by
    corruption flag. Val: accuracy against noisy labels (the realistic
    model-selection signal). Test: accuracy against clean labels.
    """
    if split == "train":
        train = data.train
        p = forward(clf, train.features)
        p_label = p[np.arange(train.n), train.noisy_labels]
        correct_rows = ~train.corrupted
        return {
            "train_loss": float(loss_values(LossConfig("cce"), p, train.noisy_labels).mean()),
            "accuracy_vs_noisy": float((np.argmax(p, axis=1) == train.noisy_labels).mean()),
            "avg_softmax_correct": float(p_label[correct_rows].mean()) if correct_rows.any() else None,
            "avg_softmax_wrong": float(p_label[train.corrupted].mean()) if train.corrupted.any() else None,
        }
    if split == "val":
        return {"val_accuracy": float((predict(clf, data.val.features) == data.val.noisy_labels).mean())}
    if split == "test":
        return {"test_accuracy": float((predict(clf, data.test.features) == data.test.labels).mean())}
    raise ConfigError(f"split must be train/val/test, got {split!r}")


def train(data: ExperimentData, arch, config: TrainConfig,
          mask: np.ndarray | None = None) -> tuple[Classifier, list[EpochMetrics]]:
    """Plain training loop: fixed mask (default all ones) for every epoch."""
    clf = init_classifier(arch, data.train.num_classes, data.train.dim, config.seed)
    state = SgdState(clf)
    if mask is None:
        mask = np.ones(data.train.n, dtype=bool)
    history = []
    for epoch in range(config.epochs):
        clf, metrics = train_epoch(clf, data, mask, config, epoch, state)
        history.append(metrics)
    return clf, history


def grad_check(clf: Classifier, x: np.ndarray, label: int, loss_config: LossConfig,
               step: float = 1e-6) -> float:
    """Max relative error of backprop parameter gradients vs central differences.

    Relative error uses a denominator floor of 1e-8 so near-zero gradient
    pairs compare at absolute scale.
    """
    X = np.asarray(x, dtype=np.float64)[None, :]
    labels = np.array([int(label)])
    analytic = _backprop(clf, X, labels, loss_config)

    def loss_at():
        p = forward(clf, X)
        return float(loss_values(loss_config, p, labels)[0])

    worst = 0.0
    for li, (w, b) in enumerate(clf.layers):
        for arr, ga in ((w, analytic[li][0]), (b, analytic[li][1])):
            flat = arr.ravel()
            gflat = ga.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                up = loss_at()
                flat[j] = orig - step
                down = loss_at()
                flat[j] = orig
                fd = (up - down) / (2.0 * step)
                denom = max(1e-8, abs(fd), abs(gflat[j]))
                worst = max(worst, abs(fd - gflat[j]) / denom)
    return worst
