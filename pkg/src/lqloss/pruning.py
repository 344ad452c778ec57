"""Alternating optimization for the truncated loss.

The truncated objective is equivalent to a biconvex surrogate in
(parameters, binary sample weights): for fixed parameters the optimal
weight for sample i is 1 exactly when the softmax probability of its
(noisy) label is at least the threshold k, so the weight update is a
closed-form pruning pass. Training alternates a fixed number of masked
SGD epochs with these pruning passes, recomputing the mask from the
parameter snapshot with the best validation accuracy seen so far instead
of the possibly overfit current parameters. Pruned samples stay in the
dataset and may re-enter at later passes.
"""

from dataclasses import dataclass, asdict, field

import numpy as np

from .data import ExperimentData, NoisyDataset
from .errors import ConfigError
from .losses import lq_value
from .train import (Classifier, EpochMetrics, SgdState, TrainConfig, forward,
                    init_classifier, train_epoch)


@dataclass(frozen=True)
class AcsConfig:
    """Schedule for the alternating prune-train procedure."""

    total_epochs: int
    warmup_epochs: int
    prune_interval: int
    q: float
    k: float
    snapshot_policy: str = "best-validation"

    def __post_init__(self):
        if self.warmup_epochs > self.total_epochs or self.warmup_epochs < 0:
            raise ConfigError("need 0 <= warmup_epochs <= total_epochs")
        if self.prune_interval < 1:
            raise ConfigError("prune_interval must be >= 1")
        if not 0.0 < self.q < 1.0:
            raise ConfigError("q must be in (0, 1) for the truncated objective")
        if not 0.0 < self.k < 1.0:
            raise ConfigError("k must be in (0, 1)")
        if self.snapshot_policy != "best-validation":
            raise ConfigError("only the best-validation snapshot policy is supported")


@dataclass
class PruneEvent:
    """Summary of one pruning pass."""

    epoch: int
    snapshot_epoch: int
    retained: int
    retained_corrupted: int
    masked_out: int
    masked_out_corrupted: int
    collapsed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AcsHistory:
    metrics: list = field(default_factory=list)
    prune_events: list = field(default_factory=list)
    masks: list = field(default_factory=list)  # one bool vector per prune event


def pruning_step(clf: Classifier, train_data: NoisyDataset, q: float, k: float) -> np.ndarray:
    """Closed-form optimal sample weights at the current parameters.

    Keeps sample i iff the softmax probability of its noisy label is
    >= k (ties kept), which by monotonicity of the loss curve is the
    argmin of the weighted surrogate over binary weights.
    """
    if not 0.0 < q < 1.0:
        raise ConfigError("q must be in (0, 1)")
    if not 0.0 < k < 1.0:
        raise ConfigError("k must be in (0, 1)")
    p = forward(clf, train_data.features)
    p_label = p[np.arange(train_data.n), train_data.noisy_labels]
    return p_label >= k


def truncated_objective_value(clf: Classifier, train_data: NoisyDataset,
                              mask: np.ndarray, q: float, k: float) -> float:
    """Masked surrogate objective: kept samples pay their loss, pruned pay the cap.

    With the mask from ``pruning_step`` this equals the direct sum of the
    truncated loss over all samples.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (train_data.n,):
        raise ConfigError(f"mask must have length {train_data.n}")
    p = forward(clf, train_data.features)
    p_label = p[np.arange(train_data.n), train_data.noisy_labels]
    cap = float(lq_value(k, q))
    return float(np.where(mask, lq_value(p_label, q), cap).sum())


def _prune_event(epoch, snapshot_epoch, mask, corrupted, collapsed=False):
    kept = int(mask.sum())
    out = mask.size - kept
    return PruneEvent(epoch=epoch, snapshot_epoch=snapshot_epoch, retained=kept,
                      retained_corrupted=int(corrupted[mask].sum()), masked_out=out,
                      masked_out_corrupted=int(corrupted[~mask].sum()), collapsed=collapsed)


def acs_train(data: ExperimentData, arch, train_cfg: TrainConfig,
              acs_cfg: AcsConfig) -> tuple[Classifier, AcsHistory]:
    """Warmup on all samples, then alternate pruning passes with masked SGD.

    The mask is recomputed every ``prune_interval`` epochs once warmup is
    over, always from the best-validation parameter snapshot. A pass that
    would prune everything is discarded: the previous mask stays in force
    and the event is flagged as collapsed.
    """
    if train_cfg.loss.kind != "lq" or abs(train_cfg.loss.q - acs_cfg.q) > 1e-12:
        raise ConfigError("train config must use the lq loss with the same q as the "
                          "truncation schedule; the masked surrogate optimizes that loss")
    train_data = data.train
    clf = init_classifier(arch, train_data.num_classes, train_data.dim, train_cfg.seed)
    state = SgdState(clf)
    mask = np.ones(train_data.n, dtype=bool)
    history = AcsHistory()
    best_val = -1.0
    best_epoch = -1
    snapshot = clf.copy()

    for epoch in range(acs_cfg.total_epochs):
        due = epoch >= acs_cfg.warmup_epochs and \
            (epoch - acs_cfg.warmup_epochs) % acs_cfg.prune_interval == 0
        if due:
            candidate = pruning_step(snapshot, train_data, acs_cfg.q, acs_cfg.k)
            if candidate.any():
                mask = candidate
                event = _prune_event(epoch, best_epoch, mask, train_data.corrupted)
            else:
                event = _prune_event(epoch, best_epoch, mask, train_data.corrupted,
                                     collapsed=True)
            history.prune_events.append(event)
            history.masks.append(mask.copy())
        clf, metrics = train_epoch(clf, data, mask, train_cfg, epoch, state)
        history.metrics.append(metrics)
        if metrics.val_accuracy > best_val:
            best_val = metrics.val_accuracy
            best_epoch = epoch
            snapshot = clf.copy()
    return clf, history
