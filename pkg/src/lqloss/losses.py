"""Noise-robust classification losses over softmax outputs.

Every loss consumes a probability vector ``f`` on the ``c``-class simplex
together with an integer label, and exposes analytic gradients both with
respect to the probabilities and with respect to the pre-softmax logits,
so training code needs no autodiff.

Loss family:

* ``cce``          categorical cross entropy, ``-log f_y``
* ``mae``          L1 distance to the one-hot target, ``2 - 2 f_y``
* ``lq``           generalized cross entropy ``(1 - f_y^q)/q`` for q in (0,1];
                   recovers cce as q -> 0 and mae/2 at q = 1
* ``trunc_lq``     lq capped at its value at threshold k: constant (flat,
                   zero gradient) once ``f_y <= k``
* ``forward_cce``  cross entropy of the confusion-matrix-mixed prediction,
                   ``-log sum_i T[i, y] f_i``

All computation is float64. ``PROB_FLOOR`` guards ``log`` and negative
powers only; plain powers ``f**q`` are finite on [0, 1] for q > 0 and are
left unclamped so that class-sum bounds are attained exactly at simplex
vertices.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

PROB_FLOOR = 1e-12
SIMPLEX_TOL = 1e-9

LOSS_KINDS = ("cce", "mae", "lq", "trunc_lq", "forward_cce")


def check_simplex(probs: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate that ``probs`` rows lie on the probability simplex.

    Accepts a single vector or a batch of rows; returns the float64 view.
    Raises DataError on negative entries, entries above 1, or row sums
    farther than ``tol`` from 1.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim not in (1, 2):
        raise DataError(f"probability array must be 1- or 2-dimensional, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DataError("probability array contains non-finite entries")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DataError("probability entries must lie in [0, 1]")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise DataError(f"probability rows must sum to 1 within {tol}, worst deviation {worst:.3e}")
    return p


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax over the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DataError("logits contain non-finite entries")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def lq_value(x, q: float):
    """Elementwise ``(1 - x**q)/q``, the generalized-cross-entropy curve."""
    return (1.0 - np.asarray(x, dtype=np.float64) ** q) / q


def _check_label(label: int, c: int) -> int:
    label = int(label)
    if not 0 <= label < c:
        raise DataError(f"label {label} out of range [0, {c})")
    return label


def _check_q(q: float, include_one: bool) -> float:
    q = float(q)
    hi_ok = q <= 1.0 if include_one else q < 1.0
    if not (q > 0.0 and hi_ok):
        rng = "(0, 1]" if include_one else "(0, 1)"
        raise ConfigError(f"q must be in {rng}, got {q}")
    return q


def _check_k(k: float, c: int | None = None) -> float:
    k = float(k)
    if not 0.0 < k < 1.0:
        raise ConfigError(f"truncation threshold k must be in (0, 1), got {k}")
    if c is not None and k < 1.0 / c - 1e-12:
        raise ConfigError(f"k must be at least 1/c = {1.0 / c:.6g} for c = {c}, got {k}")
    return k


def check_row_stochastic(matrix: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"confusion/transition matrix must be square, got shape {m.shape}")
    if np.any(m < 0.0):
        raise ConfigError("matrix entries must be nonnegative")
    if np.any(np.abs(m.sum(axis=1) - 1.0) > tol):
        raise ConfigError(f"matrix rows must sum to 1 within {tol}")
    return m


def cce_loss(f: np.ndarray, label: int) -> float:
    """Cross entropy ``-log f_label`` with the probability floored at 1e-12."""
    f = np.asarray(f, dtype=np.float64)
    label = _check_label(label, f.shape[-1])
    return float(-np.log(max(f[label], PROB_FLOOR)))


def mae_loss(f: np.ndarray, label: int) -> float:
    """Mean absolute error against the one-hot target: ``2 - 2 f_label``."""
    f = np.asarray(f, dtype=np.float64)
    label = _check_label(label, f.shape[-1])
    return float(2.0 - 2.0 * f[label])


def lq_loss(q: float, f: np.ndarray, label: int) -> float:
    """Generalized cross entropy ``(1 - f_label^q)/q`` for q in (0, 1]."""
    q = _check_q(q, include_one=True)
    f = np.asarray(f, dtype=np.float64)
    label = _check_label(label, f.shape[-1])
    return float(lq_value(f[label], q))


def truncated_lq_loss(q: float, k: float, f: np.ndarray, label: int) -> float:
    """lq loss capped at its threshold value ``(1 - k^q)/q`` once ``f_label <= k``."""
    q = _check_q(q, include_one=False)
    f = np.asarray(f, dtype=np.float64)
    k = _check_k(k, f.shape[-1])
    label = _check_label(label, f.shape[-1])
    fy = f[label]
    if fy <= k:
        return float(lq_value(k, q))
    return float(lq_value(fy, q))


def forward_cce_loss(confusion: np.ndarray, f: np.ndarray, noisy_label: int) -> float:
    """Cross entropy of the noise-mixed prediction: ``-log sum_i T[i, y~] f_i``."""
    t = check_row_stochastic(confusion)
    f = np.asarray(f, dtype=np.float64)
    if t.shape[0] != f.shape[-1]:
        raise ConfigError(f"confusion matrix is {t.shape[0]}x{t.shape[0]} but f has {f.shape[-1]} classes")
    noisy_label = _check_label(noisy_label, f.shape[-1])
    mixed = float(t[:, noisy_label] @ f)
    return float(-np.log(max(mixed, PROB_FLOOR)))


@dataclass(frozen=True, eq=False)
class LossConfig:
    """Tagged choice of loss family.

    kind      one of LOSS_KINDS
    q         exponent for lq (q in (0,1]) / trunc_lq (q in (0,1))
    k         truncation threshold for trunc_lq, in (0,1); the >= 1/c part
              of its range is checked at evaluation time when c is known
    confusion row-stochastic c x c matrix, forward_cce only
    """

    kind: str
    q: float | None = None
    k: float | None = None
    confusion: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}, expected one of {LOSS_KINDS}")
        if self.kind == "lq":
            if self.q is None:
                raise ConfigError("lq loss requires q")
            _check_q(self.q, include_one=True)
        elif self.kind == "trunc_lq":
            if self.q is None or self.k is None:
                raise ConfigError("trunc_lq loss requires both q and k")
            _check_q(self.q, include_one=False)
            _check_k(self.k)
        elif self.kind == "forward_cce":
            if self.confusion is None:
                raise ConfigError("forward_cce loss requires a confusion matrix")
            object.__setattr__(self, "confusion", check_row_stochastic(self.confusion))
        if self.kind in ("cce", "mae", "forward_cce") and (self.q is not None or self.k is not None):
            raise ConfigError(f"loss kind {self.kind!r} takes no q/k parameters")

    def describe(self) -> str:
        if self.kind == "lq":
            return f"lq(q={self.q:g})"
        if self.kind == "trunc_lq":
            return f"trunc_lq(q={self.q:g},k={self.k:g})"
        return self.kind


def loss_value(config: LossConfig, f: np.ndarray, label: int) -> float:
    """Evaluate the configured loss at a single prediction."""
    if config.kind == "cce":
        return cce_loss(f, label)
    if config.kind == "mae":
        return mae_loss(f, label)
    if config.kind == "lq":
        return lq_loss(config.q, f, label)
    if config.kind == "trunc_lq":
        return truncated_lq_loss(config.q, config.k, f, label)
    return forward_cce_loss(config.confusion, f, label)


def loss_values(config: LossConfig, probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorized per-sample losses for an (n, c) probability matrix."""
    p = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = p.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise DataError("labels out of range")
    py = p[np.arange(n), labels]
    if config.kind == "cce":
        return -np.log(np.maximum(py, PROB_FLOOR))
    if config.kind == "mae":
        return 2.0 - 2.0 * py
    if config.kind == "lq":
        return lq_value(py, config.q)
    if config.kind == "trunc_lq":
        cap = lq_value(config.k, config.q)
        return np.where(py <= config.k, cap, lq_value(py, config.q))
    t = config.confusion
    if t.shape[0] != c:
        raise ConfigError("confusion matrix size does not match class count")
    mixed = np.einsum("ni,ni->n", p, t[:, labels].T)
    return -np.log(np.maximum(mixed, PROB_FLOOR))


def class_sum(config: LossConfig, f: np.ndarray) -> float:
    """Sum of the loss over every possible label for one prediction."""
    return float(class_sums(config, np.asarray(f, dtype=np.float64)[None, :])[0])


def loss_matrix(config: LossConfig, probs: np.ndarray) -> np.ndarray:
    """(n, c) matrix of losses: entry [i, j] is the loss of row i at label j."""
    p = np.asarray(probs, dtype=np.float64)
    c = p.shape[-1]
    if config.kind == "cce":
        return -np.log(np.maximum(p, PROB_FLOOR))
    if config.kind == "mae":
        return 2.0 - 2.0 * p
    if config.kind == "lq":
        return lq_value(p, config.q)
    if config.kind == "trunc_lq":
        _check_k(config.k, c)
        cap = lq_value(config.k, config.q)
        return np.where(p <= config.k, cap, lq_value(p, config.q))
    t = config.confusion
    if t.shape[0] != c:
        raise ConfigError("confusion matrix size does not match class count")
    return -np.log(np.maximum(p @ t, PROB_FLOOR))


def class_sums(config: LossConfig, probs: np.ndarray) -> np.ndarray:
    """Row-wise loss sums over all c labels for an (n, c) probability matrix."""
    return loss_matrix(config, probs).sum(axis=-1)


def loss_grad_wrt_probs(config: LossConfig, f: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the loss with respect to the probability vector.

    Sparse (nonzero only at the label index) for every kind except
    forward_cce. The truncated loss uses the flat-side subgradient at the
    kink, i.e. exactly zero whenever ``f_label <= k``.
    """
    f = np.asarray(f, dtype=np.float64)
    c = f.shape[-1]
    label = _check_label(label, c)
    g = np.zeros(c)
    fy = max(f[label], PROB_FLOOR)
    if config.kind == "cce":
        g[label] = -1.0 / fy
    elif config.kind == "mae":
        g[label] = -2.0
    elif config.kind == "lq":
        g[label] = -fy ** (config.q - 1.0)
    elif config.kind == "trunc_lq":
        if f[label] > config.k:
            g[label] = -fy ** (config.q - 1.0)
    else:
        t = config.confusion
        mixed = max(float(t[:, label] @ f), PROB_FLOOR)
        g = -t[:, label] / mixed
    return g


def loss_grad_wrt_logits(config: LossConfig, logits: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the loss with respect to pre-softmax logits.

    Uses the closed-form composition with the softmax Jacobian:
    cce -> f - e_y, mae -> 2 f_y (f - e_y), lq -> f_y^q (f - e_y),
    trunc_lq -> 0 at or below the threshold, forward_cce -> dense form.
    These stay bounded even when softmax saturates.
    """
    z = np.asarray(logits, dtype=np.float64)
    label = _check_label(label, z.shape[-1])
    return logit_grads(config, z[None, :], np.array([label]))[0]


def logit_grads(config: LossConfig, logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorized per-sample logit gradients for an (n, c) logit matrix."""
    z = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    p = softmax(z)
    n, c = p.shape
    if np.any(labels < 0) or np.any(labels >= c):
        raise DataError("labels out of range")
    rows = np.arange(n)
    resid = p.copy()
    resid[rows, labels] -= 1.0
    py = p[rows, labels]
    if config.kind == "cce":
        return resid
    if config.kind == "mae":
        return 2.0 * py[:, None] * resid
    if config.kind == "lq":
        return (py ** config.q)[:, None] * resid
    if config.kind == "trunc_lq":
        scale = np.where(py > config.k, py ** config.q, 0.0)
        return scale[:, None] * resid
    t = config.confusion
    if t.shape[0] != c:
        raise ConfigError("confusion matrix size does not match class count")
    t_cols = t[:, labels].T
    mixed = np.einsum("ni,ni->n", p, t_cols)
    safe = np.maximum(mixed, PROB_FLOOR)
    return p * (mixed[:, None] - t_cols) / safe[:, None]
