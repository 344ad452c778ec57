"""Dataset containers, synthetic Gaussian blobs, and CSV serialization.

CSV layout: header ``f0,...,f{d-1},label`` for clean data; corrupted
datasets append ``noisy_label,clean_label,corrupted,open_set`` columns.
UTF-8, LF line endings, floats written with full round-trip precision.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

BOOKKEEPING_COLUMNS = ("noisy_label", "clean_label", "corrupted", "open_set")


@dataclass
class Dataset:
    """Clean labeled set: (n, d) float64 features, (n,) integer labels."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-d, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("labels length must match feature rows")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if self.num_classes < 1:
            raise DataError("num_classes must be positive")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError("labels out of range for num_classes")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass
class NoisyDataset:
    """Corrupted set with ground-truth bookkeeping.

    ``corrupted[i]`` equals ``noisy_labels[i] != clean_labels[i]`` for every
    closed-set row; ``open_set_flags[i]`` marks rows whose features were
    replaced by out-of-distribution draws (their labels are arbitrary
    in-set labels, so the corrupted flag is set unconditionally there).
    Training consumers must read ``noisy_labels`` only; clean labels exist
    for evaluation.
    """

    features: np.ndarray
    noisy_labels: np.ndarray
    clean_labels: np.ndarray
    corrupted: np.ndarray
    open_set_flags: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.noisy_labels = np.asarray(self.noisy_labels, dtype=np.int64)
        self.clean_labels = np.asarray(self.clean_labels, dtype=np.int64)
        self.corrupted = np.asarray(self.corrupted, dtype=bool)
        self.open_set_flags = np.asarray(self.open_set_flags, dtype=bool)
        n = self.features.shape[0]
        for name in ("noisy_labels", "clean_labels", "corrupted", "open_set_flags"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"{name} must have length {n}")
        closed = ~self.open_set_flags
        if not np.array_equal(self.corrupted[closed],
                              self.noisy_labels[closed] != self.clean_labels[closed]):
            raise DataError("corrupted flags inconsistent with label pair on closed-set rows")
        for labs in (self.noisy_labels, self.clean_labels):
            if labs.size and (labs.min() < 0 or labs.max() >= self.num_classes):
                raise DataError("labels out of range for num_classes")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "NoisyDataset":
        return NoisyDataset(self.features[idx], self.noisy_labels[idx],
                            self.clean_labels[idx], self.corrupted[idx],
                            self.open_set_flags[idx], self.num_classes)

    @classmethod
    def pristine(cls, ds: Dataset) -> "NoisyDataset":
        n = ds.n
        return cls(ds.features.copy(), ds.labels.copy(), ds.labels.copy(),
                   np.zeros(n, dtype=bool), np.zeros(n, dtype=bool), ds.num_classes)


@dataclass
class ExperimentData:
    """Train/validation/test splits; only the test split is never corrupted."""

    train: NoisyDataset
    val: NoisyDataset
    test: Dataset


def _place_means(rng: np.random.Generator, c: int, d: int, separation: float) -> np.ndarray:
    # box wide enough that c points at pairwise distance >= separation fit comfortably
    half = separation * max(1.0, 0.75 * c ** (1.0 / d))
    means = np.empty((c, d))
    for i in range(c):
        for _ in range(2000):
            cand = rng.uniform(-half, half, size=d)
            if i == 0 or np.linalg.norm(means[:i] - cand, axis=1).min() >= separation:
                means[i] = cand
                break
        else:
            raise ConfigError(
                f"could not place {c} cluster means at separation {separation} in {d} dimensions")
    return means


def synth_blobs(n: int, d: int, c: int, separation: float, seed: int) -> Dataset:
    """Balanced c-class Gaussian blobs with unit covariance.

    Cluster means are rejection-sampled to keep pairwise distances at
    least ``separation``. Deterministic for a fixed seed; class counts
    differ by at most one when c does not divide n.
    """
    if n < c:
        raise ConfigError(f"need at least one sample per class: n={n} < c={c}")
    if separation <= 0:
        raise ConfigError("separation must be positive")
    rng = np.random.default_rng(seed)
    means = _place_means(rng, c, d, separation)
    counts = np.full(c, n // c)
    counts[: n % c] += 1
    labels = np.repeat(np.arange(c), counts)
    features = means[labels] + rng.standard_normal((n, d))
    order = rng.permutation(n)
    return Dataset(features[order], labels[order], c)


def split_indices(n: int, test_fraction: float, validation_fraction: float,
                  seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic (train, val, test) index split.

    The test block is carved out first; the validation fraction then
    applies to the remaining pool.
    """
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError("test_fraction must be in [0, 1)")
    if not 0.0 < validation_fraction <= 0.5:
        raise ConfigError("validation_fraction must be in (0, 0.5]")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(test_fraction * n))
    n_val = int(round(validation_fraction * (n - n_test)))
    test = perm[:n_test]
    val = perm[n_test:n_test + n_val]
    train = perm[n_test + n_val:]
    if train.size == 0 or val.size == 0:
        raise ConfigError("split leaves an empty train or validation set")
    return train, val, test


def _format_float(x: float) -> str:
    return repr(float(x))


def save_csv(path, data) -> None:
    """Write a Dataset or NoisyDataset in the package CSV format."""
    noisy = isinstance(data, NoisyDataset)
    d = data.dim
    header = [f"f{j}" for j in range(d)] + ["label"]
    if noisy:
        header += list(BOOKKEEPING_COLUMNS)
    lines = [",".join(header)]
    for i in range(data.n):
        row = [_format_float(v) for v in data.features[i]]
        if noisy:
            row.append(str(int(data.noisy_labels[i])))
            row += [str(int(data.noisy_labels[i])), str(int(data.clean_labels[i])),
                    str(int(data.corrupted[i])), str(int(data.open_set_flags[i]))]
        else:
            row.append(str(int(data.labels[i])))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_int(text: str, line_no: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataError(f"line {line_no}: column {column!r} is not an integer: {text!r}") from None


def load_csv(path):
    """Parse the package CSV format; returns Dataset or NoisyDataset.

    Raises DataError naming the offending line for malformed rows,
    non-finite feature values, or out-of-range labels.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = lines[0].split(",")
    d = 0
    while d < len(header) and header[d] == f"f{d}":
        d += 1
    if d == 0 or len(header) < d + 1 or header[d] != "label":
        raise DataError(f"{path}: header must be f0,...,f{{d-1}},label[,bookkeeping]")
    rest = tuple(header[d + 1:])
    if rest not in ((), BOOKKEEPING_COLUMNS):
        raise DataError(f"{path}: unexpected columns {rest}; bookkeeping columns must be "
                        f"exactly {BOOKKEEPING_COLUMNS}")
    noisy = bool(rest)
    width = len(header)

    feats, labels, extras = [], [], []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            raise DataError(f"line {line_no}: blank row")
        cells = line.split(",")
        if len(cells) != width:
            raise DataError(f"line {line_no}: expected {width} columns, got {len(cells)}")
        try:
            row = [float(v) for v in cells[:d]]
        except ValueError:
            raise DataError(f"line {line_no}: malformed feature value") from None
        if not all(math.isfinite(v) for v in row):
            raise DataError(f"line {line_no}: non-finite feature value")
        feats.append(row)
        labels.append(_parse_int(cells[d], line_no, "label"))
        if noisy:
            extras.append([_parse_int(cells[d + 1 + j], line_no, BOOKKEEPING_COLUMNS[j])
                           for j in range(4)])
    if not feats:
        raise DataError(f"{path}: no data rows")

    features = np.array(feats)
    labels = np.array(labels, dtype=np.int64)
    if labels.min() < 0:
        raise DataError("negative label found")
    if not noisy:
        return Dataset(features, labels, int(labels.max()) + 1)

    extras = np.array(extras, dtype=np.int64)
    if np.any(labels != extras[:, 0]):
        bad = int(np.argmax(labels != extras[:, 0])) + 2
        raise DataError(f"line {bad}: label and noisy_label columns disagree")
    c = int(max(labels.max(), extras[:, 1].max())) + 1
    return NoisyDataset(features, extras[:, 0], extras[:, 1],
                        extras[:, 2].astype(bool), extras[:, 3].astype(bool), c)
