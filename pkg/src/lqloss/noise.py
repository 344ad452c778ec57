"""Label-noise models and dataset corruption.

Supports uniform flips, class-dependent flips through an explicit
transition matrix (with pair-flip and circular presets), and open-set
corruption where features themselves are replaced by out-of-distribution
draws. Corruption is i.i.d. per sample given the true label and fully
deterministic for a fixed seed; clean labels are carried along for
evaluation only.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset, NoisyDataset
from .errors import ConfigError
from .losses import check_row_stochastic


@dataclass(frozen=True)
class OutlierSpec:
    """Out-of-set feature generator: a Gaussian mixture displaced from the data.

    Component means sit at least ``margin`` away from every in-set class
    mean; each draw adds isotropic noise with the given scale.
    """

    margin: float = 6.0
    components: int = 3
    scale: float = 1.0

    def __post_init__(self):
        if self.margin <= 0 or self.scale <= 0 or self.components < 1:
            raise ConfigError("outlier spec needs positive margin/scale and >= 1 component")


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Corruption specification: uniform, class_dependent, or open_set."""

    kind: str
    eta: float = 0.0
    transition: np.ndarray | None = None
    outlier: OutlierSpec | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "class_dependent", "open_set"):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.eta < 1.0:
            raise ConfigError(f"eta must be in [0, 1), got {self.eta}")
        if self.kind == "class_dependent":
            if self.transition is None:
                raise ConfigError("class_dependent noise requires a transition matrix")
            object.__setattr__(self, "transition", check_row_stochastic(self.transition))
        elif self.transition is not None:
            raise ConfigError(f"{self.kind} noise takes no transition matrix")
        if self.kind == "open_set" and self.outlier is None:
            object.__setattr__(self, "outlier", OutlierSpec())

    @classmethod
    def uniform(cls, eta: float) -> "NoiseModel":
        return cls(kind="uniform", eta=eta)

    @classmethod
    def class_dependent(cls, transition: np.ndarray, eta: float = 0.0) -> "NoiseModel":
        return cls(kind="class_dependent", eta=eta, transition=transition)

    @classmethod
    def open_set(cls, fraction: float, outlier: OutlierSpec | None = None) -> "NoiseModel":
        return cls(kind="open_set", eta=fraction, outlier=outlier)

    def diagonally_dominant(self, c: int) -> bool:
        """True when every off-diagonal flip probability is below its row's retention."""
        t = build_transition_matrix(self, c)
        off = t.copy()
        np.fill_diagonal(off, -np.inf)
        return bool(np.all(off < np.diag(t)[:, None]))


def build_transition_matrix(model: NoiseModel, c: int) -> np.ndarray:
    """Materialize the c x c label transition matrix of a closed-set model.

    Uniform noise at rate eta above 1 - 1/c is outside the tolerance
    guarantee's hypothesis; it is flagged with a warning but still built
    so such regimes remain runnable.
    """
    if c < 2:
        raise ConfigError("need at least 2 classes")
    if model.kind == "open_set":
        raise ConfigError("open-set noise has no closed-set transition matrix")
    if model.kind == "uniform":
        if model.eta > 1.0 - 1.0 / c + 1e-12:
            warnings.warn(f"uniform noise rate {model.eta} exceeds 1 - 1/c = {1 - 1 / c:.4g}; "
                          "outside the noise-tolerance hypothesis", stacklevel=2)
        t = np.full((c, c), model.eta / (c - 1.0))
        np.fill_diagonal(t, 1.0 - model.eta)
        return t
    if model.transition.shape[0] != c:
        raise ConfigError(f"transition matrix is {model.transition.shape[0]}x"
                          f"{model.transition.shape[0]} but c={c}")
    return model.transition.copy()


def preset_pair_flip(pairs, eta: float, c: int) -> NoiseModel:
    """Class-dependent model flipping mapped source classes to their targets.

    ``pairs`` is a list of ``(source, target)`` or ``(source, target,
    symmetric)`` tuples; a symmetric pair flips both directions. Each
    mapped source row keeps its label with probability 1 - eta and flips
    to the target with probability eta; unmapped classes keep identity
    rows. Duplicate sources are rejected.
    """
    if not 0.0 <= eta < 1.0:
        raise ConfigError(f"eta must be in [0, 1), got {eta}")
    t = np.eye(c)
    seen = set()
    expanded = []
    for pair in pairs:
        if len(pair) == 2:
            s, tgt, sym = pair[0], pair[1], False
        else:
            s, tgt, sym = pair
        expanded.append((int(s), int(tgt)))
        if sym:
            expanded.append((int(tgt), int(s)))
    for s, tgt in expanded:
        if not (0 <= s < c and 0 <= tgt < c):
            raise ConfigError(f"pair ({s}, {tgt}) out of range for c={c}")
        if s == tgt:
            raise ConfigError(f"pair source and target coincide: {s}")
        if s in seen:
            raise ConfigError(f"duplicate source class {s} in pair-flip preset")
        seen.add(s)
        t[s, s] = 1.0 - eta
        t[s, tgt] = eta
    return NoiseModel.class_dependent(t, eta=eta)


def preset_circular_flip(eta: float, c: int) -> NoiseModel:
    """Class-dependent model flipping each class into the next, modulo c."""
    if not 0.0 <= eta < 1.0:
        raise ConfigError(f"eta must be in [0, 1), got {eta}")
    t = np.eye(c) * (1.0 - eta)
    for i in range(c):
        t[i, (i + 1) % c] += eta
    return NoiseModel.class_dependent(t, eta=eta)


def inject_noise(dataset: Dataset, model: NoiseModel, seed: int) -> NoisyDataset:
    """Resample each label independently from its transition row.

    Features are never touched; clean labels are retained in the
    bookkeeping fields. Bit-identical across runs for the same seed.
    """
    if model.kind == "open_set":
        raise ConfigError("use inject_open_set for open-set noise")
    c = dataset.num_classes
    t = build_transition_matrix(model, c)
    rng = np.random.default_rng(seed)
    u = rng.random(dataset.n)
    cum = np.cumsum(t, axis=1)[dataset.labels]
    noisy = (u[:, None] > cum).sum(axis=1).astype(np.int64)
    return NoisyDataset(
        features=dataset.features.copy(),
        noisy_labels=noisy,
        clean_labels=dataset.labels.copy(),
        corrupted=noisy != dataset.labels,
        open_set_flags=np.zeros(dataset.n, dtype=bool),
        num_classes=c,
    )


def _outlier_means(rng: np.random.Generator, class_means: np.ndarray,
                   spec: OutlierSpec) -> np.ndarray:
    d = class_means.shape[1]
    center = class_means.mean(axis=0)
    radius = np.linalg.norm(class_means - center, axis=1).max() + spec.margin
    means = np.empty((spec.components, d))
    for i in range(spec.components):
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        means[i] = center + direction * (radius + spec.margin * rng.random())
    return means


def inject_open_set(dataset: Dataset, fraction: float,
                    outlier: OutlierSpec | None = None, seed: int = 0) -> NoisyDataset:
    """Replace a fraction of rows with out-of-set features and random labels.

    Exactly ``ceil(fraction * n)`` rows are flagged: their features are
    redrawn from the outlier mixture (displaced from every class mean)
    and their labels overwritten by uniform-random in-set labels. The
    corrupted flag is set on every flagged row since the true class is
    outside the label set.
    """
    if not 0.0 <= fraction < 1.0:
        raise ConfigError(f"open-set fraction must be in [0, 1), got {fraction}")
    spec = outlier or OutlierSpec()
    n, c = dataset.n, dataset.num_classes
    rng = np.random.default_rng(seed)
    features = dataset.features.copy()
    noisy = dataset.labels.copy()
    flags = np.zeros(n, dtype=bool)
    n_out = int(np.ceil(fraction * n))
    if n_out:
        idx = rng.choice(n, size=n_out, replace=False)
        flags[idx] = True
        present = [j for j in range(c) if np.any(dataset.labels == j)]
        class_means = np.stack([dataset.features[dataset.labels == j].mean(axis=0)
                                for j in present])
        means = _outlier_means(rng, class_means, spec)
        comp = rng.integers(0, spec.components, size=n_out)
        features[idx] = means[comp] + spec.scale * rng.standard_normal((n_out, dataset.dim))
        noisy[idx] = rng.integers(0, c, size=n_out)
    corrupted = noisy != dataset.labels
    corrupted[flags] = True
    return NoisyDataset(features=features, noisy_labels=noisy,
                        clean_labels=dataset.labels.copy(), corrupted=corrupted,
                        open_set_flags=flags, num_classes=c)
