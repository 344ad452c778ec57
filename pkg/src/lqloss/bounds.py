"""Closed-form class-sum bounds and risk-gap constants, plus sampling checks.

The generalized loss admits closed-form bounds on the sum of the loss
over all c labels; those bounds drive the noise-tolerance constants for
uniform and class-dependent corruption. This module evaluates every such
constant and verifies the bands empirically on seeded Dirichlet(1) draws
from the simplex.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError
from .losses import LossConfig, class_sums, lq_value

BOUND_SLACK = 1e-9


@dataclass
class BoundReport:
    """Observed class-sum range versus a reference band."""

    lower: float
    upper: float
    witness_min: float
    witness_max: float
    samples: int
    violated: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _check_cq(c: int, q: float, include_one: bool) -> tuple[int, float]:
    c = int(c)
    if c < 2:
        raise ConfigError(f"class count must be >= 2, got {c}")
    hi_ok = q <= 1.0 if include_one else q < 1.0
    if not (q > 0.0 and hi_ok):
        rng = "(0, 1]" if include_one else "(0, 1)"
        raise ConfigError(f"q must be in {rng}, got {q}")
    return c, float(q)


def lq_class_sum_bounds(c: int, q: float) -> tuple[float, float]:
    """Band containing the all-label lq-loss sum for any simplex point.

    Lower bound ``(c - c^(1-q))/q`` is attained at the uniform vector,
    upper bound ``(c-1)/q`` at the simplex vertices. At q = 1 the two
    coincide: the sum is the constant c - 1.
    """
    c, q = _check_cq(c, q, include_one=True)
    return (c - c ** (1.0 - q)) / q, (c - 1.0) / q


def trunc_class_sum_bounds(c: int, q: float, k: float) -> tuple[float, float, float]:
    """Band for the truncated-loss class sum, with the interior constant.

    Returns ``(lower, upper, d_tilde)`` where
    ``d_tilde = max(1, (1-q)^(1/q) / k)``,
    ``lower = d_tilde * Lq(1/d_tilde) + (c - d_tilde) * Lq(k)`` and
    ``upper = c * Lq(k)``. Requires ``1/c <= k < 1`` and q in (0, 1).
    """
    c, q = _check_cq(c, q, include_one=False)
    k = float(k)
    if not 1.0 / c - 1e-12 <= k < 1.0:
        raise ConfigError(f"k must satisfy 1/c <= k < 1, got k={k} for c={c}")
    d_tilde = max(1.0, (1.0 - q) ** (1.0 / q) / k)
    cap = float(lq_value(k, q))
    lower = d_tilde * float(lq_value(1.0 / d_tilde, q)) + (c - d_tilde) * cap
    upper = c * cap
    return lower, upper, d_tilde


def tightness_condition(c: int, q: float, k: float) -> bool:
    """Whether truncation at k tightens the class-sum band at (c, q).

    Compares the truncated band width ``d*(Lq(k) - Lq(1/d))`` with
    ``d = max(1, (1-q)^(1/q)/k)`` against the plain-loss lower constant
    ``(c - c^(1-q))/q``. Under this comparison the condition holds for
    every k >= 0.3 at all c >= 2 and q in (0, 1), and for every k >= 0.2
    once c >= 10; it genuinely fails for k = 0.2 at c = 2.
    """
    c, q = _check_cq(c, q, include_one=False)
    k = float(k)
    if not 0.0 < k < 1.0:
        raise ConfigError(f"k must be in (0, 1), got {k}")
    d = max(1.0, (1.0 - q) ** (1.0 / q) / k)
    trunc_width = d * float(lq_value(k, q) - lq_value(1.0 / d, q))
    return trunc_width < (c - c ** (1.0 - q)) / q


def sample_simplex(rng: np.random.Generator, n: int, c: int) -> np.ndarray:
    """n uniform draws from the c-simplex (symmetric Dirichlet with unit alpha)."""
    return rng.dirichlet(np.ones(c), size=n)


def symmetry_check(config: LossConfig, c: int, trials: int, seed: int) -> BoundReport:
    """Sample class sums and compare against the loss family's reference band.

    mae uses the exact constant 2(c-1); lq and trunc_lq use their
    closed-form bands. cce and forward_cce have no constant class sum, so
    the band degenerates to the smallest observed value and any spread
    beyond the slack marks the report as violated.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    sums = class_sums(config, sample_simplex(rng, int(trials), c))
    w_min, w_max = float(sums.min()), float(sums.max())
    if config.kind == "mae":
        lower = upper = 2.0 * c - 2.0
    elif config.kind == "lq":
        lower, upper = lq_class_sum_bounds(c, config.q)
    elif config.kind == "trunc_lq":
        lower, upper, _ = trunc_class_sum_bounds(c, config.q, config.k)
    else:
        lower = upper = w_min
    violated = w_min < lower - BOUND_SLACK or w_max > upper + BOUND_SLACK
    return BoundReport(lower=lower, upper=upper, witness_min=w_min,
                       witness_max=w_max, samples=int(trials), violated=violated)


def uniform_noise_gap_constants(c: int, q: float, eta: float) -> tuple[float, float]:
    """Risk-gap constants for uniform label noise at rate eta.

    Returns ``(noisy_gap_upper, clean_gap_lower)``: the noisy-risk gap
    between the clean-risk minimizer and the noisy-risk minimizer lies in
    [0, noisy_gap_upper], and the clean-risk gap in [clean_gap_lower, 0].
    Requires ``eta <= 1 - 1/c``; at exact equality the clean-gap constant
    degenerates to -inf (the bound is vacuous there). Both are 0 at q = 1
    or eta = 0.
    """
    c, q = _check_cq(c, q, include_one=True)
    eta = float(eta)
    if eta < 0.0 or eta > 1.0 - 1.0 / c + 1e-12:
        raise ConfigError(f"uniform noise rate must satisfy 0 <= eta <= 1 - 1/c, got eta={eta}, c={c}")
    width = (c ** (1.0 - q) - 1.0) / q
    noisy_gap = eta * width / (c - 1.0)
    num = -eta * width
    den = c - 1.0 - eta * c
    if num == 0.0:
        clean_gap = 0.0
    elif den <= 0.0:
        clean_gap = -np.inf
    else:
        clean_gap = num / den
    return noisy_gap, clean_gap


def class_noise_gap_bound(c: int, q: float, retention: np.ndarray,
                          class_marginals: np.ndarray) -> float:
    """Noisy-risk gap bound for class-dependent noise, zero-clean-risk case.

    ``retention[i]`` is the probability that a class-i label survives
    uncorrupted; ``class_marginals`` is the label distribution. Returns
    ``((c^(1-q) - 1)/q) * sum_i marginals[i] * retention[i]``, which is
    >= 0 and exactly 0 at q = 1.
    """
    c, q = _check_cq(c, q, include_one=True)
    r = np.asarray(retention, dtype=np.float64)
    m = np.asarray(class_marginals, dtype=np.float64)
    if r.shape != (c,) or m.shape != (c,):
        raise ConfigError(f"retention and marginals must both have length c={c}")
    if np.any(r <= 0.0) or np.any(r > 1.0):
        raise ConfigError("retention entries must lie in (0, 1]")
    if np.any(m < 0.0) or abs(m.sum() - 1.0) > 1e-9:
        raise ConfigError("class marginals must form a distribution")
    return (c ** (1.0 - q) - 1.0) / q * float(m @ r)
