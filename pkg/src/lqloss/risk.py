"""Exact risk computations over lookup-table classifiers.

The noise-tolerance guarantees quantify over global risk minimizers, which
are unverifiable for neural networks. Here the hypothesis space is a
lookup table: one probability row per distinct input point, discretized
to a lattice on the simplex, so global minimizers of the clean and noisy
risks can be found by exhaustive search and the guarantees checked
numerically. All risks are exact expectations over the empirical sample
distribution and, for noisy risks, over the label-corruption distribution;
nothing is Monte Carlo.
"""

from dataclasses import dataclass, field, asdict
from functools import lru_cache

import numpy as np

from .bounds import class_noise_gap_bound, uniform_noise_gap_constants
from .errors import ConfigError, SizeError
from .losses import LossConfig, check_simplex, loss_matrix, loss_values, class_sums
from .noise import NoiseModel, build_transition_matrix

RISK_SLACK = 1e-9

ALLOWED_GRID_STEPS = (0.05, 0.1, 0.2)
MAX_DISTINCT_INPUTS = 8
MAX_CLASSES = 4


@dataclass
class RiskGapReport:
    """Risks of the clean- and noisy-risk minimizers with their gap bounds.

    ``noisy_gap_upper`` bounds ``risk_noisy_fstar - risk_noisy_fhat`` from
    above; ``clean_gap_lower`` (uniform noise only) bounds
    ``risk_clean_fstar - risk_clean_fhat`` from below. ``grid_slack`` is
    the reported loss resolution of the simplex lattice; the inequalities
    themselves are checked at 1e-9.
    """

    noise_kind: str
    risk_clean_fstar: float
    risk_clean_fhat: float
    risk_noisy_fstar: float
    risk_noisy_fhat: float
    noisy_gap_upper: float
    clean_gap_lower: float | None
    grid_slack: float
    ok: bool = True
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _as_instance(point_ids, labels, c):
    pids = np.asarray(point_ids, dtype=np.int64)
    labs = np.asarray(labels, dtype=np.int64)
    if pids.shape != labs.shape or pids.ndim != 1:
        raise ConfigError("point_ids and labels must be equal-length 1-d arrays")
    if np.any(labs < 0) or np.any(labs >= c):
        raise ConfigError("labels out of range")
    if np.any(pids < 0):
        raise ConfigError("point ids must be nonnegative")
    return pids, labs


def clean_risk(table: np.ndarray, point_ids, labels, config: LossConfig) -> float:
    """Mean loss of the table over the empirical (input, label) pairs."""
    table = check_simplex(table)
    pids, labs = _as_instance(point_ids, labels, table.shape[1])
    return float(loss_values(config, table[pids], labs).mean())


def noisy_risk(table: np.ndarray, point_ids, labels, config: LossConfig,
               transition: np.ndarray) -> float:
    """Exact expected loss when each label y is resampled from transition[y]."""
    table = check_simplex(table)
    c = table.shape[1]
    pids, labs = _as_instance(point_ids, labels, c)
    t = np.asarray(transition, dtype=np.float64)
    per_label = loss_matrix(config, table[pids])
    return float(np.einsum("nk,nk->n", per_label, t[labs]).mean())


def expected_class_sum(table: np.ndarray, point_ids, config: LossConfig) -> float:
    table = check_simplex(table)
    pids = np.asarray(point_ids, dtype=np.int64)
    return float(class_sums(config, table[pids]).mean())


def noisy_risk_identity_check(point_ids, labels, config: LossConfig, eta: float,
                              table: np.ndarray) -> float:
    """Residual of the uniform-noise risk decomposition.

    For uniform corruption at rate eta the noisy risk equals
    ``(1 - eta*c/(c-1)) * clean_risk + eta/(c-1) * E[class sum]`` exactly;
    returns the absolute difference of the two evaluations.
    """
    table = check_simplex(table)
    c = table.shape[1]
    t = build_transition_matrix(NoiseModel.uniform(eta), c)
    lhs = noisy_risk(table, point_ids, labels, config, t)
    rhs = ((1.0 - eta * c / (c - 1.0)) * clean_risk(table, point_ids, labels, config)
           + eta / (c - 1.0) * expected_class_sum(table, point_ids, config))
    return abs(lhs - rhs)


def _simplex_grid_key(c: int, step: float) -> int:
    levels = round(1.0 / step)
    if abs(levels * step - 1.0) > 1e-9:
        raise ConfigError(f"grid step {step} must divide 1 evenly")
    return levels


@lru_cache(maxsize=None)
def _simplex_grid_cached(c: int, levels: int) -> np.ndarray:
    rows = []

    def fill(prefix, remaining, slots):
        if slots == 1:
            rows.append(prefix + [remaining])
            return
        for v in range(remaining + 1):
            fill(prefix + [v], remaining - v, slots - 1)

    fill([], levels, c)
    grid = np.array(rows, dtype=np.float64) / levels
    grid.setflags(write=False)
    return grid


def simplex_grid(c: int, step: float) -> np.ndarray:
    """All lattice points of the c-simplex with coordinate resolution step.

    Rows are in lexicographic order of their coordinates, which fixes the
    tie-break of the exhaustive minimizers (argmin keeps the first row).
    """
    return _simplex_grid_cached(int(c), _simplex_grid_key(c, step))


def _check_instance_size(n_distinct: int, c: int, grid_step: float):
    if float(grid_step) not in ALLOWED_GRID_STEPS:
        raise ConfigError(f"grid step must be one of {ALLOWED_GRID_STEPS}, got {grid_step}")
    if n_distinct > MAX_DISTINCT_INPUTS:
        raise SizeError(f"at most {MAX_DISTINCT_INPUTS} distinct inputs supported, got {n_distinct}")
    if c > MAX_CLASSES:
        raise SizeError(f"at most {MAX_CLASSES} classes supported, got {c}")


def brute_force_risk_minimizer(point_ids, labels, c: int, config: LossConfig,
                               transition: np.ndarray | None = None,
                               grid_step: float = 0.05) -> np.ndarray:
    """Exhaustive global minimizer of the (noisy) risk over grid tables.

    The risk decomposes per distinct input, so each table row is chosen
    independently: row j minimizes ``sum_k w_k * loss(g, k)`` over grid
    points g, where w accumulates one-hot label counts (clean risk) or
    transition rows (exact noisy risk) of the samples at input j.
    """
    pids, labs = _as_instance(point_ids, labels, c)
    n_distinct = int(pids.max()) + 1
    _check_instance_size(n_distinct, c, grid_step)
    grid = simplex_grid(c, grid_step)
    per_label = loss_matrix(config, grid)  # (G, c)
    weights = np.zeros((n_distinct, c))
    if transition is None:
        np.add.at(weights, (pids, labs), 1.0)
    else:
        t = np.asarray(transition, dtype=np.float64)
        np.add.at(weights, pids, t[labs])
    best = np.argmin(per_label @ weights.T, axis=0)  # first minimum: lexicographic tie-break
    return grid[best].copy()


def verify_risk_gap(point_ids, labels, c: int, config: LossConfig,
                    noise: NoiseModel, grid_step: float = 0.05) -> RiskGapReport:
    """Locate both global minimizers and check the risk-gap bounds.

    For uniform noise checks ``0 <= R_noisy(f*) - R_noisy(f^) <= A`` and
    ``A' <= R_clean(f*) - R_clean(f^) <= 0``; for class-dependent noise
    checks the noisy-risk gap against the zero-clean-risk bound B, whose
    hypotheses (diagonally dominant transition, exactly attainable zero
    clean risk) are verified and reported rather than assumed.
    """
    if config.kind != "lq":
        raise ConfigError("risk-gap verification is defined for the lq loss family")
    if noise.kind not in ("uniform", "class_dependent"):
        raise ConfigError(f"risk-gap verification needs closed-set noise, got {noise.kind!r}")
    pids, labs = _as_instance(point_ids, labels, c)
    t = build_transition_matrix(noise, c)
    f_star = brute_force_risk_minimizer(pids, labs, c, config, None, grid_step)
    f_hat = brute_force_risk_minimizer(pids, labs, c, config, t, grid_step)

    r_clean_star = clean_risk(f_star, pids, labs, config)
    r_clean_hat = clean_risk(f_hat, pids, labs, config)
    r_noisy_star = noisy_risk(f_star, pids, labs, config, t)
    r_noisy_hat = noisy_risk(f_hat, pids, labs, config, t)

    failures = []
    if noise.kind == "uniform":
        noisy_gap_upper, clean_gap_lower = uniform_noise_gap_constants(c, config.q, noise.eta)
    else:
        retention = np.diag(t).copy()
        off = t.copy()
        np.fill_diagonal(off, -np.inf)
        if np.any(off >= retention[:, None]):
            failures.append("transition not diagonally dominant: some off-diagonal entry >= retention")
        marginals = np.bincount(labs, minlength=c) / labs.size
        noisy_gap_upper = class_noise_gap_bound(c, config.q, retention, marginals)
        clean_gap_lower = None
        if r_clean_star > 1e-12:
            failures.append(f"zero clean risk not attained by f*: R(f*) = {r_clean_star:.3e}")

    noisy_gap = r_noisy_star - r_noisy_hat
    if not -RISK_SLACK <= noisy_gap <= noisy_gap_upper + RISK_SLACK:
        failures.append(f"noisy-risk gap {noisy_gap:.6e} outside [0, {noisy_gap_upper:.6e}]")
    if noise.kind == "uniform":
        clean_gap = r_clean_star - r_clean_hat
        if not clean_gap_lower - RISK_SLACK <= clean_gap <= RISK_SLACK:
            failures.append(f"clean-risk gap {clean_gap:.6e} outside [{clean_gap_lower:.6e}, 0]")

    levels = _simplex_grid_key(c, grid_step)
    grid_slack = (1.0 / levels) ** config.q / config.q
    return RiskGapReport(
        noise_kind=noise.kind,
        risk_clean_fstar=r_clean_star,
        risk_clean_fhat=r_clean_hat,
        risk_noisy_fstar=r_noisy_star,
        risk_noisy_fhat=r_noisy_hat,
        noisy_gap_upper=noisy_gap_upper,
        clean_gap_lower=clean_gap_lower,
        grid_slack=grid_slack,
        ok=not failures,
        failures=failures,
    )
