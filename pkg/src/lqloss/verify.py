"""Numerical verification suite for every closed-form guarantee.

Each check is an independent, seeded computation that reports its
parameters, bounds, witnesses, and a pass flag as a JSON-ready dict.
Selector tokens (``lemma1`` .. ``eq12-13``) are stable interface strings
used by the CLI; the registry at the bottom maps them to checks.
"""

import os
import time

import numpy as np

from . import bounds as bnd
from .errors import ConfigError
from .experiment import atomic_write_json, derive_rng
from .losses import (LossConfig, loss_values, lq_value, softmax, class_sums,
                     loss_grad_wrt_logits)
from .noise import NoiseModel
from .pruning import pruning_step, truncated_objective_value
from .risk import noisy_risk_identity_check, verify_risk_gap
from .train import grad_check, init_classifier, forward
from .data import NoisyDataset

DEFAULT_SEED = 20240913


def check_lq_cce_limit(seed: int = DEFAULT_SEED, trials: int = 100_000) -> dict:
    """Small-exponent limit: the lq curve converges to -log f."""
    f = np.linspace(0.01, 1.0, 1000)
    err = np.abs(lq_value(f, 1e-6) - (-np.log(f)))
    max_err = float(err.max())
    return {"check": "lemma1", "params": {"q": 1e-6, "grid": [0.01, 1.0, 1000]},
            "max_abs_error": max_err, "tolerance": 1e-4, "passed": max_err < 1e-4}


LEMMA2_C_GRID = (2, 10, 100)
LEMMA2_Q_GRID = (0.1, 0.5, 0.7, 1.0)
LEMMA3_Q_GRID = (0.1, 0.5, 0.7)
LEMMA3_K_CHOICES = (None, 0.3, 0.5)  # None means k = 1/c
WITNESS_TOL = 1e-6


def check_lq_class_sum_band(seed: int = DEFAULT_SEED, trials: int = 100_000) -> dict:
    """Class-sum band for the plain lq loss on Dirichlet draws plus witnesses.

    The uniform vector must sit on the lower bound and a one-hot vertex on
    the upper bound, both within 1e-6; sampled sums must stay inside the
    band at 1e-9 slack.
    """
    cells = []
    passed = True
    for c in LEMMA2_C_GRID:
        rng = derive_rng(seed, "lemma2", c)
        samples = bnd.sample_simplex(rng, trials, c)
        uniform = np.full((1, c), 1.0 / c)
        onehot = np.zeros((1, c))
        onehot[0, 0] = 1.0
        for q in LEMMA2_Q_GRID:
            lower, upper = bnd.lq_class_sum_bounds(c, q)
            config = LossConfig("lq", q=q)
            sums = class_sums(config, samples)
            w_min, w_max = float(sums.min()), float(sums.max())
            low_gap = float(class_sums(config, uniform)[0] - lower)
            up_gap = float(upper - class_sums(config, onehot)[0])
            violations = int(np.count_nonzero((sums < lower - bnd.BOUND_SLACK)
                                              | (sums > upper + bnd.BOUND_SLACK)))
            ok = (violations == 0 and abs(low_gap) < WITNESS_TOL and abs(up_gap) < WITNESS_TOL)
            passed &= ok
            cells.append({"c": c, "q": q, "lower": lower, "upper": upper,
                          "witness_min": w_min, "witness_max": w_max,
                          "lower_witness_gap": low_gap, "upper_witness_gap": up_gap,
                          "violations": violations, "passed": ok})
    return {"check": "lemma2", "params": {"trials": trials, "c_grid": LEMMA2_C_GRID,
                                          "q_grid": LEMMA2_Q_GRID},
            "cells": cells, "passed": passed}


def check_trunc_class_sum_band(seed: int = DEFAULT_SEED, trials: int = 100_000) -> dict:
    """Class-sum band for the truncated loss.

    The upper bound is witnessed exactly by any vector with all entries at
    or below k (the uniform vector qualifies whenever k >= 1/c); the lower
    bound is additionally witnessed by a one-hot vertex at grid points
    where the interior constant d~ equals 1, the only case where the
    continuous-relaxation bound is attainable.
    """
    cells = []
    passed = True
    for c in LEMMA2_C_GRID:
        rng = derive_rng(seed, "lemma3", c)
        samples = bnd.sample_simplex(rng, trials, c)
        uniform = np.full((1, c), 1.0 / c)
        onehot = np.zeros((1, c))
        onehot[0, 0] = 1.0
        ks = sorted({1.0 / c if k is None else k for k in LEMMA3_K_CHOICES
                     if k is None or k >= 1.0 / c})
        for q in LEMMA3_Q_GRID:
            for k in ks:
                lower, upper, d_tilde = bnd.trunc_class_sum_bounds(c, q, k)
                config = LossConfig("trunc_lq", q=q, k=k)
                sums = class_sums(config, samples)
                violations = int(np.count_nonzero((sums < lower - bnd.BOUND_SLACK)
                                                  | (sums > upper + bnd.BOUND_SLACK)))
                up_gap = float(upper - class_sums(config, uniform)[0])
                cell = {"c": c, "q": q, "k": k, "lower": lower, "upper": upper,
                        "d_tilde": d_tilde, "witness_min": float(sums.min()),
                        "witness_max": float(sums.max()), "violations": violations,
                        "upper_witness_gap": up_gap}
                ok = violations == 0 and abs(up_gap) < WITNESS_TOL
                if d_tilde == 1.0:
                    low_gap = float(class_sums(config, onehot)[0] - lower)
                    cell["lower_witness_gap"] = low_gap
                    ok &= abs(low_gap) < WITNESS_TOL
                cell["passed"] = ok
                passed &= ok
                cells.append(cell)
    return {"check": "lemma3", "params": {"trials": trials, "c_grid": LEMMA2_C_GRID,
                                          "q_grid": LEMMA3_Q_GRID, "k_choices": ["1/c", 0.3, 0.5]},
            "cells": cells, "passed": passed}


def check_tightening_region(seed: int = DEFAULT_SEED, trials: int = 0) -> dict:
    """Documented satisfaction region of the truncation-tightening condition.

    Must hold on the whole grid for k >= 0.3 (all q, c in 2..100) and for
    k in {0.2, 0.25} once c >= 10.
    """
    q_grid = [round(q, 2) for q in np.arange(0.05, 1.0, 0.05)]
    k_high = [round(k, 2) for k in np.arange(0.30, 1.0, 0.05)]
    k_low = [0.20, 0.25]
    fail_high = [(c, q, k) for k in k_high for q in q_grid for c in range(2, 101)
                 if not bnd.tightness_condition(c, q, k)]
    fail_low = [(c, q, k) for k in k_low for q in q_grid for c in range(10, 101)
                if not bnd.tightness_condition(c, q, k)]
    passed = not fail_high and not fail_low
    return {"check": "eq11",
            "params": {"q_grid": q_grid, "k_high": k_high, "k_low": k_low,
                       "c_range": [2, 100], "c_low_range": [10, 100]},
            "violations_high_k": fail_high[:20], "violations_low_k": fail_low[:20],
            "n_violations": len(fail_high) + len(fail_low), "passed": passed}


def check_symmetry(seed: int = DEFAULT_SEED, trials: int = 10_000) -> dict:
    """Constant class sum for mae; bounded bands for lq/trunc; cce unbounded."""
    c = 10
    mae = bnd.symmetry_check(LossConfig("mae"), c, trials, derive_rng(seed, "sym-mae").integers(2**32))
    lq = bnd.symmetry_check(LossConfig("lq", q=0.7), c, trials,
                            derive_rng(seed, "sym-lq").integers(2**32))
    trunc = bnd.symmetry_check(LossConfig("trunc_lq", q=0.7, k=0.5), c, trials,
                               derive_rng(seed, "sym-trunc").integers(2**32))
    cce = bnd.symmetry_check(LossConfig("cce"), c, trials,
                             derive_rng(seed, "sym-cce").integers(2**32))
    reports = {"mae": mae.to_dict(), "lq": lq.to_dict(), "trunc_lq": trunc.to_dict(),
               "cce": cce.to_dict()}
    passed = (not mae.violated and not lq.violated and not trunc.violated and cce.violated
              and abs(mae.witness_min - (2 * c - 2)) < 1e-9
              and abs(mae.witness_max - (2 * c - 2)) < 1e-9)
    return {"check": "symmetry", "params": {"c": c, "trials": trials},
            "reports": reports, "passed": passed}


def _random_table_instance(rng, c=None, max_distinct=4, max_samples=8):
    c = c if c is not None else int(rng.integers(2, 5))
    m = int(rng.integers(1, max_distinct + 1))
    n = int(rng.integers(m, max_samples + 1))
    point_ids = np.concatenate([np.arange(m), rng.integers(0, m, size=n - m)])
    labels = rng.integers(0, c, size=n)
    table = rng.dirichlet(np.ones(c), size=m)
    return c, point_ids, labels, table


def check_risk_identity(seed: int = DEFAULT_SEED, trials: int = 50) -> dict:
    """Exact affine decomposition of the uniform-noise risk, 50 instances."""
    rng = derive_rng(seed, "risk-identity")
    worst = 0.0
    for _ in range(int(trials)):
        c, point_ids, labels, table = _random_table_instance(rng)
        q = float(rng.uniform(0.05, 1.0))
        eta = float(rng.uniform(0.0, 1.0 - 1.0 / c))
        residual = noisy_risk_identity_check(point_ids, labels, LossConfig("lq", q=q),
                                             eta, table)
        worst = max(worst, residual)
    return {"check": "risk-identity", "params": {"instances": int(trials)},
            "max_residual": worst, "tolerance": 1e-12, "passed": worst < 1e-12}


def _conflicting_instance(rng, c=3, max_points=6):
    """Small instance with repeated inputs and conflicting labels."""
    m = int(rng.integers(2, 4))
    n = int(rng.integers(max(m, 4), max_points + 1))
    point_ids = np.concatenate([np.arange(m), rng.integers(0, m, size=n - m)])
    labels = rng.integers(0, c, size=n)
    return point_ids, labels


def check_uniform_gap(seed: int = DEFAULT_SEED, trials: int = 20) -> dict:
    """Risk-gap bounds under uniform noise on brute-force instances.

    Also pins the q = 1 special case: the clean-risk gap collapses to
    zero because the class sum is constant.
    """
    rng = derive_rng(seed, "theorem1")
    started = time.perf_counter()
    results = []
    passed = True
    for i in range(int(trials)):
        q = float(rng.choice([0.3, 0.5, 0.7, 1.0]))
        eta = float(rng.uniform(0.05, 0.6))
        point_ids, labels = _conflicting_instance(rng)
        report = verify_risk_gap(point_ids, labels, 3, LossConfig("lq", q=q),
                                 NoiseModel.uniform(eta), grid_step=0.05)
        ok = report.ok
        if q == 1.0:
            ok &= abs(report.risk_clean_fstar - report.risk_clean_fhat) < 1e-9
        passed &= ok
        results.append({"q": q, "eta": eta, "ok": ok, **report.to_dict()})
    return {"check": "theorem1", "params": {"instances": int(trials), "c": 3,
                                            "grid_step": 0.05},
            "elapsed_s": time.perf_counter() - started, "instances": results,
            "passed": passed}


def check_class_dependent_gap(seed: int = DEFAULT_SEED, trials: int = 10) -> dict:
    """Noisy-risk gap bound under diagonally dominant class-dependent noise.

    Instances are built so each distinct input carries one label, making
    zero clean risk attainable on the grid (the bound's hypothesis).
    """
    rng = derive_rng(seed, "theorem2")
    c = 3
    results = []
    passed = True
    for i in range(int(trials)):
        q = float(rng.choice([0.3, 0.5, 0.7]))
        m = int(rng.integers(2, 7))
        point_ids = np.arange(m)
        labels = rng.integers(0, c, size=m)
        retention = rng.uniform(0.55, 0.95, size=c)
        t = np.zeros((c, c))
        for row in range(c):
            off = rng.dirichlet(np.ones(c - 1)) * (1.0 - retention[row])
            t[row] = np.insert(off, row, retention[row])
        noise = NoiseModel.class_dependent(t)
        report = verify_risk_gap(point_ids, labels, c, LossConfig("lq", q=q),
                                 noise, grid_step=0.05)
        passed &= report.ok
        results.append({"q": q, "ok": report.ok, **report.to_dict()})
    return {"check": "theorem2", "params": {"instances": int(trials), "c": c,
                                            "grid_step": 0.05},
            "instances": results, "passed": passed}


GRADCHECK_CONFIGS = (
    LossConfig("cce"),
    LossConfig("mae"),
    LossConfig("lq", q=0.3),
    LossConfig("lq", q=0.7),
    LossConfig("lq", q=1.0),
    LossConfig("trunc_lq", q=0.7, k=0.5),
)


def _gradcheck_configs(rng, c):
    confusion = rng.dirichlet(np.ones(c), size=c)
    return GRADCHECK_CONFIGS + (LossConfig("forward_cce", confusion=confusion),)


def _fd_logit_error(config, rng, c, step=1e-6):
    """Max relative FD error of the logit gradient on one random case.

    Logits are kept in [-2, 2] so no softmax output collapses below ~1e-2;
    outside that range the finite-difference oracle's own roundoff noise
    dominates the tiny true gradient components.
    """
    for _ in range(100):
        z = rng.uniform(-2.0, 2.0, size=c)
        y = int(rng.integers(0, c))
        py = float(softmax(z)[y])
        if config.kind != "trunc_lq" or abs(py - config.k) > 1e-3:
            break
    analytic = loss_grad_wrt_logits(config, z, y)
    worst = 0.0
    for j in range(c):
        zp, zm = z.copy(), z.copy()
        zp[j] += step
        zm[j] -= step
        up = float(loss_values(config, softmax(zp)[None, :], np.array([y]))[0])
        down = float(loss_values(config, softmax(zm)[None, :], np.array([y]))[0])
        fd = (up - down) / (2.0 * step)
        denom = max(1e-8, abs(fd), abs(analytic[j]))
        worst = max(worst, abs(fd - analytic[j]) / denom)
    return worst


def check_gradients(seed: int = DEFAULT_SEED, trials: int = 100) -> dict:
    """FD validation of logit and parameter gradients for every loss kind."""
    rng = derive_rng(seed, "gradcheck")
    c, d, hidden = 3, 4, [5]
    started = time.perf_counter()
    by_kind = {}
    passed = True
    for config in _gradcheck_configs(rng, c):
        worst_logit = 0.0
        worst_param = 0.0
        for case in range(int(trials)):
            worst_logit = max(worst_logit, _fd_logit_error(config, rng, c))
            arch = hidden if case % 2 else []
            clf = init_classifier(arch, c, d, int(rng.integers(2**32)))
            for _ in range(100):
                x = rng.normal(0.0, 1.0, size=d)
                y = int(rng.integers(0, c))
                py = float(forward(clf, x)[y])
                if config.kind != "trunc_lq" or abs(py - config.k) > 1e-3:
                    break
            worst_param = max(worst_param, grad_check(clf, x, y, config))
        ok = worst_logit < 1e-5 and worst_param < 1e-5
        passed &= ok
        by_kind[config.describe()] = {"max_logit_rel_err": worst_logit,
                                      "max_param_rel_err": worst_param, "passed": ok}
    return {"check": "gradcheck", "params": {"cases_per_kind": int(trials)},
            "elapsed_s": time.perf_counter() - started, "by_kind": by_kind,
            "tolerance": 1e-5, "passed": passed}


def check_prune_objective_equivalence(seed: int = DEFAULT_SEED, trials: int = 100) -> dict:
    """Masked surrogate at the optimal mask equals the truncated-loss sum."""
    rng = derive_rng(seed, "eq12-13")
    worst = 0.0
    for _ in range(int(trials)):
        c = int(rng.integers(2, 6))
        d = int(rng.integers(2, 6))
        n = int(rng.integers(5, 40))
        q = float(rng.uniform(0.05, 0.95))
        k = float(rng.uniform(1.0 / c, 0.9))
        clf = init_classifier([int(rng.integers(2, 8))] if rng.random() < 0.5 else [],
                              c, d, int(rng.integers(2**32)))
        labels = rng.integers(0, c, size=n)
        data = NoisyDataset(features=rng.normal(size=(n, d)), noisy_labels=labels,
                            clean_labels=labels, corrupted=np.zeros(n, bool),
                            open_set_flags=np.zeros(n, bool), num_classes=c)
        mask = pruning_step(clf, data, q, k)
        surrogate = truncated_objective_value(clf, data, mask, q, k)
        direct = float(loss_values(LossConfig("trunc_lq", q=q, k=k),
                                   forward(clf, data.features), labels).sum())
        worst = max(worst, abs(surrogate - direct))
    return {"check": "eq12-13", "params": {"instances": int(trials)},
            "max_abs_difference": worst, "tolerance": 1e-12, "passed": worst < 1e-12}


CHECKS = {
    "lemma1": check_lq_cce_limit,
    "lemma2": check_lq_class_sum_band,
    "lemma3": check_trunc_class_sum_band,
    "eq11": check_tightening_region,
    "symmetry": check_symmetry,
    "risk-identity": check_risk_identity,
    "theorem1": check_uniform_gap,
    "theorem2": check_class_dependent_gap,
    "gradcheck": check_gradients,
    "eq12-13": check_prune_objective_equivalence,
}


def run_suite(selectors=None, seed: int = DEFAULT_SEED, out_dir: str | None = None,
              trials: dict | None = None) -> tuple[bool, list[dict]]:
    """Run the selected checks (all by default); returns (all_passed, reports).

    ``trials`` optionally overrides the sample/instance count per selector.
    When ``out_dir`` is given, one JSON report is written per check.
    """
    names = list(CHECKS) if selectors is None else list(selectors)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown verification checks {unknown}; valid: {sorted(CHECKS)}")
    reports = []
    for name in names:
        kwargs = {"seed": seed}
        if trials and name in trials:
            kwargs["trials"] = trials[name]
        report = CHECKS[name](**kwargs)
        reports.append(report)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            atomic_write_json(os.path.join(out_dir, f"check_{name.replace('-', '_')}.json"),
                              report)
    return all(r["passed"] for r in reports), reports
