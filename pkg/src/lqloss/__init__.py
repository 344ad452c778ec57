"""Noise-robust Lq / truncated-Lq losses with label-noise tooling.

Layout:

* :mod:`lqloss.losses`     loss family, analytic prob/logit gradients
* :mod:`lqloss.bounds`     class-sum bands, risk-gap constants, sampling checks
* :mod:`lqloss.risk`       exact risks and brute-force minimizers on grids
* :mod:`lqloss.noise`      uniform / class-dependent / open-set corruption
* :mod:`lqloss.data`       datasets, synthetic blobs, CSV round-trips
* :mod:`lqloss.train`      softmax MLP, masked SGD, gradient checking
* :mod:`lqloss.pruning`    alternating prune-train for the truncated loss
* :mod:`lqloss.experiment` seeded experiment runner and sweeps
* :mod:`lqloss.verify`     numerical verification suite
"""

from .bounds import (BoundReport, class_noise_gap_bound, lq_class_sum_bounds,
                     sample_simplex, symmetry_check, tightness_condition,
                     trunc_class_sum_bounds, uniform_noise_gap_constants)
from .data import (Dataset, ExperimentData, NoisyDataset, load_csv, save_csv,
                   split_indices, synth_blobs)
from .errors import ConfigError, DataError, SizeError
from .experiment import (BlobSpec, ExperimentConfig, LossSpec, NoiseSpec, RunRecord,
                         TrainParams, config_hash, derive_rng, derive_seed,
                         parse_config, run_experiment, sweep, sweep_to_csv)
from .losses import (LossConfig, cce_loss, check_simplex, class_sum, class_sums,
                     forward_cce_loss, loss_grad_wrt_logits, loss_grad_wrt_probs,
                     loss_matrix, loss_value, loss_values, lq_loss, lq_value,
                     mae_loss, softmax, truncated_lq_loss)
from .noise import (NoiseModel, OutlierSpec, build_transition_matrix, inject_noise,
                    inject_open_set, preset_circular_flip, preset_pair_flip)
from .pruning import (AcsConfig, AcsHistory, PruneEvent, acs_train, pruning_step,
                      truncated_objective_value)
from .risk import (RiskGapReport, brute_force_risk_minimizer, clean_risk,
                   expected_class_sum, noisy_risk, noisy_risk_identity_check,
                   simplex_grid, verify_risk_gap)
from .train import (Classifier, EpochMetrics, SgdState, TrainConfig, evaluate,
                    forward, grad_check, init_classifier, predict, train, train_epoch)
from .verify import run_suite

__version__ = "0.1.0"
