"""Sample-complexity laboratory for self-supervised linear reconstruction."""

from .cs_linear import complex_subspace_model, cs_optimal_risk, cs_risk, generate_cs_data, train_cs_linear
from .experiments import SweepConfig, SweepResult, emit_csv, fit_rate, parse_config, read_csv, run_sweep
from .gradvar import compare_means, normalized_gradient_variances, one_epoch_supervised
from .linear import (
    LinearEstimator,
    n2n_sample_gradient,
    noisier2noise_population_estimator,
    optimal_estimator,
    optimal_risk,
    risk_closed_form,
    risk_gradient,
)
from .masks import CsScheme, MaskSplit, build_split, build_splits, prop2_exact_check, ss_cs_loss, weight_vector
from .model import Dataset, SubspaceModel, generate_dataset, generate_nested_datasets, make_model, seed_sequence
from .training import (
    BoundConstants,
    DivergenceError,
    SgmSchedule,
    gd_early_stopped,
    sgm_single_pass,
    theorem1_bound,
    train_noisier2noise,
)

__version__ = "0.1.0"
