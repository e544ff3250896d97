"""Simultaneous clustering and variable selection for categorical data.

Mixtures of product-multinomial distributions, haploid or diploid under
Hardy-Weinberg equilibrium, are fitted by EM; the number of clusters and
the set of clustering variables are chosen by a penalized criterion whose
multiplier is calibrated from the data (slope heuristics).
"""

__version__ = "0.1.0"

from .core import (
    Case,
    Dataset,
    FittedModel,
    MixtureDistribution,
    MixtureParams,
    ModelIndex,
    complexity_constant,
    contrast,
    density,
    dimension,
    log_likelihood,
    validate_dataset,
    xi_constant,
)
from .em import EmConfig, fit
from .criteria import Penalty, select_under_penalty
from .explorer import ExplorerConfig, build_pool
from .calibration import calibrate_and_select, dimension_jump, dimension_path, slope_regression
from .metrics import hellinger_sq, hellinger_sq_exact, hellinger_sq_mc, kl_exact, map_classify
from .pipeline import run_selection
from .simulation import TrueModelSpec, consistency_experiment, estimate_oracle, oracle_experiment, simulate

__all__ = [
    "Case", "Dataset", "FittedModel", "MixtureDistribution", "MixtureParams", "ModelIndex",
    "complexity_constant", "contrast", "density", "dimension", "log_likelihood",
    "validate_dataset", "xi_constant", "EmConfig", "fit", "Penalty", "select_under_penalty",
    "ExplorerConfig", "build_pool", "calibrate_and_select", "dimension_jump", "dimension_path",
    "slope_regression", "hellinger_sq", "hellinger_sq_exact", "hellinger_sq_mc", "kl_exact",
    "map_classify", "run_selection", "TrueModelSpec", "consistency_experiment",
    "estimate_oracle", "oracle_experiment", "simulate",
]
