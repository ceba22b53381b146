"""Causal decomposition of group disparities with sensitivity analysis for
omitted mediator-outcome confounding.

Workflow: encode data (`dataset`), fit and decompose (`decomp`), then probe
robustness on the coefficient scale (`sens_coef`) or the partial R^2 scale
(`sens_r2`), with `simulate` supplying synthetic data and brute-force
oracles and `verify` running the formula-vs-oracle battery end to end.
"""

from .dataset import EncodedDataset, Finding, Schema, encode, load_csv, schema_for, validate, write_csv
from .decomp import (Analysis, CovBundle, DecompositionResult, FittedSystem,
                     GroupDecomposition, InitialDisparity, analyze,
                     bootstrap_cov, decompose, fit_system, initial_disparity)
from .regress import ModelFit, coef, ols_fit
from .sens_coef import (CoefParams, DiscreteWorld, adjust_coef, bias_coef,
                        explain_away_coef, general_bias_discrete, grid_coef)
from .sens_r2 import (R2Inputs, R2Params, RobustnessReport, adjust_point_r2,
                      adjusted_var_delta, adjusted_var_zeta, bias_r2,
                      g_value, grid_r2, inputs_for, reference_switch,
                      robustness_report, rv, rv_alpha)
from .simulate import (CompleteDataset, SemSpec, default_spec, discrete_spec,
                       generate, oracle_bias, oracle_np_identify,
                       saturated_regression_decompose, world_from_discrete_data)
from .verify import run_verify

__version__ = "0.1.0"

__all__ = [
    "EncodedDataset", "Finding", "Schema", "encode", "load_csv", "schema_for",
    "validate", "write_csv",
    "Analysis", "CovBundle", "DecompositionResult", "FittedSystem",
    "GroupDecomposition", "InitialDisparity", "analyze", "bootstrap_cov",
    "decompose", "fit_system", "initial_disparity",
    "ModelFit", "coef", "ols_fit",
    "CoefParams", "DiscreteWorld", "adjust_coef", "bias_coef",
    "explain_away_coef", "general_bias_discrete", "grid_coef",
    "R2Inputs", "R2Params", "RobustnessReport", "adjust_point_r2",
    "adjusted_var_delta", "adjusted_var_zeta", "bias_r2", "g_value",
    "grid_r2", "inputs_for", "reference_switch", "robustness_report",
    "rv", "rv_alpha",
    "CompleteDataset", "SemSpec", "default_spec", "discrete_spec", "generate",
    "oracle_bias", "oracle_np_identify", "saturated_regression_decompose",
    "world_from_discrete_data",
    "run_verify",
    "__version__",
]
