"""Bayesian tensor VARs: CP-decomposed coefficients, stochastic volatility and forecast evaluation."""
from .bvar import MinnesotaSpec, fit_conjugate, sample_posterior
from .data_io import VariableSpec, load_csv, load_variable_specs, standardize, transform, transform_panel
from .forecast import EvalReport, ForecastTask, ModelSpec, point_forecast, predictive_density, run_recursive_eval
from .sampler import FactorPrior, McmcConfig, PosteriorDraws, run_chain
from .tensor_core import CPFactors, Tensor3, commutation, cp_compose, cp_matricized, matricize, theta_minus
from .var_data import SeriesPanel, VarDataset, build_dataset, residuals

__version__ = "0.1.0"
