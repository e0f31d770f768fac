"""Multilevel and multi-index Monte Carlo and quasi-Monte Carlo estimators."""

from .allocation import (BiasModel, allocate_samples, fit_bias_model, modeled_cost,
                         modeled_variance, next_power_of_two, optimal_samples, round_up,
                         select_finest_level)
from .drivers import (DRIVERS, EstimatorParams, EstimatorReport, LevelRecord, lattice_source,
                      mc_run, mimc_run, miqmc_run, mlmc_combination_run, mlmc_run, mlqmc_run,
                      run_estimator, screen_only)
from .levels import SCHEMES, difference_samples, level_keys, level_samples

__all__ = [
    "BiasModel", "DRIVERS", "EstimatorParams", "EstimatorReport", "LevelRecord", "SCHEMES",
    "allocate_samples", "difference_samples", "fit_bias_model", "lattice_source", "level_keys",
    "level_samples", "mc_run", "mimc_run", "miqmc_run", "mlmc_combination_run", "mlmc_run",
    "mlqmc_run", "modeled_cost", "modeled_variance", "next_power_of_two", "optimal_samples",
    "round_up", "run_estimator", "screen_only", "select_finest_level",
]
