"""Ordinary, rational and heteroskedastic rational kriging with ALM active learning."""

from .active import ALConfig, ALTrace, alm_select, derive_seed, run_active_learning
from .benchmarks import REGISTRY, get_function, interval_score, rmse
from .design import Design, candidate_set, downsample, random_lhd
from .hrk import fit_hrk, gradient_g, objective_g
from .kernel import KernelSpec, build_system, gaussian_correlation
from .models import Dataset, FitOptions, HRKFit, Prediction, fit_ok, fit_rk, predict, tau

__all__ = [
    "ALConfig", "ALTrace", "alm_select", "derive_seed", "run_active_learning",
    "REGISTRY", "get_function", "interval_score", "rmse",
    "Design", "candidate_set", "downsample", "random_lhd",
    "fit_hrk", "gradient_g", "objective_g",
    "KernelSpec", "build_system", "gaussian_correlation",
    "Dataset", "FitOptions", "HRKFit", "Prediction", "fit_ok", "fit_rk", "predict", "tau",
]
