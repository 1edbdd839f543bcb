"""nonuniform-robust - adversarial training and certification under non-uniform perturbation sets."""

__version__ = "0.1.0"

from .attack import AttackConfig, PerturbationBudget, pgd, project_nonuniform, project_uniform
from .cert_lp import activation_bounds, certify, dual_objective
from .consistency import GaussianModel, gamma_consistency
from .data import Dataset, load_csv
from .net import MlpModel, TrainConfig, init_model
from .omega import OmegaTransform, build_omega, inverse_norm, omega_norm
from .smoothing import SmoothingConfig, certified_radius, smoothed_predict
from .training import AdvTrainConfig, adversarial_train, evaluate_defense, match_budgets

__all__ = [
    "AdvTrainConfig",
    "AttackConfig",
    "Dataset",
    "GaussianModel",
    "MlpModel",
    "OmegaTransform",
    "PerturbationBudget",
    "SmoothingConfig",
    "TrainConfig",
    "activation_bounds",
    "adversarial_train",
    "build_omega",
    "certified_radius",
    "certify",
    "dual_objective",
    "evaluate_defense",
    "gamma_consistency",
    "init_model",
    "inverse_norm",
    "load_csv",
    "match_budgets",
    "omega_norm",
    "pgd",
    "project_nonuniform",
    "project_uniform",
    "smoothed_predict",
]
