"""Structural estimation toolkit for teen schooling and household decisions.

Marginal treatment effects of a conditional transfer, unitary and collective
household labor-supply models with their restriction tests, and a forward
simulator that serves as the oracle for every estimator.
"""

from ._kernels import BACKEND
from .aux_regressions import (
    attach_control_function,
    fit_control_function,
    fit_wage_model,
    impute_wages,
)
from .data import Dataset, HouseholdRecord, SelectionRules, load_dataset, select_sample, write_dataset
from .errors import BargainLabError, EstimationError, InputError
from .household import (
    ModelSpec,
    estimate_alpha,
    fit_all,
    fit_model,
    household_loglik,
    lr_test,
    recover_sharing_rule,
    reservation_wage,
    test_battery,
)
from .mte import (
    MteCurve,
    PropensityFit,
    common_support,
    estimate_propensity,
    heterogeneity_tests,
    mte_bootstrap,
    mte_separate,
)
from .simgen import MteConfig, SimConfig, generate, generate_mte_scenario

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BargainLabError", "Dataset", "EstimationError", "HouseholdRecord", "InputError",
    "ModelSpec", "MteConfig", "MteCurve", "PropensityFit", "SelectionRules", "SimConfig",
    "attach_control_function", "common_support", "estimate_alpha", "estimate_propensity",
    "fit_all", "fit_control_function", "fit_model", "fit_wage_model", "generate",
    "generate_mte_scenario", "heterogeneity_tests", "household_loglik", "impute_wages",
    "load_dataset", "lr_test", "mte_bootstrap", "mte_separate", "recover_sharing_rule",
    "reservation_wage", "select_sample", "test_battery", "write_dataset",
]
