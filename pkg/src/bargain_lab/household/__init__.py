"""Household model: likelihood, restricted fits, tests and structural recovery."""

from .battery import (
    BatteryReport,
    Verdict,
    read_estimates,
    report_from_tables,
    test_battery,
    verdict_markdown,
    write_battery,
    write_estimates,
    write_sharing_rule,
)
from .fit import LRTest, ReducedFormEstimates, fit_all, fit_model, lr_pvalue, lr_test, start_values
from .layout import DF, KINDS, ModelSpec, expand, expand_jacobian, free_names, restriction_residuals
from .likelihood import HouseholdArrays, Likelihood, household_loglik, loglik_from_dataset, prepare, truth_vector
from .structural import (
    AlphaEstimate,
    ReservationWage,
    SingularFrontierError,
    StructuralParams,
    alpha_from_intercept,
    estimate_alpha,
    f_prime_roots,
    recover_sharing_rule,
    reservation_wage,
    sharing_chain,
)

__all__ = [
    "AlphaEstimate", "BatteryReport", "DF", "HouseholdArrays", "KINDS", "LRTest", "Likelihood",
    "ModelSpec", "ReducedFormEstimates", "ReservationWage", "SingularFrontierError",
    "StructuralParams", "Verdict", "alpha_from_intercept", "estimate_alpha", "expand",
    "expand_jacobian", "f_prime_roots", "fit_all", "fit_model", "free_names", "household_loglik",
    "loglik_from_dataset", "lr_pvalue", "lr_test", "prepare", "read_estimates",
    "recover_sharing_rule", "report_from_tables", "reservation_wage", "restriction_residuals",
    "sharing_chain", "start_values", "test_battery", "truth_vector", "verdict_markdown",
    "write_battery", "write_estimates", "write_sharing_rule",
]
