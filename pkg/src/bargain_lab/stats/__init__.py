"""Statistical primitives shared by the estimators."""

from .optimize import maximize_loglik, numeric_gradient, numeric_hessian
from .quadrature import gauss_hermite
from .regression import (
    HeckmanResult,
    check_rank,
    heckman_two_step,
    inverse_mills,
    ols_fit,
    probit_fit,
    probit_loglik,
)
from .resampling import BootstrapResult, bootstrap, delta_cov, delta_method, jacobian, resample
from .results import FitResult, SmoothFit, symmetrize
from .smoothing import local_poly_fit, silverman_bandwidth

__all__ = [
    "BootstrapResult", "FitResult", "HeckmanResult", "SmoothFit", "bootstrap", "check_rank",
    "delta_cov", "delta_method", "gauss_hermite", "heckman_two_step", "inverse_mills",
    "jacobian", "local_poly_fit", "maximize_loglik", "numeric_gradient", "numeric_hessian",
    "ols_fit", "probit_fit", "probit_loglik", "resample", "silverman_bandwidth", "symmetrize",
]
