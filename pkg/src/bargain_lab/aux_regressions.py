"""Teen-wage imputation and the control function for non-labor income."""

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .output import coef_rows, new_figure, save_svg, write_table
from .stats import FitResult, heckman_two_step, inverse_mills, ols_fit

WAGE_COVARIATES = ("teen_age", "teen_schooling_years", "region")
WAGE_EXCLUSION = ("young_children", "head_schooling_years")
CF_COVARIATES = ("young_children", "region", "head_schooling_years", "household_assets")


class ImputationError(InputError):
    pass


def column(d, name):
    """Core field or covariate ``name`` as a float array."""
    if name in d.columns:
        return np.asarray(d.columns[name], dtype=float)
    return d.covariate(name)


def year_dummies(d):
    years = np.unique(d.year)
    names = [f"year_{y}" for y in years[1:]]
    cols = [(d.year == y).astype(float) for y in years[1:]]
    return names, cols


def _design(d, names, rows=None, years=False):
    cols = [np.ones(len(d))] + [column(d, k) for k in names]
    labels = ["const"] + list(names)
    if years:
        yn, yc = year_dummies(d)
        labels += yn
        cols += yc
    X = np.column_stack(cols)
    return (X if rows is None else X[rows]), labels


@dataclass(frozen=True)
class WageModel:
    participation: FitResult
    wage_eq: FitResult
    imr_coef: float
    imr_se: float
    rho: float
    sigma: float
    covariates: tuple
    exclusion: tuple
    gender: str = None
    no_exclusion: bool = False


def fit_wage_model(d, covariates=WAGE_COVARIATES, exclusion=WAGE_EXCLUSION, gender=None):
    """Two-step selection-corrected log-wage equation for teens.

    Participation is working in the market with an observed wage. The
    participation equation adds the ``exclusion`` variables to the wage
    covariates.
    """
    if gender is not None:
        d = d.filter(d.teen_gender == gender)
    elif len(set(d.teen_gender)) == 1:
        gender = str(d.teen_gender[0])
    works = (d.teen_market_hours > 0) & np.isfinite(d.teen_wage) & (d.wage_imputed == 0)
    if works.sum() <= len(covariates) + 2:
        raise InputError("too few working teens with observed wages to fit the wage equation")
    Z, z_names = _design(d, tuple(covariates) + tuple(exclusion))
    X, x_names = _design(d, covariates)
    y = np.where(works, np.log(np.where(works, d.teen_wage, 1.0)), np.nan)
    res = heckman_two_step(Z, works.astype(float), X, y, z_names, x_names)
    return WageModel(
        participation=res.participation, wage_eq=res.outcome, imr_coef=res.imr_coef,
        imr_se=res.imr_se, rho=res.rho, sigma=res.sigma, covariates=tuple(covariates),
        exclusion=tuple(exclusion), gender=gender, no_exclusion=res.no_exclusion,
    )


def predicted_log_wage(d, m, conditional=False):
    """Log-wage prediction used for imputation, before retransformation."""
    X, _ = _design(d, m.covariates)
    beta = m.wage_eq.coefficients[:-1]
    xb = X @ beta
    if not conditional:
        return xb, m.sigma**2
    Z, _ = _design(d, m.covariates + m.exclusion)
    zg = Z @ m.participation.coefficients
    # non-participants: E[u | not working] = -b_imr * phi(zg) / Phi(-zg)
    lam0 = inverse_mills(-zg)
    delta0 = lam0 * (lam0 - zg)
    var = m.sigma**2 * (1 - m.rho**2 * delta0)
    return xb - m.imr_coef * lam0, var


def impute_wages(d, m, conditional=False):
    """Fill missing teen wages with ``exp(X b + s^2/2)``.

    Observed wages are never changed. ``conditional=True`` adds the
    selection term for non-participants instead of the unconditional
    potential wage.
    """
    if m.gender is not None and np.any(d.teen_gender != m.gender):
        raise ValueError(f"wage model was fitted for {m.gender}s only")
    missing = np.isnan(d.teen_wage)
    if not missing.any():
        return d
    names = m.covariates + (m.exclusion if conditional else ())
    for k in names:
        bad = missing & np.isnan(column(d, k))
        if bad.any():
            rid = d.id[np.flatnonzero(bad)[0]]
            raise ImputationError(f"record {rid}: covariate {k!r} missing, cannot impute wage")
    mean, var = predicted_log_wage(d, m, conditional)
    w = np.where(missing, np.exp(mean + 0.5 * var), d.teen_wage)
    flag = np.where(missing, 1, d.wage_imputed)
    return d.replace(columns={"teen_wage": w, "wage_imputed": flag})


@dataclass(frozen=True)
class ControlFunctionFit:
    regression: FitResult
    residuals: np.ndarray
    covariates: tuple


def fit_control_function(d, covariates=CF_COVARIATES, year_effects=True):
    """OLS of non-labor income on the transfer amount, its square and covariates."""
    iv = d.transfer_amount
    X, names = _design(d, covariates, years=year_effects)
    X = np.column_stack([X[:, :1], iv, iv**2, X[:, 1:]])
    names = [names[0], "iv", "iv_sq"] + names[1:]
    fit = ols_fit(X, d.nonlabor_income, names)
    return ControlFunctionFit(fit, fit.info["residuals"], tuple(covariates))


def attach_control_function(d, cf):
    if cf.residuals.shape != (len(d),):
        raise ValueError("residual count does not match the dataset")
    return d.replace(columns={"cf_residual": cf.residuals})


def write_wage_model(m, path):
    rows = coef_rows(m.participation, "participation:") + coef_rows(m.wage_eq, "wage:")
    rows += [("rho", m.rho, ""), ("sigma", m.sigma, ""), ("no_exclusion", int(m.no_exclusion), "")]
    write_table(path, ["term", "estimate", "se"], rows)


def write_control_function(cf, path):
    write_table(path, ["term", "estimate", "se"], coef_rows(cf.regression))


def write_imputation_overlap(d, svg_path, csv_path, bins=30):
    """Histogram of observed vs imputed log wages, plus its data as CSV."""
    lw = np.log(d.teen_wage)
    obs = lw[(d.wage_imputed == 0) & np.isfinite(lw)]
    imp = lw[(d.wage_imputed == 1) & np.isfinite(lw)]
    both = np.r_[obs, imp]
    if both.size == 0:
        raise InputError("no wages to plot")
    edges = np.linspace(both.min(), both.max() + 1e-12, bins + 1)
    c_obs = np.histogram(obs, edges, density=obs.size > 0 and np.ptp(edges) > 0)[0] if obs.size else np.zeros(bins)
    c_imp = np.histogram(imp, edges, density=imp.size > 0 and np.ptp(edges) > 0)[0] if imp.size else np.zeros(bins)
    write_table(csv_path, ["bin_lo", "bin_hi", "observed_density", "imputed_density"],
                zip(edges[:-1], edges[1:], c_obs, c_imp))
    fig, ax = new_figure()
    ax.stairs(c_obs, edges, label="observed")
    ax.stairs(c_imp, edges, label="imputed")
    ax.set_xlabel("log hourly wage")
    ax.set_ylabel("density")
    ax.legend()
    save_svg(fig, svg_path)
