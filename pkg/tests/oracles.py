"""Independent reference computations shared by the test modules."""

import numpy as np
from scipy.special import log_ndtr, ndtri
from scipy.stats import norm


def household_terms(params, rec, endowment=98.0, x_work=("young_children", "region"),
                    x_school=("young_children", "region"), x_teen=("young_children", "head_schooling_years")):
    """Regime mean, schooling index and home-production residual of one record, written out by hand."""
    p = params
    lnwp, wt = np.log(rec.parent_wage), rec.teen_wage
    lnwt = np.log(wt)
    y = rec.nonlabor_income
    cf = rec.cf_residual
    cov = rec.covariates
    if rec.schooling == 1:
        y_reg = y + rec.transfer_amount * rec.treated
        mu = (p["ap_star"] * lnwp + p["at"] * wt + p["ay"] * y_reg + p["s_const"] + p["s_cf"] * cf
              + sum(p[f"s_{x}"] * cov[x] for x in x_school) + p["delta"] * lnwt)
        sd = np.exp(p["log_sigma_s"])
        load = p["load_s"]
    else:
        mu = (p["Ap_star"] * lnwp + p["At"] * wt + p["Ay"] * y + p["w_const"] + p["w_cf"] * cf
              + sum(p[f"w_{x}"] * cov[x] for x in x_work) + p["delta"] * lnwt)
        sd = np.exp(p["log_sigma_w"])
        load = np.exp(p["log_sigma_eta"])
    tau = (p["b0"] + p["bt"] * wt + p["bp"] * lnwp + p["by"] * y + p["t_cf"] * cf
           + sum(p[f"t_{x}"] * cov[x] for x in x_teen))
    sign = 0 if rec.treated == 1 else 2 * rec.schooling - 1
    has_h = rec.parent_domestic_hours > 0 and rec.teen_domestic_hours > 0
    h_res = (np.log(rec.parent_domestic_hours / rec.teen_domestic_hours) - np.log(wt / rec.parent_wage)
             - p["h_const"]) if has_h else None
    return dict(m=rec.parent_market_hours / endowment, mu=mu, sd=sd, load=load, tau=tau, sign=sign,
                h_res=h_res, h_sd=np.exp(p["log_sigma_h"]))


def conditional_loglik(params, t, eta):
    """Log of the integrand at factor values ``eta``."""
    p = params
    out = norm.logpdf(t["m"], t["mu"] + t["load"] * eta, t["sd"])
    if t["sign"] != 0:
        out = out + log_ndtr(t["sign"] * (t["tau"] + p["load_t"] * eta))
    if t["h_res"] is not None:
        out = out + norm.logpdf(t["h_res"], p["load_h"] * eta, t["h_sd"])
    return out


def mc_loglik(params, rec, draws, seed, stratified=True):
    """Monte-Carlo log-likelihood of one household.

    With ``stratified`` the unit interval is cut into ``draws`` equal strata
    and one uniform is drawn in each, then mapped through the normal quantile.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=draws)
    if stratified:
        u = (np.arange(draws) + u) / draws
    eta = ndtri(u)
    t = household_terms(params, rec)
    lc = conditional_loglik(params, t, eta)
    top = lc.max()
    return float(top + np.log(np.mean(np.exp(lc - top))))
