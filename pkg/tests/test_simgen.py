import numpy as np
import pytest
from scipy.special import ndtr

from bargain_lab.errors import ConfigError
from bargain_lab.simgen import (
    MteConfig,
    SimConfig,
    frontier,
    generate,
    generate_mte_scenario,
    mte_covariance,
    public_good_budget,
    reduced_form,
    true_mte,
)
from bargain_lab.stats import ols_fit

NOISELESS = dict(sigma_eta=0.0, sigma_w=0.0, sigma_s=0.0, sigma_t=0.0, sigma_h=0.0, sigma_v=0.0)


def regime_ols(d, school):
    """OLS of parents' time share on the switching-regression regressors."""
    keep = (d.schooling == int(school)) & (d.parent_market_hours > 0)
    y_reg = d.nonlabor_income + (d.transfer_amount * d.treated if school else 0.0)
    X = np.column_stack([
        np.log(d.parent_wage), d.teen_wage, y_reg, np.ones(len(d)),
        d.covariate("young_children"), d.covariate("region"), np.log(d.teen_wage),
    ])[keep]
    return ols_fit(X, d.parent_market_hours[keep] / 98.0,
                   ["lnwp", "wt", "y", "const", "young", "region", "lnwt"])


def test_generate_is_deterministic():
    a, la = generate(SimConfig(n=300, seed=4))
    b, lb = generate(SimConfig(n=300, seed=4))
    c, _ = generate(SimConfig(n=300, seed=5))
    assert a.equals(b)
    assert np.array_equal(la.households["eta"], lb.households["eta"])
    assert not a.equals(c)


@pytest.mark.parametrize("kind", ["collective", "unitary"])
def test_noiseless_inversion_recovers_regime_coefficients(kind):
    cfg = SimConfig(n=3000, seed=1, truth_kind=kind, reveal_student_wages=True, **NOISELESS)
    d, led = generate(cfg)
    p = led.params
    for school, names in ((False, ("Ap_star", "At", "Ay", "w_const")),
                          (True, ("ap_star", "at", "ay", "s_const"))):
        fit = regime_ols(d, school)
        b = fit.coefficients
        pre = "s_" if school else "w_"
        expected = [p[k] for k in names] + [p[pre + "young_children"], p[pre + "region"], p["delta"]]
        assert np.max(np.abs(b - expected)) < 1e-8


def test_noiseless_hicksian_ratio():
    d, _ = generate(SimConfig(n=2000, seed=2, reveal_student_wages=True, **NOISELESS))
    lhs = np.log(d.parent_domestic_hours / d.teen_domestic_hours)
    rhs = np.log(d.teen_wage / d.parent_wage)
    fit = ols_fit(np.column_stack([np.ones(len(d)), rhs]), lhs)
    assert abs(fit.coefficients[1] - 1) < 1e-10
    assert abs(fit.coefficients[0] - np.log(4)) < 1e-10


def test_schooling_share_matches_index_probability():
    cfg = SimConfig(n=100_000, seed=3, reveal_student_wages=True)
    d, led = generate(cfg)
    h = led.households
    untreated = d.treated == 0
    # index without its own shock; the shock has variance chi_t^2 s_eta^2 + s_t^2 + l_t^2 s_v^2
    mean_index = h["school_index"] - h["u_t"]
    sd = np.sqrt((cfg.chi_t * cfg.sigma_eta) ** 2 + cfg.sigma_t**2 + (cfg.lambda_t * cfg.sigma_v) ** 2)
    # v is also inside y, so condition on it: subtract the part of u_t it explains
    lam = cfg.lambda_t * h["v"]
    resid_sd = np.sqrt(sd**2 - (cfg.lambda_t * cfg.sigma_v) ** 2)
    expected = ndtr((mean_index + lam)[untreated] / resid_sd).mean()
    observed = d.schooling[untreated].mean()
    assert abs(observed - expected) < 4 * np.sqrt(expected * (1 - expected) / untreated.sum()) + 1e-3


def test_budget_identity_and_conditionality():
    cfg = SimConfig(n=2000, seed=6)
    d, led = generate(cfg)
    h = led.households
    G = public_good_budget(cfg)
    assert np.allclose(h["rho_p"] + h["rho_t"] + h["public_good"], h["y_star"], atol=1e-12)
    assert np.all(h["public_good"] == G)
    assert np.all(d.schooling[d.treated == 1] == 1)
    # teen wages hidden for students unless revealed
    assert np.all(np.isnan(d.teen_wage[d.schooling == 1]))
    assert np.all(np.isfinite(d.teen_wage[d.schooling == 0]))


def test_reduced_form_matches_structural_time_share():
    cfg = SimConfig(n=500, seed=8, reveal_student_wages=True, **NOISELESS)
    d, led = generate(cfg)
    rf = reduced_form(cfg)
    p = led.params
    lnwp, wt, lnwt = np.log(d.parent_wage), d.teen_wage, np.log(d.teen_wage)
    y = d.nonlabor_income
    x = np.column_stack([d.covariate("young_children"), d.covariate("region")])
    work = (rf["Ap_star"] * lnwp + rf["At"] * wt + rf["Ay"] * y + rf["delta"] * lnwt
            + p["w_const"] + x @ np.asarray(cfg.beta_w))
    assert np.allclose(work, led.households["mp_work"], atol=1e-12)


def test_frontier_follows_b_ratios():
    cfg = SimConfig()
    rf = reduced_form(cfg)
    gp, gy = frontier(cfg)
    assert np.isclose(-rf["bp"] / rf["bt"], gp)
    assert np.isclose(-rf["by"] / rf["bt"], gy)


def test_unitary_truth_pools_income():
    rf = reduced_form(SimConfig(truth_kind="unitary"))
    assert rf["At"] == rf["Ay"] == rf["ay"]
    assert rf["at"] == 0
    assert rf["Ap_star"] == rf["ap_star"]


def test_mte_scenario_treated_share_matches_propensity():
    d, led = generate_mte_scenario(MteConfig(n=40_000, seed=1))
    p = led.households["propensity"]
    assert abs(d.treated.mean() - p.mean()) < 4 * np.sqrt(p.mean() * (1 - p.mean()) / len(d))


def test_true_mte_slope():
    m = MteConfig()
    u = np.array([0.2, 0.5, 0.8])
    v = true_mte(m, u, np.array([0.5, 0.5]))
    assert np.isclose(v[1], m.mu1 - m.mu0 + 0.5 * (0.8 - 0.5))
    assert np.isclose(m.slope, 0.5)
    assert v[2] > v[0]


def test_refuses_non_psd_correlations():
    with pytest.raises(ConfigError, match="PSD"):
        mte_covariance(MteConfig(corr_u0_v=0.99, corr_u1_v=-0.99, corr_u0_u1=0.99))


def test_refuses_sufficiency_violation():
    with pytest.raises(ConfigError, match="sufficiency"):
        generate(SimConfig(n=10, F_prime=0.1, psi_t=2.0))


def test_refuses_negative_scale_and_bad_kind():
    with pytest.raises(ConfigError):
        generate(SimConfig(n=10, sigma_w=-1.0))
    with pytest.raises(ConfigError):
        generate(SimConfig(n=10, truth_kind="altruistic"))
