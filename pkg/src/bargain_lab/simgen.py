"""Forward simulator for the household model and the treatment-effect scenario.

``generate`` draws a cross-section of households from a collective or unitary
truth and returns the observable ``Dataset`` together with a ``TruthLedger``
that holds everything estimators must not see (latent factors, potential
outcomes, resource shares). All draws come from one ``default_rng(seed)``
stream in a fixed order, so a config maps to a bit-identical dataset.
"""

import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.special import ndtr, ndtri

from .data import Dataset
from .errors import ConfigError

X_WORK = ("young_children", "region")
X_SCHOOL = ("young_children", "region")
X_TEEN = ("young_children", "head_schooling_years")


@dataclass(frozen=True)
class MteConfig:
    """Treatment-effect scenario: Y_j = mu_j + X b_j + U_j, D = 1{P(X, Z) >= U_D}."""

    n: int = 50_000
    seed: int = 0
    mu0: float = 0.0
    mu1: float = 0.5
    beta0: tuple = (0.5, -0.3)
    beta1: tuple = (0.8, -0.3)
    d_const: float = -1.0
    d_x: tuple = (0.5, 0.3)
    loading: float = 2.0
    sd_u0: float = 1.0
    sd_u1: float = 1.0
    corr_u0_v: float = -0.25
    corr_u1_v: float = 0.25
    corr_u0_u1: float = 0.5

    @property
    def slope(self):
        """Coefficient of Phi^-1(u) in the true MTE curve."""
        return self.sd_u1 * self.corr_u1_v - self.sd_u0 * self.corr_u0_v


@dataclass(frozen=True)
class SimConfig:
    """Ground truth for ``generate``.

    Money is in thousands per week, hours per week, parents' market time as a
    share of ``endowment``. Loadings follow the normalisation chi_w = 1, so the
    common factor enters the work-regime equation with scale ``sigma_eta``.
    """

    n: int = 5000
    seed: int = 0
    truth_kind: str = "collective"
    gender: str = "son"
    alpha: float = 0.8
    # collective primitives
    F_prime: float = 0.8
    psi_p: float = 0.8
    psi_t: float = 0.6
    psi_y: float = 1.5
    theta_p_rho: float = -0.2
    theta_p_w: float = -0.14
    theta_p_K: float = 0.1
    theta_t_K: float = 0.4
    kappa0: float = 0.0
    kappa1: float = 0.0
    # unitary primitives; gamma_p follows from income pooling
    theta_y: float = -0.1
    theta_w: float = -0.1175
    theta_H_K: float = 0.1
    gamma_y: float = 0.4
    # regime intercepts and covariate effects (young_children, region)
    w_const: float = None
    s_const: float = None
    beta_w: tuple = (-0.02, 0.01)
    beta_s: tuple = (-0.02, 0.01)
    # schooling index: b_t sets the scale, b_p and b_y follow from the frontier
    b0: float = 1.6
    bt: float = -1.5
    beta_t: tuple = (-0.15, 0.05)
    # error structure
    sigma_eta: float = 0.05
    chi_s: float = 1.0
    chi_t: float = 10.0
    chi_h: float = 6.0
    sigma_w: float = 0.06
    sigma_s: float = 0.06
    sigma_t: float = 1.0
    sigma_h: float = 0.3
    # endogenous part of non-labor income and its loadings
    sigma_v: float = 0.3
    lambda_w: float = 0.03
    lambda_s: float = 0.03
    lambda_t: float = 0.3
    # non-labor income first stage; y_sd loads on an observed asset index
    y_mean: float = 0.5
    y_sd: float = 0.4
    pi_iv: float = -0.3
    pi_iv2: float = 0.1
    pi_children: float = 0.05
    # wages
    parent_logwage_mean: float = 0.4783
    parent_logwage_sd: float = 0.4436
    teen_wage_const: float = -0.25
    teen_wage_age: float = 0.06
    teen_wage_schooling: float = 0.035
    teen_wage_region: float = 0.05
    teen_wage_sd: float = 0.3
    # transfer and take-up
    transfer_base: float = 0.2
    transfer_step: float = 0.05
    takeup_const: float = -1.6
    takeup_loading: float = 2.0
    takeup_children: float = 0.2
    # time
    endowment: float = 98.0
    school_hours: float = 30.0
    teen_work_hours: float = 45.0
    home_hours_scale: float = 20.0
    reveal_student_wages: bool = False
    mte: MteConfig = field(default_factory=MteConfig)

    def intercepts(self):
        """Regime intercepts; ``None`` picks a default that centres parents' time near half."""
        w, s = DEFAULT_INTERCEPTS.get(self.truth_kind, (0.5, 0.5))
        return (w if self.w_const is None else self.w_const,
                s if self.s_const is None else self.s_const)

    def replace(self, **kw):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return SimConfig(**d)


DEFAULT_INTERCEPTS = {"collective": (0.45, 0.45), "unitary": (0.68, 0.68)}

SCALE_FIELDS = ("sigma_eta", "sigma_w", "sigma_s", "sigma_t", "sigma_h", "sigma_v",
                "parent_logwage_sd", "teen_wage_sd", "y_sd")


def public_good_budget(cfg):
    """Expenditure on the public good implied by the efficiency condition."""
    if cfg.truth_kind == "unitary":
        return -cfg.theta_H_K / cfg.theta_y
    # theta_K carries the sign used in the reduced-form mapping delta = theta_K (1 - alpha)
    return -cfg.theta_p_K / cfg.theta_p_rho + cfg.theta_t_K / cfg.F_prime


def frontier(cfg):
    """Reservation-wage frontier slopes (gamma_p, gamma_y)."""
    if cfg.truth_kind == "unitary":
        gy = cfg.gamma_y
        gp = gy * (cfg.theta_w + cfg.theta_H_K * cfg.alpha) / cfg.theta_y
        return gp, gy
    k = 1.0 - cfg.F_prime
    den = 1.0 - k * cfg.psi_t
    return k * cfg.psi_p / den, k * cfg.psi_y / den


def reduced_form(cfg):
    """Switching-regression coefficients implied by the structural truth."""
    a = cfg.alpha
    gp, gy = frontier(cfg)
    if cfg.truth_kind == "unitary":
        ap = cfg.theta_w + cfg.theta_H_K * a
        rf = dict(Ap_star=ap, At=cfg.theta_y, Ay=cfg.theta_y, ap_star=ap, at=0.0,
                  ay=cfg.theta_y, delta=cfg.theta_H_K * (1 - a))
    else:
        tr, F = cfg.theta_p_rho, cfg.F_prime
        base = cfg.theta_p_w + cfg.theta_p_K * a
        rf = dict(
            Ap_star=base - tr * cfg.psi_p, At=tr * (1 - cfg.psi_t), Ay=tr * (1 - cfg.psi_y),
            ap_star=base - tr * F * cfg.psi_p, at=-tr * F * cfg.psi_t, ay=tr * (1 - F * cfg.psi_y),
            delta=cfg.theta_p_K * (1 - a),
        )
    rf.update(b0=cfg.b0, bt=cfg.bt, bp=-gp * cfg.bt, by=-gy * cfg.bt)
    return rf


def validate_config(cfg):
    if cfg.truth_kind not in ("unitary", "collective", "mte_scenario"):
        raise ConfigError(f"truth_kind must be unitary, collective or mte_scenario, got {cfg.truth_kind!r}")
    if cfg.n < 1:
        raise ConfigError("n must be positive")
    if not 0 < cfg.alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    for name in SCALE_FIELDS:
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be >= 0")
    if cfg.gender not in ("son", "daughter"):
        raise ConfigError("gender must be 'son' or 'daughter'")
    if cfg.truth_kind == "collective":
        if not 0 < cfg.F_prime:
            raise ConfigError("F_prime must be positive")
        r = (1 - cfg.F_prime) * cfg.psi_t
        if not abs(r) < 1:
            raise ConfigError(f"sufficiency condition violated: |(1 - F')psi_t| = {abs(r):.4g} >= 1")
    if cfg.truth_kind in ("unitary", "collective"):
        if cfg.bt == 0:
            raise ConfigError("bt must be nonzero")
        if not public_good_budget(cfg) > 0:
            raise ConfigError("implied public-good expenditure must be positive")


@dataclass(frozen=True)
class TruthLedger:
    """Hidden truth: scalar parameters and per-household latent quantities."""

    kind: str
    params: dict
    households: dict

    def write(self, path, params_path=None):
        cols = list(self.households)
        arrays = [self.households[c] for c in cols]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(*[a.tolist() for a in arrays]):
                w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])
        if params_path is not None:
            with open(params_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["name", "value"])
                for k, v in self.params.items():
                    w.writerow([k, repr(float(v))])


def _scaled_normal(rng, size, sd):
    # always consume the draws so the stream layout does not depend on sd
    z = rng.standard_normal(size)
    return sd * z


def generate(cfg):
    """Simulate households; returns ``(Dataset, TruthLedger)``."""
    validate_config(cfg)
    if cfg.truth_kind == "mte_scenario":
        return generate_mte_scenario(cfg)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    rf = reduced_form(cfg)
    gp, gy = frontier(cfg)

    # demographics
    year = rng.integers(2011, 2020, n)
    teen_age = rng.integers(15, 21, n).astype(float)
    father_age = rng.integers(35, 61, n).astype(float)
    mother_age = np.clip(father_age - rng.integers(0, 7, n), 30, 64).astype(float)
    head_school = np.clip(np.round(rng.normal(7.0, 3.1, n)), 0, 17)
    young = np.minimum(rng.poisson(0.6, n), 4).astype(float)
    region = (rng.uniform(size=n) < 0.44).astype(float)
    delay = rng.integers(0, 3, n)
    teen_school_years = np.clip(teen_age - 6 - delay, 6, 11)

    # wages
    lnwp = cfg.parent_logwage_mean + _scaled_normal(rng, n, cfg.parent_logwage_sd)
    lnwt = (cfg.teen_wage_const + cfg.teen_wage_age * (teen_age - 15)
            + cfg.teen_wage_schooling * teen_school_years + cfg.teen_wage_region * region
            + _scaled_normal(rng, n, cfg.teen_wage_sd))
    wp, wt = np.exp(lnwp), np.exp(lnwt)

    # transfer take-up through the instrument
    Z = rng.uniform(size=n)
    take_index = cfg.takeup_const + cfg.takeup_loading * Z + cfg.takeup_children * young
    D = (take_index + rng.standard_normal(n) >= 0).astype(np.int64)
    yA = cfg.transfer_base + cfg.transfer_step * (teen_age - 15)
    transfer = np.where(D == 1, yA, 0.0)

    # non-labor income with an endogenous component v
    assets = rng.standard_normal(n)
    v = _scaled_normal(rng, n, cfg.sigma_v)
    y = (cfg.y_mean + cfg.y_sd * assets + cfg.pi_iv * transfer
         + cfg.pi_iv2 * transfer**2 + cfg.pi_children * young + v)

    # common factor and idiosyncratic shocks
    eta = _scaled_normal(rng, n, cfg.sigma_eta)
    eps_w = _scaled_normal(rng, n, cfg.sigma_w)
    eps_s = _scaled_normal(rng, n, cfg.sigma_s)
    eps_t = _scaled_normal(rng, n, cfg.sigma_t)
    eps_h = _scaled_normal(rng, n, cfg.sigma_h)
    u_w = eta + eps_w + cfg.lambda_w * v
    u_s = cfg.chi_s * eta + eps_s + cfg.lambda_s * v
    u_t = cfg.chi_t * eta + eps_t + cfg.lambda_t * v
    u_h = cfg.chi_h * eta + eps_h

    # schooling decision; transfer recipients must attend
    Xt = np.column_stack([young, head_school])
    index = (rf["b0"] + rf["bt"] * wt + rf["bp"] * lnwp + rf["by"] * y
             + Xt @ np.asarray(cfg.beta_t) + u_t)
    s = np.where(D == 1, 1, (index >= 0).astype(np.int64))

    # home production: constant budget from the efficiency condition
    G = public_good_budget(cfg)
    a = cfg.alpha
    hp = cfg.home_hours_scale * a * G / wp * np.exp(0.5 * u_h)
    ht = cfg.home_hours_scale * (1 - a) * G / wt * np.exp(-0.5 * u_h)

    # parents' market time from the regime's Marshallian supply
    y_work = y + wt
    y_school = y + transfer
    lnG_minus_price = a * lnwp + (1 - a) * lnwt
    Xw = np.column_stack([young, region])
    if cfg.truth_kind == "unitary":
        rho_t_w = np.zeros(n)
        rho_t_s = np.zeros(n)
        theta_inc, theta_w, theta_K = cfg.theta_y, cfg.theta_w, cfg.theta_H_K
        inc_w, inc_s = y_work, y_school
    else:
        psi_index_w = cfg.psi_p * lnwp + cfg.psi_t * wt + cfg.psi_y * y
        psi_index_s = cfg.psi_p * lnwp + cfg.psi_t * wt + cfg.psi_y * y_school
        rho_t_w = cfg.kappa0 + psi_index_w
        rho_t_s = cfg.kappa1 + cfg.F_prime * psi_index_s
        theta_inc, theta_w, theta_K = cfg.theta_p_rho, cfg.theta_p_w, cfg.theta_p_K
        inc_w, inc_s = y_work - rho_t_w - G, y_school - rho_t_s - G
    # constants from kappa and G are absorbed so the configured intercepts hold
    if cfg.truth_kind == "unitary":
        shift_w = shift_s = 0.0
    else:
        shift_w = -theta_inc * (-cfg.kappa0 - G)
        shift_s = -theta_inc * (-cfg.kappa1 - G)
    w_const, s_const = cfg.intercepts()
    mp_work = (theta_w * lnwp + theta_inc * inc_w + theta_K * lnG_minus_price + shift_w
               + w_const + Xw @ np.asarray(cfg.beta_w) + u_w)
    mp_school = (theta_w * lnwp + theta_inc * inc_s + theta_K * lnG_minus_price + shift_s
                 + s_const + Xw @ np.asarray(cfg.beta_s) + u_s)
    mp = np.where(s == 1, mp_school, mp_work)
    parent_hours = np.maximum(mp, 0.0) * cfg.endowment

    rho_t = np.where(s == 1, rho_t_s, rho_t_w)
    y_star = np.where(s == 1, y_school, y_work)
    rho_p = y_star - rho_t - G

    teen_wage = wt if cfg.reveal_student_wages else np.where(s == 0, wt, np.nan)
    ids = np.array([f"h{i:06d}" for i in range(n)], dtype=object)
    cols = dict(
        id=ids, year=year, teen_gender=[cfg.gender] * n, teen_age=teen_age, schooling=s,
        teen_market_hours=np.where(s == 0, cfg.teen_work_hours, 0.0), teen_wage=teen_wage,
        teen_domestic_hours=ht, parent_wage=wp, parent_market_hours=parent_hours,
        parent_domestic_hours=hp, nonlabor_income=y, treated=D, transfer_amount=transfer,
        instrument=Z,
    )
    covs = dict(
        father_age=father_age, mother_age=mother_age, head_schooling_years=head_school,
        young_children=young, region=region, teen_schooling_years=teen_school_years,
        household_assets=assets,
    )
    dataset = Dataset(cols, covs)

    params = dict(rf)
    params.update(
        w_const=w_const, s_const=s_const, w_cf=cfg.lambda_w, s_cf=cfg.lambda_s,
        t_cf=cfg.lambda_t, h_const=math.log(a / (1 - a)),
        sigma_w=cfg.sigma_w, sigma_s=cfg.sigma_s, sigma_h=cfg.sigma_h, sigma_eta=cfg.sigma_eta,
        chi_s=cfg.chi_s, chi_t=cfg.chi_t, chi_h=cfg.chi_h, alpha=a, gamma_p=gp, gamma_y=gy,
        public_good=G,
    )
    for name, b in zip(X_WORK, cfg.beta_w):
        params[f"w_{name}"] = b
    for name, b in zip(X_SCHOOL, cfg.beta_s):
        params[f"s_{name}"] = b
    for name, b in zip(X_TEEN, cfg.beta_t):
        params[f"t_{name}"] = b
    if cfg.truth_kind == "collective":
        params.update(F_prime=cfg.F_prime, psi_p=cfg.psi_p, psi_t=cfg.psi_t, psi_y=cfg.psi_y,
                      theta_p_rho=cfg.theta_p_rho, theta_p_w=cfg.theta_p_w,
                      theta_p_K=cfg.theta_p_K, theta_t_K=cfg.theta_t_K)
    else:
        params.update(theta_y=cfg.theta_y, theta_w=cfg.theta_w, theta_H_K=cfg.theta_H_K)
    households = dict(
        id=ids, eta=eta, v=v, u_w=u_w, u_s=u_s, u_t=u_t, u_h=u_h, school_index=index,
        teen_wage=wt, mp_work=mp_work, mp_school=mp_school, rho_p=rho_p, rho_t=rho_t,
        public_good=np.full(n, G), y_star=y_star,
    )
    return dataset, TruthLedger(cfg.truth_kind, params, households)


def mte_covariance(m):
    """Covariance of (U0, U1, V); V has unit variance."""
    s0, s1 = m.sd_u0, m.sd_u1
    C = np.array([
        [s0 * s0, m.corr_u0_u1 * s0 * s1, m.corr_u0_v * s0],
        [m.corr_u0_u1 * s0 * s1, s1 * s1, m.corr_u1_v * s1],
        [m.corr_u0_v * s0, m.corr_u1_v * s1, 1.0],
    ])
    if np.min(np.linalg.eigvalsh(C)) < -1e-12:
        raise ConfigError("correlations of (U0, U1, V) do not form a PSD matrix")
    return C


def true_mte(m, u, xbar):
    """True MTE(xbar, u) for the scenario."""
    u = np.asarray(u, dtype=float)
    obs = m.mu1 - m.mu0 + np.dot(xbar, np.subtract(m.beta1, m.beta0))
    return obs + m.slope * ndtri(u)


def generate_mte_scenario(cfg):
    """Potential-outcome scenario with normal selection on unobservables.

    Returns a Dataset whose ``treated`` column is D, ``instrument`` is Z, and
    covariates ``x1``, ``x2``, ``outcome``. The ledger holds Y0, Y1, U_D, the
    true propensity and the true MTE parameters.
    """
    m = cfg.mte if isinstance(cfg, SimConfig) else cfg
    C = mte_covariance(m)
    rng = np.random.default_rng(m.seed)
    n = m.n
    X = rng.uniform(size=(n, 2))
    Z = rng.uniform(size=n)
    e = rng.standard_normal((n, 3))
    try:
        U = e @ np.linalg.cholesky(C).T
    except np.linalg.LinAlgError:
        # singular, e.g. U1 identical to U0
        w, V = np.linalg.eigh(C)
        U = e @ (V * np.sqrt(np.clip(w, 0, None))).T
    U0, U1, Vd = U[:, 0], U[:, 1], U[:, 2]
    mu_D = m.d_const + X @ np.asarray(m.d_x) + m.loading * Z
    P = ndtr(mu_D)
    UD = ndtr(Vd)
    D = (P >= UD).astype(np.int64)
    Y0 = m.mu0 + X @ np.asarray(m.beta0) + U0
    Y1 = m.mu1 + X @ np.asarray(m.beta1) + U1
    Y = np.where(D == 1, Y1, Y0)
    ids = np.array([f"m{i:06d}" for i in range(n)], dtype=object)
    ones = np.ones(n)
    cols = dict(
        id=ids, year=np.full(n, 2015), teen_gender=["son"] * n, teen_age=np.full(n, 16.0),
        schooling=np.ones(n, dtype=np.int64), teen_market_hours=np.zeros(n),
        teen_wage=np.full(n, np.nan), teen_domestic_hours=ones, parent_wage=ones,
        parent_market_hours=np.full(n, 48.0), parent_domestic_hours=ones,
        nonlabor_income=np.zeros(n), treated=D, transfer_amount=np.where(D == 1, 0.2, 0.0),
        instrument=Z,
    )
    dataset = Dataset(cols, {"x1": X[:, 0], "x2": X[:, 1], "outcome": Y}, validate=False)
    params = dict(mu0=m.mu0, mu1=m.mu1, slope=m.slope, loading=m.loading,
                  ate=m.mu1 - m.mu0 + float(X.mean(0) @ (np.subtract(m.beta1, m.beta0))))
    for j, (b0, b1) in enumerate(zip(m.beta0, m.beta1), start=1):
        params[f"beta0_x{j}"] = b0
        params[f"beta1_x{j}"] = b1
    households = dict(id=ids, Y0=Y0, Y1=Y1, U_D=UD, propensity=P)
    return dataset, TruthLedger("mte_scenario", params, households)


def config_dict(cfg):
    return asdict(cfg)
