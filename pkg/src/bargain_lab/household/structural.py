"""Home-production share, reservation-wage frontier and sharing-rule recovery."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import AmbiguousRootError, DegenerateRegimesError, EstimationError, RecoveryError
from ..stats import delta_cov, delta_method

CHAIN_NAMES = ("gamma_p", "gamma_y", "F_prime", "psi_p", "psi_t", "psi_y",
               "theta_p_rho", "theta_p_w", "theta_p_K")
INPUT_NAMES = ("at", "ay", "Ay", "ap_star", "delta", "bt", "bp", "by")


class SingularFrontierError(EstimationError):
    pass


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    se: float
    intercept: float
    intercept_se: float
    n: int

    @property
    def teen_share(self):
        return 1.0 - self.alpha


def alpha_from_intercept(c):
    """Cobb-Douglas exponent implied by the log-ratio intercept."""
    return float(np.exp(c) / (1.0 + np.exp(c)))


def estimate_alpha(d):
    """Parents' Cobb-Douglas exponent from domestic hours.

    Regresses ``ln(h^p/h^t) - ln(w^t/w^p)`` on a constant over households with
    both domestic hours positive and a teen wage; the SE of alpha comes from
    the delta method on the logistic transform.
    """
    hp, ht, wp, wt = d.parent_domestic_hours, d.teen_domestic_hours, d.parent_wage, d.teen_wage
    use = (hp > 0) & (ht > 0) & np.isfinite(wt)
    if not use.any():
        raise EstimationError("no household with positive domestic hours for both members and a teen wage")
    r = np.log(hp[use] / ht[use]) - np.log(wt[use] / wp[use])
    n = r.size
    c = float(r.mean())
    if not np.isfinite(c):
        raise EstimationError("home-production intercept is not finite")
    c_se = float(r.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    se = float(delta_method(lambda t: np.exp(t) / (1 + np.exp(t)), np.array([c]),
                            np.array([[c_se**2]]))[0]) if n > 1 else float("nan")
    return AlphaEstimate(alpha_from_intercept(c), se, c, c_se, n)


@dataclass(frozen=True)
class ReservationWage:
    gamma_p: float
    gamma_y: float
    se_p: float
    se_y: float
    covariance: np.ndarray


def reservation_wage(bt, bp, by, cov=None):
    """Frontier slopes ``gamma_p = -bp/bt`` and ``gamma_y = -by/bt``.

    ``cov`` is the 3x3 covariance of ``(bt, bp, by)``; SEs are NaN without it.
    """
    if abs(bt) < 1e-10:
        raise SingularFrontierError("|b_t| < 1e-10: the reservation-wage frontier is not defined")
    g = lambda t: np.array([-t[1] / t[0], -t[2] / t[0]])  # noqa: E731
    theta = np.array([bt, bp, by], dtype=float)
    val = g(theta)
    if cov is None:
        V = np.full((2, 2), np.nan)
    else:
        _, V = delta_cov(g, theta, cov)
    se = np.sqrt(np.clip(np.diag(V), 0, None)) if cov is not None else np.full(2, np.nan)
    return ReservationWage(float(val[0]), float(val[1]), float(se[0]), float(se[1]), V)


def f_prime_roots(a, b, gamma_y):
    """Roots of the quadratic in F' (possibly complex)."""
    c2 = gamma_y * b * a - 1 + a - gamma_y * b
    c1 = -b + 1 - 2 * gamma_y * b * a + gamma_y * a - a
    c0 = b + gamma_y * b * a
    if abs(c2) < 1e-14:
        return np.array([-c0 / c1]) if c1 != 0 else np.array([])
    return np.roots([c2, c1, c0])


def _psis(a, b, F, gamma_p, gamma_y):
    psi_t = b / (a - b) * (a - 1 - a / F)
    psi_y = 1 / (a - b) * (a - 1 - b / F)
    return psi_t, psi_y, gamma_p / gamma_y * psi_y


def sharing_chain(at, ay, Ay, gamma_p, gamma_y, ap_star=np.nan, delta=np.nan, alpha=np.nan,
                  near=None):
    """Sharing-rule parameters from collective reduced forms.

    Parameters
    ----------
    at, ay, Ay : float
        School-regime teen-wage and income coefficients; work-regime income
        coefficient.
    gamma_p, gamma_y : float
        Reservation-wage frontier slopes.
    ap_star, delta, alpha : float, optional
        Needed only for ``theta_p_w`` and ``theta_p_K``.
    near : float, optional
        Select the admissible root closest to this value instead of demanding
        a unique admissible root (used for finite differences).

    Returns
    -------
    dict
        Keys ``CHAIN_NAMES`` plus ``roots`` and ``At``.
    """
    At = at - (Ay - ay) / gamma_y
    a = At / Ay
    b = at / ay
    if abs(a - b) < 1e-10:
        raise DegenerateRegimesError("|a - b| < 1e-10: regime coefficient ratios coincide")
    roots = f_prime_roots(a, b, gamma_y)
    real = [float(r.real) for r in roots if abs(complex(r).imag) < 1e-12 and r.real != 0]
    valid = []
    for F in real:
        psi_t, psi_y, psi_p = _psis(a, b, F, gamma_p, gamma_y)
        if abs((1 - F) * psi_t) < 1:
            valid.append(F)
    if near is not None and valid:
        F = min(valid, key=lambda r: abs(r - near))
    elif len(valid) == 1:
        F = valid[0]
    elif not valid:
        shown = ", ".join(f"{complex(r):.6g}" for r in roots)
        raise RecoveryError(f"no root of the F' quadratic satisfies |(1 - F')psi_t| < 1 (roots: {shown})")
    else:
        raise AmbiguousRootError(
            f"both roots {valid[0]:.6g} and {valid[1]:.6g} satisfy the sufficiency condition; "
            "select one manually")
    psi_t, psi_y, psi_p = _psis(a, b, F, gamma_p, gamma_y)
    theta_rho = Ay / (1 - psi_y)
    theta_K = delta / (1 - alpha)
    Ap_star = ap_star + (Ay - ay) * gamma_p / gamma_y
    Ap = Ap_star - theta_K * alpha
    theta_w = Ap + theta_rho * psi_p
    return dict(gamma_p=gamma_p, gamma_y=gamma_y, F_prime=F, psi_p=psi_p, psi_t=psi_t, psi_y=psi_y,
                theta_p_rho=theta_rho, theta_p_w=theta_w, theta_p_K=theta_K,
                roots=tuple(complex(r) for r in roots), At=At)


@dataclass(frozen=True)
class StructuralParams:
    """Recovered structural parameters with delta-method SEs.

    The sharing function is identified only up to the constants kappa0 and
    kappa1, listed in ``unidentified``.
    """

    alpha: float
    gamma_p: float
    gamma_y: float
    F_prime: float
    psi_p: float
    psi_t: float
    psi_y: float
    theta_p_rho: float
    theta_p_w: float
    theta_p_K: float
    theta_H_K: float = None
    ses: dict = field(default_factory=dict)
    covariance: np.ndarray = None
    roots: tuple = ()
    unidentified: tuple = ("kappa0", "kappa1")

    def as_dict(self):
        return {k: getattr(self, k) for k in ("alpha",) + CHAIN_NAMES}


def recover_sharing_rule(est, gammas=None, alpha=None):
    """Sharing-rule parameters from a collective fit.

    Parameters
    ----------
    est : ReducedFormEstimates or mapping
        Collective estimates. A plain mapping needs ``at, ay, Ay`` and may
        carry ``ap_star, delta``; SEs are then NaN.
    gammas : (gamma_p, gamma_y) or ReservationWage, optional
        Frontier slopes. Defaults to the ratios of the fitted schooling index.
    alpha : (value, se), optional
        Home-production exponent; defaults to the one stored on ``est``.
    """
    if hasattr(est, "kind"):
        if est.kind != "collective":
            raise ValueError("sharing-rule recovery needs collective estimates")
        values = est.values()
        cov = est.sub_covariance(INPUT_NAMES)
        if alpha is None and est.alpha is not None:
            alpha = (est.alpha, est.alpha_se if est.alpha_se is not None else np.nan)
    else:
        values = dict(est)
        cov = None
    if alpha is None:
        alpha = (np.nan, np.nan)
    if gammas is None:
        if "bt" not in values:
            raise ValueError("gammas are required when the schooling index is not supplied")
        gp, gy = -values["bp"] / values["bt"], -values["by"] / values["bt"]
        from_index = True
    else:
        gp, gy = (gammas.gamma_p, gammas.gamma_y) if hasattr(gammas, "gamma_p") else gammas
        from_index = False
    if abs(values["Ay"] - values["ay"]) < 1e-12:
        raise DegenerateRegimesError("A_y equals a_y: income effects do not switch across regimes")

    base = sharing_chain(values["at"], values["ay"], values["Ay"], gp, gy,
                         values.get("ap_star", np.nan), values.get("delta", np.nan), alpha[0])

    ses = {k: np.nan for k in CHAIN_NAMES}
    ses["alpha"] = float(alpha[1])
    V = None
    if cov is not None:
        p = np.array([values[k] for k in INPUT_NAMES] + [alpha[0]])
        Vp = np.zeros((p.size, p.size))
        Vp[:-1, :-1] = cov
        Vp[-1, -1] = alpha[1] ** 2 if np.isfinite(alpha[1]) else 0.0

        def g(t):
            at, ay, Ay, ap, delta, bt, bp, by, al = t
            g_p, g_y = (-bp / bt, -by / bt) if from_index else (gp, gy)
            out = sharing_chain(at, ay, Ay, g_p, g_y, ap, delta, al, near=base["F_prime"])
            return np.array([out[k] for k in CHAIN_NAMES])

        finite = np.isfinite(p)
        if finite.all():
            _, V = delta_cov(g, p, Vp)
            se = np.sqrt(np.clip(np.diag(V), 0, None))
            ses.update(dict(zip(CHAIN_NAMES, se.tolist())))
    return StructuralParams(
        alpha=float(alpha[0]), ses=ses, covariance=V, roots=base["roots"],
        **{k: float(base[k]) for k in CHAIN_NAMES},
    )
