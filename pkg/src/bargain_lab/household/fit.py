"""Maximum-likelihood fits of the unrestricted, unitary and collective models."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from ..errors import ConvergenceError, EstimationError, NestingError
from ..stats import maximize_loglik, ols_fit, probit_fit, symmetrize
from .layout import DF, KINDS, ModelSpec, expand, expand_jacobian, free_names, restriction_residuals
from .likelihood import Likelihood, prepare

log = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class ReducedFormEstimates:
    """Fitted switching-regression system.

    ``theta`` and ``covariance`` are in the full layout ``spec.names``; for
    restricted kinds the covariance is ``J V J'`` with ``J`` the Jacobian of
    the restriction map, so it is singular along the restricted directions.
    """

    kind: str
    spec: ModelSpec
    theta: np.ndarray
    covariance: np.ndarray
    loglik: float
    converged: bool
    n: int
    free: tuple
    alpha: float = None
    alpha_se: float = None
    info: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return float(self.theta[self.spec.names.index(name)])

    def __getattr__(self, name):
        spec = self.__dict__.get("spec")
        if spec is not None and name in spec.names:
            return self[name]
        raise AttributeError(name)

    def values(self):
        return dict(zip(self.spec.names, self.theta.tolist()))

    @property
    def se(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def se_of(self, name):
        return float(self.se[self.spec.names.index(name)])

    def sub_covariance(self, names):
        idx = [self.spec.names.index(k) for k in names]
        return self.covariance[np.ix_(idx, idx)]

    @property
    def sigma(self):
        v = self.values()
        return {j: float(np.exp(v[f"log_sigma_{j}"])) for j in ("w", "s", "h", "eta")}

    @property
    def chi(self):
        """Loadings relative to the work-regime equation (chi_w = 1)."""
        v = self.values()
        se = np.exp(v["log_sigma_eta"])
        return {"w": 1.0, "s": v["load_s"] / se, "t": v["load_t"] / se, "h": v["load_h"] / se}

    def constraint_residuals(self, kind=None):
        return restriction_residuals(self.values(), kind or self.kind)


def start_values(arrays, spec):
    """OLS for both regimes (shared delta) and probit on untreated households."""
    a = arrays
    sl = spec.slices()
    k = len(spec.names)
    theta = np.zeros(k)
    kw, ks = a.Dw.shape[1] - 1, a.Ds.shape[1] - 1
    sch = a.school
    X = np.zeros((a.n, kw + ks + 1))
    X[~sch, :kw] = a.Dw[~sch, :kw]
    X[sch, kw:kw + ks] = a.Ds[sch, :ks]
    X[:, -1] = np.where(sch, a.Ds[:, -1], a.Dw[:, -1])
    ols = ols_fit(X, a.m)
    b = ols.coefficients
    theta[sl["work"]] = b[:kw]
    theta[sl["school"]] = b[kw:kw + ks]
    theta[sl["delta"]] = b[-1]
    resid = ols.info["residuals"]
    use = a.t_sign != 0
    pr = probit_fit(a.Dt[use], (a.t_sign[use] > 0).astype(float))
    theta[sl["teen"]] = pr.coefficients
    h = a.h_obs[a.has_h == 1]
    theta[sl["h_const"]] = h.mean() if h.size else 0.0
    lsw, lss, lsh, lse, ls_, lt, lh = sl["scales"]
    theta[lsw] = np.log(max(resid[~sch].std(), 1e-3))
    theta[lss] = np.log(max(resid[sch].std(), 1e-3))
    theta[lsh] = np.log(max(h.std(), 1e-3)) if h.size > 1 else 0.0
    theta[lse] = np.log(0.01)
    theta[[ls_, lt, lh]] = 0.01
    return theta


def _fit_once(lik, spec, kind, theta_start, h_fixed, max_iter, covariance):
    names = free_names(spec, kind, h_fixed is not None)
    idx = [spec.names.index(n) for n in names]
    phi0 = theta_start[idx]

    def f(phi):
        return lik(expand(spec, kind, phi, h_fixed))

    def fg(phi):
        th = expand(spec, kind, phi, h_fixed)
        v, g = lik.value_and_grad(th)
        if kind == "unrestricted" and h_fixed is None:
            return v, g
        return v, expand_jacobian(spec, kind, phi, h_fixed).T @ g

    res = maximize_loglik(f, phi0, names=names, n=lik.a.n, max_iter=max_iter,
                          compute_covariance=covariance, fun_and_grad=fg,
                          hessian_start=max_iter > 0)
    return res


def fit_model(d, kind="unrestricted", spec=None, alpha=None, joint=False, starts=(),
              max_iter=1000, covariance=True, arrays=None):
    """Maximize the household likelihood under ``kind`` restrictions.

    Parameters
    ----------
    d : Dataset
        Prepared data (teen wages present, control-function residual attached).
    kind : {"unrestricted", "unitary", "collective"}
    alpha : (value, se) or None
        First-pass home-production estimate. When given and ``joint`` is
        false, the home-production intercept is held at ``ln(alpha/(1-alpha))``.
    starts : sequence of full parameter vectors
        Extra starting points; the best optimum is kept. Used to guarantee that
        the unrestricted fit is at least as good as restricted ones.
    covariance : bool
        Skip the Hessian when false (covariance is NaN).
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    spec = spec or ModelSpec()
    arrays = arrays if arrays is not None else prepare(d, spec)
    lik = Likelihood(arrays, spec)
    h_fixed = None
    if alpha is not None and not joint:
        a = alpha[0]
        h_fixed = float(np.log(a / (1 - a)))
    base = start_values(arrays, spec)
    if h_fixed is not None:
        base[spec.names.index("h_const")] = h_fixed
    candidates = [base] + [np.asarray(s, dtype=float) for s in starts]
    best = None
    for th0 in candidates:
        th0 = th0.copy()
        if h_fixed is not None:
            th0[spec.names.index("h_const")] = h_fixed
        try:
            res = _fit_once(lik, spec, kind, th0, h_fixed, max_iter, False)
        except ValueError as exc:
            log.debug("start rejected: %s", exc)
            continue
        if best is None or res.loglik > best.loglik:
            best = res
    if best is None:
        raise EstimationError(f"{kind} fit: no starting point had a finite likelihood")
    phi = best.coefficients
    theta = expand(spec, kind, phi, h_fixed)
    k = len(spec.names)
    if covariance:
        res = _fit_once(lik, spec, kind, theta, h_fixed, 0, True)
        J = expand_jacobian(spec, kind, phi, h_fixed)
        cov = symmetrize(J @ res.covariance @ J.T)
    else:
        cov = np.full((k, k), np.nan)
    out = ReducedFormEstimates(
        kind=kind, spec=spec, theta=theta, covariance=cov, loglik=best.loglik,
        converged=best.converged, n=arrays.n, free=best.names,
        alpha=None if alpha is None else float(alpha[0]),
        alpha_se=None if alpha is None else float(alpha[1]),
        info=dict(best.info, joint_alpha=bool(joint or alpha is None), n_bad=lik.n_bad,
                  n_work=int((~arrays.school).sum()), n_school=int(arrays.school.sum()),
                  n_teen=int((arrays.t_sign != 0).sum())),
    )
    if kind != "unrestricted":
        r = np.max(np.abs(out.constraint_residuals()))
        if r > CONSTRAINT_TOL:
            raise EstimationError(f"{kind} restrictions violated at the optimum (max residual {r:.3g})")
    if not out.converged:
        log.warning("%s fit did not converge: %s", kind, best.info.get("message"))
    return out


@dataclass(frozen=True)
class LRTest:
    stat: float
    df: int
    p: float


def lr_pvalue(stat, df):
    return float(chi2.sf(stat, df))


def lr_test(restricted, unrestricted, df=None):
    """Likelihood-ratio test of ``restricted`` against ``unrestricted``.

    ``restricted``/``unrestricted`` may be fits or log-likelihood values. The
    default ``df`` is 4 for unitary and 2 for collective restrictions.
    """
    lr = getattr(restricted, "loglik", restricted)
    lu = getattr(unrestricted, "loglik", unrestricted)
    if df is None:
        kind = getattr(restricted, "kind", None)
        if kind not in DF:
            raise ValueError("df is required when the restricted kind is unknown")
        df = DF[kind]
    if lr > lu + 1e-6:
        raise NestingError(f"restricted log-likelihood {lr:.6f} exceeds unrestricted {lu:.6f}")
    stat = max(0.0, 2.0 * (lu - lr))
    return LRTest(stat=stat, df=int(df), p=lr_pvalue(stat, df))


def fit_all(d, spec=None, alpha=None, joint=False, covariance=True, kinds=KINDS, max_iter=1000):
    """Fit restricted kinds first, then the unrestricted model started from their optima."""
    spec = spec or ModelSpec()
    arrays = prepare(d, spec)
    out = {}
    for kind in kinds:
        if kind == "unrestricted":
            continue
        out[kind] = fit_model(d, kind, spec, alpha, joint, covariance=covariance,
                              arrays=arrays, max_iter=max_iter)
    if "unrestricted" in kinds:
        starts = [f.theta for f in out.values()]
        out["unrestricted"] = fit_model(d, "unrestricted", spec, alpha, joint, starts=starts,
                                        covariance=covariance, arrays=arrays, max_iter=max_iter)
    return out


__all__ = ["ReducedFormEstimates", "LRTest", "fit_model", "fit_all", "lr_test", "lr_pvalue",
           "start_values", "ConvergenceError"]
