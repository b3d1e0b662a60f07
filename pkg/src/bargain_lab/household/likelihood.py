"""Household likelihood with a common normal factor integrated by quadrature."""

import logging
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..data import Dataset
from ..errors import PrerequisiteError
from ..stats import gauss_hermite
from .layout import SCALE_NAMES, ModelSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HouseholdArrays:
    """Everything the likelihood needs, as contiguous arrays."""

    m: np.ndarray
    school: np.ndarray
    Dw: np.ndarray
    Ds: np.ndarray
    Dt: np.ndarray
    t_sign: np.ndarray
    h_obs: np.ndarray
    has_h: np.ndarray

    @property
    def n(self):
        return self.m.size


def prepare(d, spec):
    """Build design matrices from a prepared Dataset.

    Requires teen wages for every record (observed or imputed) and, when
    ``spec.use_cf``, the control-function residual.
    """
    if np.isnan(d.teen_wage).any():
        raise PrerequisiteError(
            f"{int(np.isnan(d.teen_wage).sum())} records lack a teen wage; run the 'impute' stage first")
    if spec.use_cf and np.isnan(d.cf_residual).any():
        raise PrerequisiteError("control-function residual missing; run the 'impute' stage first")
    n = len(d)
    wp, wt = d.parent_wage, d.teen_wage
    lnwp, lnwt = np.log(wp), np.log(wt)
    y = d.nonlabor_income
    y_star = y + d.transfer_amount * d.treated
    one = np.ones(n)
    cf = [d.cf_residual] if spec.use_cf else []
    Dw = np.column_stack([lnwp, wt, y, one] + cf + [d.covariate(x) for x in spec.x_work])
    Ds = np.column_stack([lnwp, wt, y_star, one] + cf + [d.covariate(x) for x in spec.x_school])
    Dt = np.column_stack([one, wt, lnwp, y] + cf + [d.covariate(x) for x in spec.x_teen])
    # ln w^t is shared across regimes; appended as the last column of both designs
    Dw = np.ascontiguousarray(np.column_stack([Dw, lnwt]))
    Ds = np.ascontiguousarray(np.column_stack([Ds, lnwt]))
    school = d.schooling == 1
    t_sign = np.where(d.treated == 1, 0, 2 * d.schooling - 1).astype(np.int8)
    hp, ht = d.parent_domestic_hours, d.teen_domestic_hours
    has_h = (hp > 0) & (ht > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h_obs = np.where(has_h, np.log(hp / ht) - np.log(wt / wp), 0.0)
    for name, X in (("work", Dw), ("school", Ds), ("schooling", Dt)):
        if not np.all(np.isfinite(X)):
            raise PrerequisiteError(f"non-finite values in the {name} design")
    return HouseholdArrays(
        m=np.ascontiguousarray(d.parent_market_hours / spec.endowment),
        school=school, Dw=Dw, Ds=Ds, Dt=np.ascontiguousarray(Dt),
        t_sign=np.ascontiguousarray(t_sign), h_obs=np.ascontiguousarray(h_obs),
        has_h=np.ascontiguousarray(has_h.astype(np.int8)),
    )


class Likelihood:
    """Total log-likelihood and score over households for a given spec.

    Call with a full parameter vector (see ``ModelSpec.names``).
    """

    def __init__(self, arrays, spec, nodes=None):
        self.a = arrays
        self.spec = spec
        q = spec.nodes if nodes is None else nodes
        x, w = gauss_hermite(q)
        self.nodes = np.ascontiguousarray(x)
        self.logw = np.ascontiguousarray(np.log(w))
        sl = spec.slices()
        self.sl = sl
        # block coefficient positions with the shared delta appended last
        self.w_pos = np.r_[sl["work"], sl["delta"]]
        self.s_pos = np.r_[sl["school"], sl["delta"]]
        self.n_bad = 0

    def _pieces(self, theta):
        with np.errstate(over="ignore"):
            return self._pieces_raw(theta)

    def _pieces_raw(self, theta):
        a = self.a
        sl = self.sl
        mu = np.where(a.school, a.Ds @ theta[self.s_pos], a.Dw @ theta[self.w_pos])
        tau = a.Dt @ theta[sl["teen"]]
        lsw, lss, lsh, lse, ls_, lt, lh = theta[sl["scales"]]
        sig_eta = np.exp(lse)
        sd = np.where(a.school, np.exp(lss), np.exp(lsw))
        load = np.where(a.school, ls_, sig_eta)
        h_res = a.h_obs - theta[sl["h_const"]]
        return mu, tau, sd, load, lt, h_res, np.exp(lsh), lh, sig_eta

    def per_household(self, theta, grad=False):
        mu, tau, sd, load, lt, h_res, hsd, lh, _ = self._pieces(np.asarray(theta, dtype=float))
        return _kernels.household_loglik(
            self.a.m, np.ascontiguousarray(mu), np.ascontiguousarray(sd), np.ascontiguousarray(load),
            np.ascontiguousarray(tau), float(lt), self.a.t_sign, np.ascontiguousarray(h_res),
            self.a.has_h, float(hsd), float(lh), self.nodes, self.logw, bool(grad),
        )

    def __call__(self, theta):
        ll, _ = self.per_household(theta)
        return self._total(ll)

    def _total(self, ll):
        bad = ~np.isfinite(ll)
        if bad.any():
            self.n_bad += int(bad.sum())
            log.debug("%d households with non-finite likelihood", int(bad.sum()))
            return -np.inf
        return float(np.sum(ll))

    def value_and_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        ll, G = self.per_household(theta, grad=True)
        total = self._total(ll)
        a = self.a
        sl = self.sl
        g = np.zeros(theta.size)
        if not np.isfinite(total):
            return total, np.full(theta.size, np.nan)
        sch = a.school
        g0w = np.where(sch, 0.0, G[:, 0])
        g0s = np.where(sch, G[:, 0], 0.0)
        g[self.w_pos] += a.Dw.T @ g0w
        g[self.s_pos] += a.Ds.T @ g0s
        g[sl["teen"]] = a.Dt.T @ G[:, 3]
        g[sl["h_const"]] = G[:, 5].sum()
        lsw, lss, lsh, lse, ls_, lt, lh = sl["scales"]
        sig_eta = np.exp(theta[lse])
        g[lsw] = G[~sch, 2].sum()
        g[lss] = G[sch, 2].sum()
        g[lsh] = G[:, 7].sum()
        g[lse] = sig_eta * G[~sch, 1].sum()
        g[ls_] = G[sch, 1].sum()
        g[lt] = G[:, 4].sum()
        g[lh] = G[:, 6].sum()
        return total, g


def loglik_from_dataset(d, spec, theta, nodes=None):
    return Likelihood(prepare(d, spec), spec, nodes)(theta)


def household_loglik(params, rec, spec=None, nodes=None):
    """Log-likelihood contribution of one household.

    Parameters
    ----------
    params : mapping or array_like
        Parameter values by name, or a full vector in ``spec.names`` order.
    rec : HouseholdRecord
        Complete record: teen wage present and, if used, ``cf_residual``.
    nodes : int, optional
        Quadrature nodes for the common factor; defaults to ``spec.nodes``.
    """
    spec = spec or ModelSpec()
    if isinstance(params, dict) or hasattr(params, "keys"):
        theta = np.array([params[k] for k in spec.names], dtype=float)
    else:
        theta = np.asarray(params, dtype=float)
    d = Dataset.from_records([rec], validate=False)
    ll, _ = Likelihood(prepare(d, spec), spec, nodes).per_household(theta)
    return float(ll[0])


def truth_vector(params, spec):
    """Full parameter vector from a simulator truth ledger's ``params``."""
    out = {}
    for k in spec.names:
        if k in params:
            out[k] = params[k]
    se = params["sigma_eta"]
    out["log_sigma_w"] = np.log(params["sigma_w"])
    out["log_sigma_s"] = np.log(params["sigma_s"])
    out["log_sigma_h"] = np.log(params["sigma_h"])
    out["log_sigma_eta"] = np.log(se)
    out["load_s"] = se * params["chi_s"]
    out["load_t"] = se * params["chi_t"]
    out["load_h"] = se * params["chi_h"]
    for k in spec.names:
        out.setdefault(k, 0.0)
    return np.array([out[k] for k in spec.names])


__all__ = ["HouseholdArrays", "Likelihood", "household_loglik", "loglik_from_dataset",
           "prepare", "truth_vector", "SCALE_NAMES"]
