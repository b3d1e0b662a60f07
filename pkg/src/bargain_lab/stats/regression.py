"""Linear, probit and two-step selection regressions."""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import log_ndtr, ndtr

from ..errors import ConvergenceError, SingularDesignError
from .results import FitResult, symmetrize

LOG_2PI_HALF = 0.5 * np.log(2.0 * np.pi)


def _as_design(X, names):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    names = tuple(names)
    if len(names) != X.shape[1]:
        raise ValueError(f"{len(names)} names for {X.shape[1]} columns")
    if not np.all(np.isfinite(X)):
        raise ValueError("design matrix contains non-finite values")
    return X, names


def check_rank(X, names):
    """Raise ``SingularDesignError`` naming the columns that add no rank."""
    n, k = X.shape
    if n <= k:
        raise SingularDesignError(f"need n > k, got n={n}, k={k}")
    # scale columns so the tolerance is unit-free
    scale = np.sqrt((X**2).sum(0))
    scale[scale == 0] = 1.0
    _, R, piv = scipy.linalg.qr(X / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, k) * np.finfo(float).eps * 100 * (diag[0] if diag.size else 1.0)
    rank = int((diag > tol).sum())
    if rank < k:
        bad = [names[j] for j in piv[rank:]]
        raise SingularDesignError(
            f"design is rank deficient ({rank} < {k}); collinear columns: {', '.join(bad)}", bad
        )


def ols_fit(X, y, names=None, robust=False):
    """Least squares with classical covariance ``s^2 (X'X)^-1``.

    With ``robust`` the covariance is the HC1 sandwich instead.
    """
    X, names = _as_design(X, names)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise ValueError("y must be a vector with one entry per row of X")
    check_rank(X, names)
    n, k = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    s2 = float(resid @ resid) / (n - k)
    xtx_inv = np.linalg.inv(X.T @ X)
    if robust:
        meat = (X * (resid**2)[:, None]).T @ X
        cov = n / (n - k) * xtx_inv @ meat @ xtx_inv
    else:
        cov = s2 * xtx_inv
    return FitResult(
        names, beta, symmetrize(cov), n,
        info={"sigma2": s2, "residuals": resid, "rss": float(resid @ resid)},
    )


def inverse_mills(z):
    """phi(z) / Phi(z), stable in both tails."""
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z**2 - LOG_2PI_HALF - log_ndtr(z))


def probit_loglik(beta, X, d):
    q = (2.0 * d - 1.0) * (X @ beta)
    return float(log_ndtr(q).sum())


def probit_fit(X, d, names=None, start=None, tol=1e-9, max_iter=100):
    """Probit by Newton-Raphson on the exact log-likelihood.

    Covariance is the inverse observed information at the optimum.
    """
    X, names = _as_design(X, names)
    d = np.asarray(d, dtype=float)
    if d.shape != (X.shape[0],) or not np.all((d == 0) | (d == 1)):
        raise ValueError("d must be a 0/1 vector with one entry per row of X")
    check_rank(X, names)
    n, k = X.shape
    sign = 2.0 * d - 1.0
    beta = np.zeros(k) if start is None else np.asarray(start, dtype=float).copy()
    ll = probit_loglik(beta, X, d)
    converged = False
    for it in range(1, max_iter + 1):
        q = sign * (X @ beta)
        lam = inverse_mills(q)
        grad = X.T @ (sign * lam)
        w = lam * (lam + q)
        hess = -(X * w[:, None]).T @ X
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-10:
            cand = beta + t * step
            ll_new = probit_loglik(cand, X, d)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        beta, ll = cand, ll_new
        if np.max(np.abs(X @ beta)) > 37.0:
            break
    index = X @ beta
    extreme = int((np.abs(index) > 8.0).sum())
    if not converged or np.max(np.abs(index)) > 37.0:
        raise ConvergenceError(
            "probit did not converge; perfect or quasi-complete separation suspected "
            f"({extreme} of {n} observations have |index| > 8, max |coef| = {np.max(np.abs(beta)):.3g})"
        )
    q = sign * index
    lam = inverse_mills(q)
    grad = X.T @ (sign * lam)
    info_mat = (X * (lam * (lam + q))[:, None]).T @ X
    cov = np.linalg.inv(info_mat)
    return FitResult(
        names, beta, cov, n, loglik=ll, converged=True,
        info={"iterations": it, "grad_norm": float(np.max(np.abs(grad)))},
    )


@dataclass(frozen=True)
class HeckmanResult:
    participation: FitResult
    outcome: FitResult
    imr_coef: float
    imr_se: float
    rho: float
    sigma: float
    no_exclusion: bool

    @property
    def fit(self):
        return self.outcome


def second_step(X, y, imr, names):
    """Outcome regression on ``[X, imr]``; an all-zero IMR column is dropped."""
    if np.all(imr == 0):
        fit = ols_fit(X, y, names)
        return fit, 0.0
    fit = ols_fit(np.column_stack([X, imr]), y, tuple(names) + ("imr",))
    return fit, fit["imr"]


def heckman_two_step(Z, participate, X, y, z_names=None, x_names=None):
    """Two-step selection correction.

    ``Z``/``participate`` cover the full sample; ``X``/``y`` rows are used only
    where ``participate == 1`` (other rows of ``y`` may be NaN). The outcome
    covariance uses the two-step correction for the estimated Mills ratio.
    """
    Z, z_names = _as_design(Z, z_names)
    part = np.asarray(participate, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if x_names is None:
        x_names = [f"x{j}" for j in range(X.shape[1])]
    x_names = tuple(x_names)
    excluded = set(z_names) - set(x_names)
    no_exclusion = len(excluded) == 0
    if no_exclusion:
        warnings.warn("participation equation has no exclusion restriction", stacklevel=2)

    probit = probit_fit(Z, part, z_names)
    sel = part == 1
    zg = Z[sel] @ probit.coefficients
    lam = inverse_mills(zg)
    Xs, ys = X[sel], np.asarray(y, dtype=float)[sel]
    Xs, x_names = _as_design(Xs, x_names)
    fit, b_lam = second_step(Xs, ys, lam, x_names)

    n1 = Xs.shape[0]
    delta = lam * (lam + zg)
    resid = fit.info["residuals"]
    sigma2 = float(resid @ resid) / n1 + b_lam**2 * float(delta.mean())
    sigma = float(np.sqrt(sigma2))
    rho = b_lam / sigma

    Xstar = np.column_stack([Xs, lam])
    xtx_inv = np.linalg.inv(Xstar.T @ Xstar)
    inner = (Xstar * (1.0 - rho**2 * delta)[:, None]).T @ Xstar
    xdz = (Xstar * delta[:, None]).T @ Z[sel]
    Q = rho**2 * xdz @ probit.covariance @ xdz.T
    cov = sigma2 * xtx_inv @ (inner + Q) @ xtx_inv
    coef = np.append(fit.coefficients, b_lam) if "imr" not in fit.names else fit.coefficients
    names = tuple(x_names) + ("imr",)
    outcome = FitResult(
        names, coef, cov, n1,
        info={"sigma2": sigma2, "residuals": resid, "no_exclusion": no_exclusion},
    )
    return HeckmanResult(
        participation=probit,
        outcome=outcome,
        imr_coef=float(b_lam),
        imr_se=float(np.sqrt(cov[-1, -1])),
        rho=float(rho),
        sigma=sigma,
        no_exclusion=no_exclusion,
    )
