"""Marginal treatment effects by the separate approach.

The treated and untreated outcome equations are fitted separately as
``E[Y | X, P, D=1] = X b1 + K1(P)`` and ``E[Y | X, P, D=0] = X b0 + K0(P)``.
The MTE at resistance ``u`` is then

    MTE(x, u) = x (b1 - b0) + d/du[u K1(u)] + d/du[(1 - u) K0(u)]
              = x (b1 - b0) + K1 + u K1' - K0 + (1 - u) K0'.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import chi2, norm

from .aux_regressions import column
from .errors import InputError, NoSupportError, SingularDesignError
from .output import new_figure, save_svg, write_table
from .stats import FitResult, bootstrap, local_poly_fit, ols_fit, probit_fit, silverman_bandwidth

METHODS = ("parametric_deg1", "polynomial", "semiparametric_deg2")
CELL = 0.01
GRID_STEP = 0.01
LEVEL = 0.05
# points on which nuisance smooths are evaluated before interpolation
SMOOTH_POINTS = 201
# grid points compared by the semiparametric unobservable test
TEST_POINTS = 5


@dataclass(frozen=True)
class PropensityFit:
    """First-stage probit of treatment on covariates and the instrument."""

    probit: FitResult
    scores: np.ndarray
    instrument_name: str
    covariates: tuple
    design: np.ndarray = field(repr=False)
    weak_instrument: bool = False

    @property
    def instrument_coef(self):
        return self.probit[self.instrument_name]

    @property
    def instrument_se(self):
        return self.probit.se_of(self.instrument_name)

    @property
    def strength(self):
        """Wald statistic of the instrument coefficient."""
        return (self.instrument_coef / self.instrument_se) ** 2

    def scores_at(self, coef):
        return ndtr(self.design @ coef)


def estimate_propensity(d, covariates, instrument="instrument", level=LEVEL):
    """Probit of ``treated`` on a constant, ``covariates`` and ``instrument``.

    The result carries a weak-instrument flag when the instrument is not
    significant at ``level``.
    """
    covariates = tuple(covariates)
    if instrument in covariates:
        raise InputError(f"instrument {instrument!r} is also listed as a covariate")
    D = np.asarray(d.treated)
    if not np.all((D == 0) | (D == 1)):
        raise InputError("treated indicator must be 0/1")
    names = ("const",) + covariates + (instrument,)
    try:
        cols = [np.ones(len(d))] + [column(d, k) for k in covariates + (instrument,)]
    except KeyError as exc:
        raise InputError(f"first stage: unknown column {exc}") from None
    X = np.column_stack(cols)
    fit = probit_fit(X, D, names)
    scores = ndtr(X @ fit.coefficients)
    if not np.all((scores > 0) & (scores < 1)):
        raise NoSupportError("propensity scores reach 0 or 1; overlap fails")
    z = fit[instrument] / fit.se_of(instrument)
    weak = bool(abs(z) < norm.ppf(1 - level / 2))
    return PropensityFit(fit, scores, instrument, covariates, X, weak)


@dataclass(frozen=True)
class Support:
    lo: float
    hi: float
    retained: float
    cells: int

    def contains(self, p):
        return (p >= self.lo) & (p <= self.hi)


def common_support(scores, treated, width=CELL):
    """Score interval where treated and untreated units overlap.

    The overlap of the two arms' score ranges is cut back to the outermost
    cells of ``width`` that hold both treated and untreated units.

    Parameters
    ----------
    scores : array_like or PropensityFit
    treated : array_like
        0/1 indicator aligned with ``scores``.

    Returns
    -------
    Support
        Interval ends, share of the sample inside and the number of mixed cells.
    """
    p = np.asarray(getattr(scores, "scores", scores), dtype=float)
    D = np.asarray(treated)
    if p.shape != D.shape:
        raise ValueError("scores and treated must align")
    p1, p0 = p[D == 1], p[D == 0]
    if p1.size == 0 or p0.size == 0:
        raise NoSupportError("common support needs both treated and untreated units")
    lo, hi = max(p1.min(), p0.min()), min(p1.max(), p0.max())
    if lo > hi:
        raise NoSupportError(f"treated and untreated score ranges do not overlap ({lo:.3f} > {hi:.3f})")
    cell = np.floor(p / width).astype(np.int64)
    mixed = np.intersect1d(cell[D == 1], cell[D == 0])
    if mixed.size == 0:
        raise NoSupportError(f"no score cell of width {width} holds both treated and untreated units")
    lo = max(lo, mixed.min() * width)
    hi = min(hi, (mixed.max() + 1) * width)
    inside = (p >= lo) & (p <= hi)
    return Support(float(lo), float(hi), float(inside.mean()), int(mixed.size))


def default_grid(support, step=GRID_STEP):
    k = np.arange(np.ceil(support.lo / step - 1e-9), np.floor(support.hi / step + 1e-9) + 1)
    grid = np.round(k * step, 10)
    return grid[(grid > 0) & (grid < 1)]


@dataclass(frozen=True)
class MteCurve:
    """MTE on a grid of resistance quantiles, at covariate means.

    ``mte`` is NaN at grid points where the curve is undefined (outside the
    support or without enough local data). ``observed_part`` maps each
    regressor, including ``const``, to its treated-untreated coefficient gap.
    """

    u_grid: np.ndarray
    mte: np.ndarray
    se: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    observed_part: dict
    support: Support
    method: str
    xbar: dict
    fits: tuple = field(repr=False, default=())
    gradient: np.ndarray = field(repr=False, default=None)
    covariance: np.ndarray = field(repr=False, default=None)
    replicates: np.ndarray = field(repr=False, default=None)
    info: dict = field(default_factory=dict)

    @property
    def observable_gap(self):
        """Treated-untreated coefficient gaps of the covariates, without the intercept."""
        return np.array([v for k, v in self.observed_part.items() if k != "const"])


# --- K-function bases -------------------------------------------------------

def _basis(p, treated, method, degree):
    """Columns of K_j(p) besides the intercept, with their MTE weights.

    Returns ``(cols, names, weight)`` where ``weight(u)`` gives, for each
    column, the derivative term it contributes to the MTE at ``u``.
    """
    if method == "parametric_deg1":
        q = ndtri(p)
        phi = norm.pdf(q)
        if treated:
            # E[U1 | U_D <= p] = -kappa1 phi(q) / p; d/du[u K1] = kappa1 q
            return (-phi / p)[:, None], ("kappa",), lambda u: ndtri(u)[:, None]
        # E[U0 | U_D > p] = kappa0 phi(q) / (1 - p); d/du[(1 - u) K0] = -kappa0 q
        return (phi / (1 - p))[:, None], ("kappa",), lambda u: -ndtri(u)[:, None]
    powers = np.arange(1, degree + 1)
    cols = p[:, None] ** powers
    names = tuple(f"p{k}" for k in powers)
    if treated:
        return cols, names, lambda u: (powers + 1) * u[:, None] ** powers
    return cols, names, lambda u: powers * u[:, None] ** (powers - 1) - (powers + 1) * u[:, None] ** powers


def k_functions(fit, u, method, degree, treated):
    """``K_j(u)`` and ``K_j'(u)`` from a fitted arm, intercept included."""
    u = np.asarray(u, dtype=float)
    a = fit["const"]
    if method == "parametric_deg1":
        q = ndtri(u)
        phi = norm.pdf(q)
        kap = fit["kappa"]
        if treated:
            return a - kap * phi / u, kap * (q * u + phi) / u**2
        return a + kap * phi / (1 - u), kap * (phi - q * (1 - u)) / (1 - u) ** 2
    powers = np.arange(1, degree + 1)
    c = np.array([fit[f"p{k}"] for k in powers])
    return a + (u[:, None] ** powers) @ c, (powers * u[:, None] ** (powers - 1)) @ c


def separate_mte(u, K1, dK1, K0, dK0, observed=0.0):
    """``observed + d/du[u K1] + d/du[(1 - u) K0]`` from K values and slopes."""
    u = np.asarray(u, dtype=float)
    return observed + K1 + u * dK1 - K0 + (1 - u) * dK0


def _arm_design(X, p, treated, method, degree):
    cols, names, _ = _basis(p, treated, method, degree)
    return np.column_stack([np.ones(p.size), X, cols]), names


def _parametric_arms(X, y, D, p, method, degree, xnames):
    fits = []
    for treated in (1, 0):
        m = D == treated
        Z, knames = _arm_design(X[m], p[m], treated, method, degree)
        fits.append(ols_fit(Z, y[m], ("const",) + xnames + knames, robust=True))
    return fits


def _gradient(u, xbar, method, degree):
    """Row ``g(u)`` with ``MTE(u) = g(u) . (theta1, theta0)``."""
    nx = xbar.size
    ones = np.ones((u.size, 1))
    xb = np.broadcast_to(xbar, (u.size, nx))
    parts = []
    for treated, sign in ((1, 1.0), (0, -1.0)):
        _, _, weight = _basis(np.array([0.5]), treated, method, degree)
        parts.append(np.column_stack([sign * ones, sign * xb, weight(u)]))
    return np.column_stack(parts)


def _first_stage_jacobian(fit, keep, X, y, D, method, degree, xnames):
    """Derivative of the stacked arm coefficients with respect to the probit coefficients."""

    def theta(gamma):
        p = fit.scores_at(gamma)[keep]
        return np.concatenate([f.coefficients for f in _parametric_arms(X, y, D, p, method, degree, xnames)])

    g0 = fit.probit.coefficients
    h = np.maximum(1e-5, 1e-5 * np.abs(g0))
    J = np.empty((theta(g0).size, g0.size))
    for k in range(g0.size):
        e = np.zeros_like(g0)
        e[k] = h[k]
        J[:, k] = (theta(g0 + e) - theta(g0 - e)) / (2 * h[k])
    return J


# --- semiparametric ---------------------------------------------------------

def _smooth_at_points(p, series, bandwidth, degree=1):
    """Local-polynomial fits of each column of ``series`` on ``p``, read back at ``p``.

    The smooths are evaluated on an even grid and interpolated, which keeps
    the cost linear in the sample size.
    """
    grid = np.linspace(p.min(), p.max(), SMOOTH_POINTS)
    out = np.empty_like(series)
    for j in range(series.shape[1]):
        s = local_poly_fit(p, series[:, j], degree=degree, bandwidth=bandwidth, grid=grid)
        ok = np.isfinite(s.fitted)
        if ok.sum() < 2:
            raise NoSupportError("too few observations per window to partial out the score")
        out[:, j] = np.interp(p, grid[ok], s.fitted[ok])
    return out


def _semiparametric_arm(X, y, p, u, xnames, bandwidth):
    """Partially linear fit ``y = X b + K(p)``: Robinson's double residual, then a degree-2 smooth of K."""
    h = silverman_bandwidth(p) if bandwidth is None else float(bandwidth)
    both = np.column_stack([y, X])
    fitted = _smooth_at_points(p, both, h)
    r = both - fitted
    b = ols_fit(r[:, 1:], r[:, 0], xnames, robust=True)
    resid = y - X @ b.coefficients
    inside = (u >= p.min()) & (u <= p.max())
    K = np.full(u.size, np.nan)
    dK = np.full(u.size, np.nan)
    if inside.any():
        s = local_poly_fit(p, resid, degree=2, bandwidth=h, grid=u[inside])
        K[inside], dK[inside] = s.fitted, s.derivative
    return b, K, dK, h


# --- estimation -------------------------------------------------------------

def _outcome(d, outcome):
    try:
        return column(d, outcome)
    except KeyError:
        raise InputError(f"unknown outcome column {outcome!r}") from None


def mte_separate(d, fit, method="parametric_deg1", u_grid=None, outcome="outcome", covariates=None,
                 support=None, degree=1, bandwidth=None, first_stage=True):
    """MTE curve at covariate means by the separate approach.

    Parameters
    ----------
    d : Dataset
    fit : PropensityFit
        First stage estimated on ``d``.
    method : {"parametric_deg1", "polynomial", "semiparametric_deg2"}
        ``parametric_deg1`` makes each K_j linear in the normal quantile of
        the score, so the MTE is linear in ``ndtri(u)``. ``polynomial`` uses
        K_j polynomial in the score of order ``degree`` (0 gives constant K).
        ``semiparametric_deg2`` partials out the score and smooths K_j with a
        local quadratic.
    u_grid : array_like, optional
        Evaluation points. Defaults to a 0.01 grid over the common support.
        Points outside the support are NaN in the curve.
    outcome : str
        Core field or covariate used as Y.
    covariates : sequence of str, optional
        Regressors X of the outcome equations. Defaults to the first-stage covariates.
    first_stage : bool
        For the parametric methods, add the first-stage sampling error to the
        coefficient covariance by the delta method.

    Returns
    -------
    MteCurve
        For the parametric methods ``se`` is analytic; for the semiparametric
        method it is NaN until filled by ``mte_bootstrap``.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if len(fit.scores) != len(d):
        raise InputError("propensity fit does not match the dataset")
    covariates = fit.covariates if covariates is None else tuple(covariates)
    if support is None:
        support = common_support(fit.scores, d.treated)
    keep = support.contains(fit.scores)
    D = np.asarray(d.treated)[keep]
    if D.min() == D.max():
        raise NoSupportError("common support holds a single arm")
    p = fit.scores[keep]
    y = _outcome(d, outcome)[keep]
    X = np.column_stack([column(d, k) for k in covariates])[keep] if covariates else np.zeros((keep.sum(), 0))
    xbar = X.mean(0)
    grid = default_grid(support) if u_grid is None else np.asarray(u_grid, dtype=float)
    if grid.ndim != 1 or np.any((grid <= 0) | (grid >= 1)):
        raise ValueError("u_grid must be a vector inside (0, 1)")
    inside = support.contains(grid)
    mte = np.full(grid.size, np.nan)
    se = np.full(grid.size, np.nan)
    info = {"n_used": int(keep.sum()), "n_treated": int(D.sum()), "outcome": outcome}
    gradient = covariance = None

    if method == "semiparametric_deg2":
        arms, Ks = [], []
        for treated in (1, 0):
            m = D == treated
            b, K, dK, h = _semiparametric_arm(X[m], y[m], p[m], grid, covariates, bandwidth)
            arms.append(b)
            Ks.append((K, dK))
            info[f"bandwidth_{treated}"] = h
        gap = arms[0].coefficients - arms[1].coefficients
        # Robinson's fit has no intercept: K absorbs it
        observed = {"const": np.nan} | dict(zip(covariates, gap))
        vals = separate_mte(grid, Ks[0][0], Ks[0][1], Ks[1][0], Ks[1][1], float(xbar @ gap))
        mte[inside] = vals[inside]
        covariance = arms[0].covariance + arms[1].covariance
    else:
        deg = 1 if method == "parametric_deg1" else int(degree)
        if deg < 0:
            raise ValueError("degree must be non-negative")
        arms = _parametric_arms(X, y, D, p, method, deg, covariates)
        theta = np.concatenate([f.coefficients for f in arms])
        V = np.zeros((theta.size, theta.size))
        k1 = arms[0].coefficients.size
        V[:k1, :k1] = arms[0].covariance
        V[k1:, k1:] = arms[1].covariance
        if first_stage:
            J = _first_stage_jacobian(fit, keep, X, y, D, method, deg, covariates)
            V = V + J @ fit.probit.covariance @ J.T
        G = _gradient(grid, xbar, method, deg)
        vals = G @ theta
        mte[inside] = vals[inside]
        se[inside] = np.sqrt(np.einsum("ij,jk,ik->i", G, V, G))[inside]
        nx = len(covariates)
        gap = arms[0].coefficients[:1 + nx] - arms[1].coefficients[:1 + nx]
        observed = dict(zip(("const",) + covariates, gap))
        gradient, covariance = G, V
        info["degree"] = deg
    z = norm.ppf(1 - LEVEL / 2)
    return MteCurve(
        u_grid=grid, mte=mte, se=se, lo=mte - z * se, hi=mte + z * se, observed_part=observed,
        support=support, method=method, xbar=dict(zip(covariates, xbar)), fits=tuple(arms),
        gradient=gradient, covariance=covariance, info=info,
    )


def mte_bootstrap(d, covariates, method="parametric_deg1", B=250, seed=0, instrument="instrument",
                  outcome="outcome", u_grid=None, degree=1, bandwidth=None, workers=1, alpha=LEVEL):
    """MTE curve with bootstrap standard errors and percentile bands.

    Each replication redraws households, re-estimates the propensity score
    and the common support, and evaluates the curve on the full-sample grid.
    """
    covariates = tuple(covariates)

    def pipeline(data, grid):
        fit = estimate_propensity(data, covariates, instrument)
        return mte_separate(data, fit, method, grid, outcome, covariates, degree=degree,
                            bandwidth=bandwidth, first_stage=False)

    base = pipeline(d, u_grid)
    grid = base.u_grid
    res = bootstrap(lambda db: pipeline(db, grid).mte, d, B, seed, workers=workers, alpha=alpha,
                    estimate=base.mte)
    undefined = ~np.isfinite(base.mte)
    se, lo, hi = (np.where(undefined, np.nan, a) for a in (res.se, res.lo, res.hi))
    info = dict(base.info, B=B, seed=seed, n_failed=res.n_failed)
    return replace(base, se=se, lo=lo, hi=hi, replicates=res.replicates, info=info)


# --- tests ------------------------------------------------------------------

@dataclass(frozen=True)
class HeterogeneityTests:
    p_observable: float
    p_unobservable: float
    stat_observable: float
    df_observable: int
    stat_unobservable: float
    df_unobservable: int


def wald(r, V):
    """Wald statistic ``r' V^-1 r``; refuses a singular ``V``."""
    r = np.atleast_1d(r)
    V = np.atleast_2d(V)
    if r.size == 0:
        raise SingularDesignError("nothing to test")
    w = np.linalg.eigvalsh(V)
    if not np.all(np.isfinite(w)) or w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise SingularDesignError("singular Wald variance")
    return float(r @ np.linalg.solve(V, r))


def _test_points(curve, count):
    ok = np.flatnonzero(np.isfinite(curve.mte))
    if curve.replicates is not None:
        ok = ok[np.isfinite(curve.replicates[:, ok]).mean(0) > 0.9]
    if ok.size < count:
        raise SingularDesignError("too few defined grid points for the unobservable test")
    return ok[np.round(np.linspace(0, ok.size - 1, count)).astype(int)]


def heterogeneity_tests(curve):
    """Wald tests of observable and unobservable effect heterogeneity.

    The observable test asks whether all treated-untreated covariate gaps
    are zero. The unobservable test asks whether the MTE is flat in ``u``:
    for the parametric methods it tests the K terms beyond a constant
    through curve differences with the analytic covariance; for the
    semiparametric method it compares the curve at a few grid points using
    the bootstrap covariance, so ``mte_bootstrap`` must have been run.
    """
    fits = curve.fits
    names = [k for k in curve.observed_part if k != "const"]
    if names:
        gap = curve.observable_gap
        V = fits[0].sub_covariance(names) + fits[1].sub_covariance(names) \
            if curve.method == "semiparametric_deg2" else _gap_cov(curve, names)
        s_obs = wald(gap, V)
        df_obs = len(names)
        p_obs = float(chi2.sf(s_obs, df_obs))
    else:
        s_obs, df_obs, p_obs = np.nan, 0, np.nan

    if curve.method == "semiparametric_deg2":
        if curve.replicates is None:
            raise InputError("the semiparametric unobservable test needs bootstrap replicates")
        idx = _test_points(curve, TEST_POINTS)
        reps = curve.replicates[:, idx]
        reps = reps[np.all(np.isfinite(reps), axis=1)]
        diff = curve.mte[idx[1:]] - curve.mte[idx[0]]
        rdiff = reps[:, 1:] - reps[:, :1]
        if rdiff.shape[0] < 2:
            raise SingularDesignError("singular Wald variance")
        V = np.atleast_2d(np.cov(rdiff, rowvar=False))
    else:
        k = curve.info["degree"] if curve.method == "polynomial" else 1
        if k == 0:
            return HeterogeneityTests(p_obs, np.nan, s_obs, df_obs, np.nan, 0)
        u = np.linspace(0.2, 0.8, k + 1)
        G = _gradient(u, np.array(list(curve.xbar.values())), curve.method, k)
        R = G[1:] - G[:1]
        theta = np.concatenate([f.coefficients for f in fits])
        diff = R @ theta
        V = R @ curve.covariance @ R.T
    s_un = wald(diff, V)
    df_un = diff.size
    return HeterogeneityTests(p_obs, float(chi2.sf(s_un, df_un)), s_obs, df_obs, s_un, df_un)


def _gap_cov(curve, names):
    k1 = curve.fits[0].coefficients.size
    i1 = [curve.fits[0].index(n) for n in names]
    i0 = [k1 + curve.fits[1].index(n) for n in names]
    R = np.zeros((len(names), curve.covariance.shape[0]))
    R[np.arange(len(names)), i1] = 1.0
    R[np.arange(len(names)), i0] = -1.0
    return R @ curve.covariance @ R.T


# --- output -----------------------------------------------------------------

def write_mte_curve(curve, csv_path, svg_path=None, title=None):
    """``mte_curve.csv`` (u, mte, se, lo, hi) and an optional line-and-band figure."""
    rows = zip(curve.u_grid, curve.mte, curve.se, curve.lo, curve.hi)
    write_table(csv_path, ("u", "mte", "se", "lo", "hi"), rows)
    if svg_path is None:
        return
    fig, ax = new_figure()
    ok = np.isfinite(curve.mte)
    band = ok & np.isfinite(curve.lo) & np.isfinite(curve.hi)
    if band.any():
        ax.fill_between(curve.u_grid[band], curve.lo[band], curve.hi[band], color="0.85", lw=0)
    ax.plot(curve.u_grid[ok], curve.mte[ok], color="k", lw=1.5)
    ax.axhline(0.0, color="0.5", lw=0.6, ls=":")
    ax.set_xlabel("unobserved resistance u")
    ax.set_ylabel("MTE")
    ax.set_title(title or curve.method)
    save_svg(fig, svg_path)


def write_first_stage(fit, path):
    rows = [(n, c, s) for n, c, s in zip(fit.probit.names, fit.probit.coefficients, fit.probit.se)]
    rows += [("instrument_wald", fit.strength, None), ("weak_instrument", int(fit.weak_instrument), None),
             ("N", fit.probit.n, None)]
    write_table(path, ("variable", "estimate", "se"), rows)
