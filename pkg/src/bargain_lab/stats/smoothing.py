"""Kernel-weighted local polynomial regression."""

import numpy as np

from .._kernels import local_moments
from .results import SmoothFit

# ratio of Epanechnikov to Gaussian canonical bandwidths
EPANECHNIKOV_FACTOR = 2.214


def silverman_bandwidth(x):
    """Silverman's rule of thumb, rescaled for the Epanechnikov kernel."""
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    return EPANECHNIKOV_FACTOR * 0.9 * spread * x.size ** (-0.2)


def local_poly_fit(x, y, degree=2, bandwidth=None, grid=None):
    """Local polynomial fit with Epanechnikov weights.

    Parameters
    ----------
    x, y : array_like
        Running variable and response.
    degree : int
        Local polynomial order, 1 to 3.
    bandwidth : float, optional
        Kernel half-width. Defaults to ``silverman_bandwidth(x)``.
    grid : array_like, optional
        Strictly increasing evaluation points within ``[min x, max x]``.
        Defaults to 101 equally spaced points.

    Returns
    -------
    SmoothFit
        Grid entries with fewer than ``degree + 1`` observations in the window,
        or a numerically singular local design, are NaN in both ``fitted`` and
        ``derivative``.
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be vectors of equal length")
    if degree not in (1, 2, 3):
        raise ValueError("degree must be 1, 2 or 3")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(x)
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if grid is None:
        grid = np.linspace(x.min(), x.max(), 101)
    grid = np.ascontiguousarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    tol = 1e-12 * max(1.0, np.abs(x).max())
    if grid[0] < x.min() - tol or grid[-1] > x.max() + tol:
        raise ValueError("grid must lie within [min x, max x]")

    S, T, cnt = local_moments(x, y, grid, float(bandwidth), int(degree))
    k = degree + 1
    idx = np.add.outer(np.arange(k), np.arange(k))
    M = S[:, idx]
    fitted = np.full(grid.size, np.nan)
    deriv = np.full(grid.size, np.nan)
    ok = cnt >= k
    if ok.any():
        Mo, To = M[ok], T[ok]
        # reject windows whose local design is numerically singular
        cond = np.linalg.cond(Mo)
        good = cond < 1e12
        sol = np.full((Mo.shape[0], k), np.nan)
        if good.any():
            sol[good] = np.linalg.solve(Mo[good], To[good][..., None])[..., 0]
        fitted[ok] = sol[:, 0]
        deriv[ok] = sol[:, 1] / bandwidth
    return SmoothFit(
        grid=grid, fitted=fitted, derivative=deriv, bandwidth=float(bandwidth),
        kernel="epanechnikov", degree=int(degree), n_local=np.asarray(cnt),
    )
