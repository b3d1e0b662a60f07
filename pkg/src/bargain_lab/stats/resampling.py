"""Nonparametric bootstrap and delta-method standard errors."""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import BootstrapError, EstimationError

MAX_FAIL_SHARE = 0.2


def resample(data, idx):
    """Rows ``idx`` of a Dataset-like object, array, or tuple of arrays."""
    if isinstance(data, np.ndarray):
        return data[idx]
    if isinstance(data, tuple):
        return tuple(np.asarray(a)[idx] for a in data)
    return data.take(idx)


def _size(data):
    if isinstance(data, tuple):
        return len(data[0])
    return len(data)


@dataclass(frozen=True)
class BootstrapResult:
    estimate: np.ndarray
    replicates: np.ndarray
    se: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n_failed: int
    failures: tuple

    @property
    def B(self):
        return self.replicates.shape[0]


def bootstrap(estimator, data, B, seed, workers=1, alpha=0.05, estimate=None):
    """Household-level bootstrap.

    Replication ``b`` draws its indices from a stream spawned from
    ``SeedSequence(seed)`` at position ``b``, so results do not depend on
    ``workers`` or scheduling. Failing replications are kept as NaN rows and
    counted; more than 20% failures raises ``BootstrapError``. A statistic
    that is NaN in some replications gets its SE and percentiles from the
    others.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    n = _size(data)
    seeds = np.random.SeedSequence(seed).spawn(B)

    def one(b):
        rng = np.random.default_rng(seeds[b])
        idx = rng.integers(0, n, size=n)
        try:
            return np.atleast_1d(np.asarray(estimator(resample(data, idx)), dtype=float)), None
        except (EstimationError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            return None, f"replication {b}: {type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, range(B)))
    else:
        out = [one(b) for b in range(B)]

    failures = tuple(msg for _, msg in out if msg is not None)
    if len(failures) > MAX_FAIL_SHARE * B:
        head = "; ".join(failures[:3])
        raise BootstrapError(f"{len(failures)} of {B} replications failed ({head})")
    k = next(v.size for v, _ in out if v is not None)
    reps = np.full((B, k), np.nan)
    for b, (v, _) in enumerate(out):
        if v is not None:
            reps[b] = v
    # column-wise over finite replicates; a statistic may be undefined in some draws
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        se = np.nanstd(reps, axis=0, ddof=1)
        spread = np.nanmax(reps, axis=0) - np.nanmin(reps, axis=0)
        lo, hi = np.nanpercentile(reps, [100 * alpha / 2, 100 * (1 - alpha / 2)], axis=0)
    se[spread == 0] = 0.0
    if estimate is None:
        estimate = np.atleast_1d(np.asarray(estimator(data), dtype=float))
    return BootstrapResult(np.asarray(estimate, dtype=float), reps, se, lo, hi,
                           len(failures), failures)


def jacobian(g, theta, step=None):
    """Central finite-difference Jacobian of ``g`` at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    g0 = np.atleast_1d(np.asarray(g(theta), dtype=float))
    if not np.all(np.isfinite(g0)):
        raise EstimationError("g is not finite at theta")
    h = np.maximum(1e-6, 1e-6 * np.abs(theta)) if step is None else np.broadcast_to(step, theta.shape)
    J = np.empty((g0.size, theta.size))
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h[k]
        up = np.atleast_1d(np.asarray(g(theta + e), dtype=float))
        dn = np.atleast_1d(np.asarray(g(theta - e), dtype=float))
        if not (np.all(np.isfinite(up)) and np.all(np.isfinite(dn))):
            raise EstimationError(f"g is not finite near theta in coordinate {k}")
        J[:, k] = (up - dn) / (2.0 * h[k])
    return g0, J


def delta_cov(g, theta, cov, step=None):
    """Value of ``g`` and its delta-method covariance ``J cov J'``."""
    g0, J = jacobian(g, theta, step)
    V = J @ np.asarray(cov, dtype=float) @ J.T
    return g0, 0.5 * (V + V.T)


def delta_method(g, theta, cov, step=None):
    """Delta-method standard errors of ``g(theta)``."""
    _, V = delta_cov(g, theta, cov, step)
    return np.sqrt(np.clip(np.diag(V), 0.0, None))
