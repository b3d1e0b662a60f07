"""Numpy reference implementation of the compiled kernels.

Same signatures and outputs as ``_ckernels``; selected automatically when the
extension is missing or ``BARGAIN_LAB_PURE=1`` is set.
"""

import numpy as np
from scipy.special import log_ndtr, logsumexp

LOG_2PI_HALF = 0.5 * np.log(2.0 * np.pi)


def household_loglik(m, mu, sd, load, tau, t_load, t_sign, h_res, has_h,
                     h_sd, h_load, nodes, logw, grad):
    m = np.asarray(m, dtype=float)[:, None]
    xi = np.asarray(nodes, dtype=float)[None, :]
    sd = np.asarray(sd, dtype=float)[:, None]
    zm = (m - np.asarray(mu)[:, None] - np.asarray(load)[:, None] * xi) / sd
    lk = np.asarray(logw)[None, :] - 0.5 * zm**2 - np.log(sd) - LOG_2PI_HALF

    sign = np.asarray(t_sign, dtype=float)[:, None]
    use_t = sign != 0.0
    zt = sign * (np.asarray(tau)[:, None] + t_load * xi)
    lc = log_ndtr(zt)
    lk = lk + np.where(use_t, lc, 0.0)

    use_h = np.asarray(has_h, dtype=bool)[:, None]
    zh = (np.asarray(h_res)[:, None] - h_load * xi) / h_sd
    lk = lk + np.where(use_h, -0.5 * zh**2 - np.log(h_sd) - LOG_2PI_HALF, 0.0)

    ll = logsumexp(lk, axis=1)
    if not grad:
        return ll, np.zeros((0, 8))

    w = np.exp(lk - ll[:, None])
    lam = np.where(use_t, np.exp(-0.5 * zt**2 - LOG_2PI_HALF - lc), 0.0)
    zh = np.where(use_h, zh, 0.0)
    G = np.empty((ll.shape[0], 8))
    G[:, 0] = (w * zm).sum(1) / sd[:, 0]
    G[:, 1] = (w * zm * xi).sum(1) / sd[:, 0]
    G[:, 2] = (w * (zm**2 - 1.0)).sum(1)
    G[:, 3] = (w * sign * lam).sum(1)
    G[:, 4] = (w * sign * lam * xi).sum(1)
    G[:, 5] = (w * zh).sum(1) / h_sd
    G[:, 6] = (w * zh * xi).sum(1) / h_sd
    G[:, 7] = np.where(use_h[:, 0], (w * (zh**2 - 1.0)).sum(1), 0.0)
    return ll, G


def local_moments(x, y, grid, bandwidth, degree):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    npow = 2 * degree + 1
    S = np.zeros((grid.size, npow))
    T = np.zeros((grid.size, degree + 1))
    cnt = np.zeros(grid.size, dtype=np.int64)
    # chunk over grid to bound memory
    step = max(1, 2_000_000 // max(x.size, 1))
    for start in range(0, grid.size, step):
        g = grid[start:start + step]
        u = (x[None, :] - g[:, None]) / bandwidth
        inside = np.abs(u) < 1.0
        w = np.where(inside, 0.75 * (1.0 - u * u), 0.0)
        cnt[start:start + step] = inside.sum(1)
        up = w
        for p in range(npow):
            S[start:start + step, p] = up.sum(1)
            if p <= degree:
                T[start:start + step, p] = (up * y[None, :]).sum(1)
            up = up * u
    return S, T, cnt
