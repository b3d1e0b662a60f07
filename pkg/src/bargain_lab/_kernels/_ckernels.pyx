# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: quadrature household likelihood and local
polynomial moment sums. Mirrors ``_pykernels`` exactly."""

from libc.math cimport exp, log, log1p, erfc, sqrt, fabs

import numpy as np

cdef double LOG_2PI_HALF = 0.9189385332046727  # 0.5 * log(2 pi)
cdef double SQRT1_2 = 0.7071067811865476


cdef inline double log_ndtr(double z) nogil:
    cdef double z2, s
    if z > 0.0:
        return log1p(-0.5 * erfc(z * SQRT1_2))
    if z > -37.0:
        return log(0.5 * erfc(-z * SQRT1_2))
    # asymptotic series, erfc underflows below here
    z2 = 1.0 / (z * z)
    s = 1.0 - z2 * (1.0 - 3.0 * z2 * (1.0 - 5.0 * z2 * (1.0 - 7.0 * z2)))
    return -0.5 * z * z - log(-z) - LOG_2PI_HALF + log(s)


cdef inline double mills(double z, double logcdf) nogil:
    # phi(z) / Phi(z)
    return exp(-0.5 * z * z - LOG_2PI_HALF - logcdf)


def household_loglik(
    const double[::1] m, const double[::1] mu, const double[::1] sd,
    const double[::1] load, const double[::1] tau, double t_load,
    const signed char[::1] t_sign, const double[::1] h_res,
    const signed char[::1] has_h, double h_sd, double h_load,
    const double[::1] nodes, const double[::1] logw, bint grad,
):
    cdef Py_ssize_t n = m.shape[0]
    cdef Py_ssize_t q = nodes.shape[0]
    cdef Py_ssize_t i, k
    ll_arr = np.empty(n, dtype=np.float64)
    G_arr = np.zeros((n if grad else 0, 8), dtype=np.float64)
    cdef double[::1] ll = ll_arr
    cdef double[:, ::1] G = G_arr
    cdef double[64] lk
    cdef double[64] zm
    cdef double[64] zt
    cdef double[64] lam
    cdef double[64] zh
    cdef double xi, z, lse, mx, w, s_sign, lc, inv_sd, inv_hsd, log_hsd, log_sd
    cdef double g0, g1, g2, g3, g4, g5, g6, g7
    if q > 64:
        raise ValueError("at most 64 quadrature nodes")
    inv_hsd = 1.0 / h_sd
    log_hsd = log(h_sd)
    with nogil:
        for i in range(n):
            inv_sd = 1.0 / sd[i]
            log_sd = log(sd[i])
            s_sign = <double> t_sign[i]
            mx = -1e300
            for k in range(q):
                xi = nodes[k]
                z = (m[i] - mu[i] - load[i] * xi) * inv_sd
                zm[k] = z
                lk[k] = logw[k] - 0.5 * z * z - log_sd - LOG_2PI_HALF
                if t_sign[i] != 0:
                    z = s_sign * (tau[i] + t_load * xi)
                    lc = log_ndtr(z)
                    zt[k] = z
                    lam[k] = mills(z, lc)
                    lk[k] += lc
                if has_h[i]:
                    z = (h_res[i] - h_load * xi) * inv_hsd
                    zh[k] = z
                    lk[k] += -0.5 * z * z - log_hsd - LOG_2PI_HALF
                if lk[k] > mx:
                    mx = lk[k]
            lse = 0.0
            for k in range(q):
                lse += exp(lk[k] - mx)
            ll[i] = mx + log(lse)
            if grad:
                g0 = 0.0; g1 = 0.0; g2 = 0.0; g3 = 0.0
                g4 = 0.0; g5 = 0.0; g6 = 0.0; g7 = 0.0
                for k in range(q):
                    w = exp(lk[k] - ll[i])
                    xi = nodes[k]
                    g0 += w * zm[k] * inv_sd
                    g1 += w * zm[k] * xi * inv_sd
                    g2 += w * (zm[k] * zm[k] - 1.0)
                    if t_sign[i] != 0:
                        g3 += w * s_sign * lam[k]
                        g4 += w * s_sign * lam[k] * xi
                    if has_h[i]:
                        g5 += w * zh[k] * inv_hsd
                        g6 += w * zh[k] * xi * inv_hsd
                        g7 += w * (zh[k] * zh[k] - 1.0)
                G[i, 0] = g0; G[i, 1] = g1; G[i, 2] = g2; G[i, 3] = g3
                G[i, 4] = g4; G[i, 5] = g5; G[i, 6] = g6; G[i, 7] = g7
    return ll_arr, G_arr


def local_moments(
    const double[::1] x, const double[::1] y, const double[::1] grid,
    double bandwidth, int degree,
):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t g = grid.shape[0]
    cdef Py_ssize_t i, j, p
    cdef int npow = 2 * degree + 1
    S_arr = np.zeros((g, npow), dtype=np.float64)
    T_arr = np.zeros((g, degree + 1), dtype=np.float64)
    cnt_arr = np.zeros(g, dtype=np.int64)
    cdef double[:, ::1] S = S_arr
    cdef double[:, ::1] T = T_arr
    cdef long long[::1] cnt = cnt_arr
    cdef double u, w, up
    cdef double inv_h = 1.0 / bandwidth
    with nogil:
        for j in range(g):
            for i in range(n):
                u = (x[i] - grid[j]) * inv_h
                if fabs(u) >= 1.0:
                    continue
                w = 0.75 * (1.0 - u * u)
                cnt[j] += 1
                up = w
                for p in range(npow):
                    S[j, p] += up
                    if p <= degree:
                        T[j, p] += up * y[i]
                    up *= u
    return S_arr, T_arr, cnt_arr
