# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: Gaussian kernel matrices and ADMM lasso sweeps.

Mirrors the NumPy fallbacks in ``zslembed.backends``; both must keep
identical contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()


def gaussian_kernel(points, centers, double sigma):
    """K[j, i] = exp(-||points[:, i] - centers[:, j]||^2 / (2 sigma^2))."""
    # transpose to instance-major so the distance loop runs contiguously
    cdef double[:, ::1] pts = np.ascontiguousarray(points.T, dtype=np.float64)
    cdef double[:, ::1] ctr = np.ascontiguousarray(centers.T, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t m = ctr.shape[0]
    cdef Py_ssize_t d = pts.shape[1]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    with nogil:
        for j in range(m):
            for i in range(n):
                acc = 0.0
                for k in range(d):
                    diff = pts[i, k] - ctr[j, k]
                    acc += diff * diff
                out[j, i] = exp(-acc * inv)
    return out_arr


def lasso_admm_core(double[:, ::1] chol_lower, double[:, ::1] rhs,
                    double lam, double rho, int max_iters,
                    double abs_tol, double rel_tol):
    """Per-column ADMM for min (1/n)||Bu - t||^2 + lam||u||_1.

    ``chol_lower`` is the lower Cholesky factor of (2/n) B^T B + rho I,
    ``rhs`` holds (2/n) B^T t per column.  Returns (coefficients,
    iteration counts), matching the NumPy fallback.
    """
    cdef Py_ssize_t dim = chol_lower.shape[0]
    cdef Py_ssize_t k = rhs.shape[1]
    out_arr = np.zeros((dim, k), dtype=np.float64)
    iters_arr = np.empty(k, dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef long long[::1] iters = iters_arr

    u_arr = np.zeros(dim)
    v_arr = np.zeros(dim)
    w_arr = np.zeros(dim)
    q_arr = np.zeros(dim)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] w = w_arr
    cdef double[::1] q = q_arr

    cdef double root_dim = sqrt(<double> dim)
    cdef double thresh = lam / rho
    cdef Py_ssize_t col, it, i, j
    cdef double acc, uw, v_new, r_norm, s_norm, u_norm, v_norm, w_norm
    cdef double eps_pri, eps_dual
    cdef int n_iter

    with nogil:
        for col in range(k):
            for i in range(dim):
                u[i] = 0.0
                v[i] = 0.0
                w[i] = 0.0
            n_iter = max_iters
            for it in range(max_iters):
                # u-step: solve L L^T u = rhs_col + rho (v - w)
                for i in range(dim):
                    q[i] = rhs[i, col] + rho * (v[i] - w[i])
                for i in range(dim):
                    acc = q[i]
                    for j in range(i):
                        acc -= chol_lower[i, j] * u[j]
                    u[i] = acc / chol_lower[i, i]
                for i in range(dim - 1, -1, -1):
                    acc = u[i]
                    for j in range(i + 1, dim):
                        acc -= chol_lower[j, i] * u[j]
                    u[i] = acc / chol_lower[i, i]
                # v-step: soft threshold, w-step: scaled dual update
                r_norm = 0.0
                s_norm = 0.0
                u_norm = 0.0
                v_norm = 0.0
                w_norm = 0.0
                for i in range(dim):
                    uw = u[i] + w[i]
                    if uw > thresh:
                        v_new = uw - thresh
                    elif uw < -thresh:
                        v_new = uw + thresh
                    else:
                        v_new = 0.0
                    s_norm += (v_new - v[i]) * (v_new - v[i])
                    v[i] = v_new
                    w[i] = uw - v_new
                    r_norm += (u[i] - v[i]) * (u[i] - v[i])
                    u_norm += u[i] * u[i]
                    v_norm += v[i] * v[i]
                    w_norm += w[i] * w[i]
                r_norm = sqrt(r_norm)
                s_norm = rho * sqrt(s_norm)
                u_norm = sqrt(u_norm)
                v_norm = sqrt(v_norm)
                eps_pri = root_dim * abs_tol + rel_tol * (
                    u_norm if u_norm > v_norm else v_norm
                )
                eps_dual = root_dim * abs_tol + rel_tol * rho * sqrt(w_norm)
                if r_norm <= eps_pri and s_norm <= eps_dual:
                    n_iter = it + 1
                    break
            for i in range(dim):
                out[i, col] = v[i]
            iters[col] = n_iter
    return out_arr, iters_arr
