# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the GaSP log-likelihood.

Mirrors :mod:`pipscreen._fallback` function for function. Distances come
packed as an (n(n-1)/2, p) array over the strict upper triangle in row-major
pair order. Correlation exponents are accumulated input by input in a fixed
order so that an input with ``log_rho == 0`` contributes an exact zero.
"""
import numpy as np

from libc.math cimport log
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dtrsv
from scipy.linalg.cython_lapack cimport dpotrf

NAME = "cython"

cdef double LOG_2PI = 1.8378770664093453
cdef double[6] JITTER_LEVELS = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6]


cdef void _pair_exponents(const double[:, ::1] dist, const double[::1] log_rho,
                          double[::1] s) noexcept nogil:
    cdef Py_ssize_t npairs = dist.shape[0]
    cdef Py_ssize_t p = dist.shape[1]
    cdef Py_ssize_t k, l
    cdef double acc
    for k in range(npairs):
        acc = 0.0
        for l in range(p):
            acc = acc + dist[k, l] * log_rho[l]
        s[k] = acc


cdef void _scatter(const double[::1] v, double scale, double diag,
                   double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t i, j, k = 0
    cdef double w
    for i in range(n):
        out[i, i] = scale + diag
        for j in range(i + 1, n):
            w = scale * v[k]
            out[i, j] = w
            out[j, i] = w
            k += 1


cdef _fill(const double[:, ::1] dist, const double[::1] log_rho, double scale,
           double diag, double[:, ::1] out):
    # numpy's vectorized exp is several times faster than scalar libm exp
    s = np.empty(dist.shape[0], dtype=np.float64)
    cdef double[::1] s_v = s
    with nogil:
        _pair_exponents(dist, log_rho, s_v)
    np.exp(s, out=s)
    with nogil:
        _scatter(s_v, scale, diag, out)


def corr_matrix(const double[:, ::1] dist, const double[::1] log_rho, Py_ssize_t n):
    """Separable correlation matrix from packed per-pair, per-input distances."""
    if dist.shape[1] != log_rho.shape[0] or dist.shape[0] != n * (n - 1) // 2:
        raise ValueError("dist, log_rho and n are inconsistent")
    out = np.empty((n, n), dtype=np.float64)
    _fill(dist, log_rho, 1.0, 0.0, out)
    return out


cdef int _chol_logpdf(double[:, ::1] base, const double[::1] resid,
                      double[:, ::1] work, double[::1] z,
                      double* result) noexcept nogil:
    """Factorize ``base`` (escalating jitter on failure); 0 on success."""
    cdef int n = <int>base.shape[0]
    cdef int info = 0, one = 1
    cdef Py_ssize_t i, k
    cdef double trace = 0.0, jitter, logdet, quad
    cdef char uplo = b'L'
    cdef char trans = b'N'
    cdef char diag = b'N'
    for i in range(n):
        trace += base[i, i]
    for k in range(6):
        jitter = JITTER_LEVELS[k] * trace / n
        memcpy(&work[0, 0], &base[0, 0], n * n * sizeof(double))
        for i in range(n):
            work[i, i] += jitter
        # symmetric input, so the C/Fortran layout difference is immaterial
        dpotrf(&uplo, &n, &work[0, 0], &n, &info)
        if info == 0:
            break
    if info != 0:
        return 1
    logdet = 0.0
    for i in range(n):
        logdet += log(work[i, i])
        z[i] = resid[i]
    dtrsv(&uplo, &trans, &diag, &n, &work[0, 0], &n, &z[0], &one)
    quad = 0.0
    for i in range(n):
        quad += z[i] * z[i]
    result[0] = -0.5 * (n * LOG_2PI + 2.0 * logdet + quad)
    return 0


def gasp_loglik(const double[:, ::1] dist, const double[::1] log_rho,
                const double[::1] resid, double sigma2, double sigma02,
                extra=None):
    """Log N(resid | 0, sigma2 R + sigma02 I [+ extra])."""
    cdef Py_ssize_t n = resid.shape[0]
    cdef Py_ssize_t i, j
    cdef double result = 0.0
    cdef int status
    if dist.shape[0] != n * (n - 1) // 2 or dist.shape[1] != log_rho.shape[0]:
        raise ValueError("dimension mismatch in gasp_loglik")
    base = np.empty((n, n), dtype=np.float64)
    work = np.empty((n, n), dtype=np.float64)
    z = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] base_v = base
    cdef double[:, ::1] work_v = work
    cdef double[::1] z_v = z
    cdef const double[:, ::1] extra_v
    _fill(dist, log_rho, sigma2, sigma02, base_v)
    if extra is not None:
        extra_v = np.ascontiguousarray(extra, dtype=np.float64)
        if extra_v.shape[0] != n or extra_v.shape[1] != n:
            raise ValueError("extra covariance has the wrong shape")
        for i in range(n):
            for j in range(n):
                base_v[i, j] += extra_v[i, j]
    with nogil:
        status = _chol_logpdf(base_v, resid, work_v, z_v, &result)
    if status != 0 or result != result:
        raise np.linalg.LinAlgError(
            "covariance not positive definite after jitter escalation")
    return result
