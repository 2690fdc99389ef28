# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: BLAS-backed matmuls plus fused elementwise loops.

Semantics must match ``_kernels_py`` exactly (same float64 accumulation,
same ReLU subgradient convention); the unit tests run both backends against
the same oracles.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "cython"

ctypedef cnp.float64_t f64


cdef void _gemm(char ta, char tb, int m, int n, int k,
                double* a, int lda, double* b, int ldb,
                double* c, int ldc) noexcept nogil:
    cdef double one = 1.0, zero = 0.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &zero, c, &ldc)


def matmul_nt(double[:, ::1] a, double[:, ::1] b):
    """a @ b.T for a (m,k), b (n,k)."""
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[0]
    out = np.empty((m, n))
    cdef double[:, ::1] c = out
    if m and n and k:
        _gemm(b'T', b'N', n, m, k, &b[0, 0], k, &a[0, 0], k, &c[0, 0], n)
    return out


cdef void _matmul_nn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # c (m,n) = a (m,k) @ b (k,n)
    cdef int m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if m and n and k:
        _gemm(b'N', b'N', n, m, k, &b[0, 0], n, &a[0, 0], k, &c[0, 0], n)


cdef void _matmul_tn(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c) noexcept nogil:
    # c (m,n) = a (k,m).T @ b (k,n)
    cdef int k = a.shape[0], m = a.shape[1], n = b.shape[1]
    if m and n and k:
        _gemm(b'N', b'T', n, m, k, &b[0, 0], n, &a[0, 0], m, &c[0, 0], n)


def linear_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    """y = x @ w.T + b for x (n,i), w (o,i), b (o,)."""
    cdef int n = x.shape[0], o = w.shape[0], k = x.shape[1]
    out = np.empty((n, o))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    if n and o and k:
        _gemm(b'T', b'N', o, n, k, &w[0, 0], k, &x[0, 0], k, &y[0, 0], o)
    for i in range(n):
        for j in range(o):
            y[i, j] += b[j]
    return out


def linear_backward(double[:, ::1] x, double[:, ::1] w, double[:, ::1] dy):
    """Gradients of y = x @ w.T + b: returns (dw, db, dx)."""
    cdef int n = x.shape[0], i_dim = x.shape[1], o = w.shape[0]
    dw_arr = np.empty((o, i_dim))
    db_arr = np.zeros(o)
    dx_arr = np.empty((n, i_dim))
    cdef double[:, ::1] dw = dw_arr, dx = dx_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, j
    _matmul_tn(dy, x, dw)
    _matmul_nn(dy, w, dx)
    for i in range(n):
        for j in range(o):
            db[j] += dy[i, j]
    return dw_arr, db_arr, dx_arr


def relu_forward(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out = np.empty((n, d))
    cdef double[:, ::1] y = out
    for i in range(n):
        for j in range(d):
            y[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out


def relu_backward(double[:, ::1] x, double[:, ::1] dy):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out = np.empty((n, d))
    cdef double[:, ::1] dx = out
    for i in range(n):
        for j in range(d):
            dx[i, j] = dy[i, j] if x[i, j] > 0.0 else 0.0
    return out


def l2norm_rows(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    out = np.empty((n, d))
    norms_arr = np.empty(n)
    cdef double[:, ::1] y = out
    cdef double[::1] norms = norms_arr
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += x[i, j] * x[i, j]
        s = sqrt(s)
        norms[i] = s
        if s > 0.0:
            for j in range(d):
                y[i, j] = x[i, j] / s
        else:
            for j in range(d):
                y[i, j] = 0.0
    return out, norms_arr


def l2norm_rows_backward(double[:, ::1] y, double[::1] norms, double[:, ::1] dy):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], i, j
    out = np.empty((n, d))
    cdef double[:, ::1] dx = out
    cdef double radial
    for i in range(n):
        radial = 0.0
        for j in range(d):
            radial += dy[i, j] * y[i, j]
        for j in range(d):
            dx[i, j] = (dy[i, j] - radial * y[i, j]) / norms[i]
    return out


def softmax_rows(double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], c = z.shape[1], i, j
    out = np.empty((n, c))
    cdef double[:, ::1] p = out
    cdef double m, s
    for i in range(n):
        m = z[i, 0]
        for j in range(1, c):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(c):
            p[i, j] = exp(z[i, j] - m)
            s += p[i, j]
        for j in range(c):
            p[i, j] /= s
    return out


def xent_rows(double[:, ::1] p, cnp.intp_t[::1] labels):
    cdef Py_ssize_t n = p.shape[0], c = p.shape[1], i, j
    losses_arr = np.empty(n)
    dz_arr = np.empty((n, c))
    cdef double[::1] losses = losses_arr
    cdef double[:, ::1] dz = dz_arr
    for i in range(n):
        losses[i] = -log(p[i, labels[i]])
        for j in range(c):
            dz[i, j] = p[i, j]
        dz[i, labels[i]] -= 1.0
    return losses_arr, dz_arr
