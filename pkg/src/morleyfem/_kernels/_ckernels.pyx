# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR matvec and Gauss-Seidel sweeps (hot loops of the solvers)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_matvec(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
               double[::1] data, double[::1] x, double[::1] out):
    """out = A @ x for a CSR matrix given by (indptr, indices, data)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc
    return np.asarray(out)


def gauss_seidel_forward(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                         double[::1] data, double[::1] b, double[::1] x):
    """One in-place forward Gauss-Seidel sweep for a square CSR matrix."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k, col
    cdef double acc, diag
    for i in range(n):
        acc = b[i]
        diag = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            col = indices[k]
            if col == i:
                diag = data[k]
            else:
                acc -= data[k] * x[col]
        x[i] = acc / diag
    return np.asarray(x)


def gauss_seidel_backward(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                          double[::1] data, double[::1] b, double[::1] x):
    """One in-place backward Gauss-Seidel sweep for a square CSR matrix."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k, col
    cdef double acc, diag
    for i in range(n - 1, -1, -1):
        acc = b[i]
        diag = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            col = indices[k]
            if col == i:
                diag = data[k]
            else:
                acc -= data[k] * x[col]
        x[i] = acc / diag
    return np.asarray(x)
