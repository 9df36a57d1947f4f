"""Pure-numpy reference implementations of the compiled kernels.

Same signatures and in-place semantics as ``_ckernels``; used when the
compiled extension is unavailable or explicitly disabled.
"""

import numpy as np


def csr_matvec(indptr, indices, data, x, out):
    """out = A @ x for a CSR matrix given by (indptr, indices, data)."""
    out[:] = 0.0
    if data.size == 0:
        return out
    prod = data * x[indices]
    starts = indptr[:-1]
    nonempty = indptr[1:] > starts
    out[nonempty] = np.add.reduceat(prod, starts[nonempty])
    return out


def gauss_seidel_forward(indptr, indices, data, b, x):
    """One in-place forward Gauss-Seidel sweep for a square CSR matrix."""
    for i in range(len(indptr) - 1):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        acc = b[i] - np.dot(vals, x[cols])
        diag_mask = cols == i
        diag = vals[diag_mask][0]
        # x_i was included in the dot product; add its span back before dividing
        x[i] = (acc + diag * x[i]) / diag
    return x


def gauss_seidel_backward(indptr, indices, data, b, x):
    """One in-place backward Gauss-Seidel sweep for a square CSR matrix."""
    for i in range(len(indptr) - 2, -1, -1):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        acc = b[i] - np.dot(vals, x[cols])
        diag_mask = cols == i
        diag = vals[diag_mask][0]
        x[i] = (acc + diag * x[i]) / diag
    return x
