# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled limited-memory two-loop recursion.

Mirrors ``_lbfgs_py.two_loop_direction`` operation for operation; the Python
wrapper in ``caden._accel`` picks this module up when it has been built.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def two_loop_direction(
    cnp.ndarray[cnp.float64_t, ndim=2] s,
    cnp.ndarray[cnp.float64_t, ndim=2] y,
    cnp.ndarray[cnp.float64_t, ndim=1] rho,
    double gamma,
    cnp.ndarray[cnp.float64_t, ndim=1] grad,
):
    """Apply the limited-memory inverse-Hessian approximation to ``grad``."""
    cdef Py_ssize_t k = s.shape[0]
    cdef Py_ssize_t d = grad.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q = grad.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] alpha = np.empty(k)
    cdef double acc, beta
    cdef Py_ssize_t i, t

    for i in range(k - 1, -1, -1):
        acc = 0.0
        for t in range(d):
            acc += s[i, t] * q[t]
        alpha[i] = rho[i] * acc
        for t in range(d):
            q[t] -= alpha[i] * y[i, t]
    for t in range(d):
        q[t] *= gamma
    for i in range(k):
        acc = 0.0
        for t in range(d):
            acc += y[i, t] * q[t]
        beta = rho[i] * acc
        for t in range(d):
            q[t] += (alpha[i] - beta) * s[i, t]
    return q
