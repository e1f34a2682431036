# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: order-n window contraction, outer-convolution
accumulation and one-sided Jacobi sweeps.

All routines release the GIL so callers may run trials in threads.
"""
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free

import numpy as np


DEF ROW_BLOCK = 64


def contract_windows(const double[::1] kernel, const double[:, ::1] signals,
                     const long[::1] base, const long[::1] taps, int order):
    """out[r] = sum_q kernel[q] * prod_i signals[i, base[r] - taps[q_i]].

    Rows are processed in blocks so the kernel streams through the cache
    once per block.  Within a block the leading kernel indices advance like
    an odometer; level l keeps a per-row partial sum that is folded into
    level l-1 whenever digit l wraps.
    """
    cdef Py_ssize_t rows = base.shape[0]
    cdef Py_ssize_t P = taps.shape[0]
    cdef Py_ssize_t n = order
    cdef Py_ssize_t head = 1, r0, nr, r, i, j, q, lev
    cdef double s, s0, s1, s2, s3
    cdef const double *kp
    cdef const double *wp
    out = np.zeros(rows, dtype=np.float64)
    cdef double[::1] out_v = out
    for i in range(n - 1):
        head *= P
    cdef double *w = <double *> malloc(n * ROW_BLOCK * P * sizeof(double))
    cdef double *acc = <double *> malloc(n * ROW_BLOCK * sizeof(double))
    cdef Py_ssize_t *digit = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    if w == NULL or acc == NULL or digit == NULL:
        free(w)
        free(acc)
        free(digit)
        raise MemoryError()
    with nogil:
        for r0 in range(0, rows, ROW_BLOCK):
            nr = min(ROW_BLOCK, rows - r0)
            for i in range(n):
                for r in range(nr):
                    for q in range(P):
                        w[(i * ROW_BLOCK + r) * P + q] = signals[i, base[r0 + r] - taps[q]]
            for i in range(n * ROW_BLOCK):
                acc[i] = 0.0
            for i in range(n):
                digit[i] = 0
            for j in range(head):
                kp = &kernel[j * P]
                for r in range(nr):
                    wp = &w[((n - 1) * ROW_BLOCK + r) * P]
                    s0 = 0.0
                    s1 = 0.0
                    s2 = 0.0
                    s3 = 0.0
                    q = 0
                    while q + 4 <= P:
                        s0 = s0 + kp[q] * wp[q]
                        s1 = s1 + kp[q + 1] * wp[q + 1]
                        s2 = s2 + kp[q + 2] * wp[q + 2]
                        s3 = s3 + kp[q + 3] * wp[q + 3]
                        q = q + 4
                    while q < P:
                        s0 = s0 + kp[q] * wp[q]
                        q = q + 1
                    s = (s0 + s1) + (s2 + s3)
                    if n == 1:
                        acc[r] = s
                    else:
                        acc[(n - 2) * ROW_BLOCK + r] += \
                            w[((n - 2) * ROW_BLOCK + r) * P + digit[n - 2]] * s
                lev = n - 2
                while lev >= 0:
                    digit[lev] += 1
                    if digit[lev] < P:
                        break
                    digit[lev] = 0
                    if lev >= 1:
                        for r in range(nr):
                            acc[(lev - 1) * ROW_BLOCK + r] += \
                                w[((lev - 1) * ROW_BLOCK + r) * P + digit[lev - 1]] \
                                * acc[lev * ROW_BLOCK + r]
                            acc[lev * ROW_BLOCK + r] = 0.0
                    lev -= 1
            for r in range(nr):
                out_v[r0 + r] = acc[r]
    free(w)
    free(acc)
    free(digit)
    return out


def outer_accumulate(double[::1] result, const double[::1] product,
                     const long[::1] offsets, const double[::1] weights,
                     const long[::1] bases):
    """result[bases[e] + offsets[k]] += weights[e] * product[k], in place."""
    cdef Py_ssize_t e, k, b
    cdef Py_ssize_t n = product.shape[0]
    cdef double g
    with nogil:
        for e in range(weights.shape[0]):
            g = weights[e]
            b = bases[e]
            for k in range(n):
                result[b + offsets[k]] += g * product[k]


def jacobi_rotate(double[:, ::1] cols, double[:, ::1] right, double tol,
                  double floor, int max_sweeps):
    """One-sided Jacobi on the rows of ``cols`` (the columns of A).

    Rotations are mirrored into ``right``.  Columns whose squared norm is
    below ``floor`` count as converged zeros.  Returns the number of sweeps
    used, or -1 if ``max_sweeps`` passed without convergence.
    """
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t m = cols.shape[1]
    cdef Py_ssize_t nv = right.shape[1]
    cdef Py_ssize_t i, j, k
    cdef int sweep, rotated, used = -1
    cdef double a, b, c, s, t, zeta, gamma, xi, xj
    with nogil:
        for sweep in range(max_sweeps):
            rotated = 0
            for i in range(n - 1):
                for j in range(i + 1, n):
                    a = 0.0
                    b = 0.0
                    gamma = 0.0
                    for k in range(m):
                        a = a + cols[i, k] * cols[i, k]
                        b = b + cols[j, k] * cols[j, k]
                        gamma = gamma + cols[i, k] * cols[j, k]
                    if a <= floor or b <= floor or fabs(gamma) <= tol * sqrt(a * b):
                        continue
                    rotated = 1
                    zeta = (b - a) / (2.0 * gamma)
                    if zeta >= 0:
                        t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                    else:
                        t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = c * t
                    for k in range(m):
                        xi = cols[i, k]
                        xj = cols[j, k]
                        cols[i, k] = c * xi - s * xj
                        cols[j, k] = s * xi + c * xj
                    for k in range(nv):
                        xi = right[i, k]
                        xj = right[j, k]
                        right[i, k] = c * xi - s * xj
                        right[j, k] = s * xi + c * xj
            if not rotated:
                used = sweep + 1
                break
    return used
