# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled one-sided Jacobi SVD kernel.

Same contract as ``gfsa_lab._jacobi.jacobi_sweeps``.
"""
from libc.math cimport sqrt, fabs, copysign


cdef inline double _dot(double[:, ::1] w, Py_ssize_t i, Py_ssize_t j, Py_ssize_t m) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(m):
        acc += w[i, k] * w[j, k]
    return acc


cdef inline void _rotate(double[:, ::1] w, Py_ssize_t p, Py_ssize_t q, Py_ssize_t m,
                         double c, double s) noexcept nogil:
    cdef Py_ssize_t k
    cdef double x, y
    for k in range(m):
        x = w[p, k]
        y = w[q, k]
        w[p, k] = c * x - s * y
        w[q, k] = s * x + c * y


def jacobi_sweeps(double[:, ::1] work, double[:, ::1] vt, double tol, double floor,
                  int max_sweeps):
    cdef Py_ssize_t n = work.shape[0]
    cdef Py_ssize_t m = work.shape[1]
    cdef Py_ssize_t p, q
    cdef int sweep
    cdef int used = -1
    cdef bint rotated
    cdef double alpha, beta, gamma, zeta, t, c, s
    with nogil:
        for sweep in range(1, max_sweeps + 1):
            rotated = False
            for p in range(n - 1):
                for q in range(p + 1, n):
                    alpha = _dot(work, p, p, m)
                    beta = _dot(work, q, q, m)
                    gamma = _dot(work, p, q, m)
                    if (gamma == 0.0 or alpha <= floor or beta <= floor
                            or fabs(gamma) <= tol * sqrt(alpha * beta)):
                        continue
                    rotated = True
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = copysign(1.0, zeta) / (fabs(zeta) + sqrt(1.0 + zeta * zeta))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = c * t
                    _rotate(work, p, q, m, c, s)
                    _rotate(vt, p, q, n, c, s)
            if not rotated:
                used = sweep
                break
    return used
