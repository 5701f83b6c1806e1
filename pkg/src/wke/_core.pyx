# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Semantics match wke._core_py exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from cython.parallel cimport prange

cnp.import_array()


cdef inline double _weight(double xi, double xj, double xk, double xl,
                           double sigma, double alpha, double beta) nogil:
    cdef int nzero = (xi <= 0.0) + (xj <= 0.0) + (xk <= 0.0)
    cdef double mn
    if nzero == 0:
        mn = xi
        if xj < mn:
            mn = xj
        if xk < mn:
            mn = xk
        if xl < mn:
            mn = xl
        if sigma > 0.0:
            mn = mn - sigma
        if mn <= 0.0:
            return 0.0
        return sqrt(mn) / sqrt(xi * xj * xk)
    if sigma > 0.0 or nzero > 1:
        return 0.0
    if xi <= 0.0:
        return beta / sqrt(xj * xk) if xj > xk else 0.0
    if xj <= 0.0:
        return beta / sqrt(xi * xk) if xi > xk else 0.0
    return alpha / sqrt(xi * xj)


cdef enum:
    NCHUNK = 32


def collision_rates(m, double x0, double h, double sigma,
                    double alpha=1.0, double beta=1.0, int threads=1):
    """Work is split into NCHUNK interleaved chunks with private buffers reduced
    in chunk order, so the result does not depend on the thread count."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mm = np.ascontiguousarray(m, dtype=np.float64)
    cdef Py_ssize_t n = mm.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nzarr = np.flatnonzero(mm > 0).astype(np.int64)
    cdef Py_ssize_t nnz = nzarr.shape[0]
    buf_arr = np.zeros((NCHUNK, n))
    def_arr = np.zeros(NCHUNK)
    xs = x0 + h * np.arange(n)
    sq_arr = np.sqrt(np.clip(xs, 0.0, None))
    sk_arr = np.sqrt(np.clip(xs - sigma, 0.0, None))
    with np.errstate(divide="ignore"):
        u_arr = np.where(sq_arr > 0, mm / np.where(sq_arr > 0, sq_arr, 1.0), 0.0)
    cdef double[::1] mv = mm
    cdef double[:, ::1] buf = buf_arr
    cdef double[::1] dfc = def_arr
    cdef double[::1] sq = sq_arr
    cdef double[::1] sk = sk_arr
    cdef double[::1] u = u_arr
    cdef long long[::1] nz = nzarr
    cdef Py_ssize_t ch, a, b, c
    cdef long long i, j, k, l, mn, top = n - 1
    cdef double xi, xj, xk, xl, w, r, pij, defect
    cdef int nthreads = threads if threads > 1 else 1
    if nnz == 0:
        return np.zeros(n), 0.0
    for ch in prange(NCHUNK, nogil=True, num_threads=nthreads, schedule="dynamic"):
        defect = 0.0
        a = ch
        while a < nnz:
            i = nz[a]
            xi = x0 + i * h
            for b in range(a, nnz):
                j = nz[b]
                xj = x0 + j * h
                if xi > 0.0 and xj > 0.0:
                    pij = (1.0 if i == j else 2.0) * u[i] * u[j]
                else:
                    pij = 0.0
                for c in range(nnz):
                    k = nz[c]
                    if k == i or k == j:
                        continue
                    l = i + j - k
                    if l < 0:
                        continue
                    xl = x0 + l * h
                    if xl <= 0.0:
                        continue
                    mn = i
                    if j < mn:
                        mn = j
                    if k < mn:
                        mn = k
                    xk = x0 + k * h
                    if pij > 0.0 and xk > 0.0:
                        if l < mn:
                            mn = l
                        r = pij * u[k] * sk[mn]
                        mn = i
                        if j < mn:
                            mn = j
                        if k < mn:
                            mn = k
                    else:
                        w = _weight(xi, xj, xk, xl, sigma, alpha, beta)
                        r = (1.0 if i == j else 2.0) * mv[i] * mv[j] * mv[k] * w
                    if r == 0.0:
                        continue
                    if i + j + k - 2 * mn > top:
                        defect = defect + r
                        continue
                    buf[ch, i] -= r
                    buf[ch, j] -= r
                    buf[ch, k] += r
                    buf[ch, l] += r
            a = a + NCHUNK
        dfc[ch] = defect
    dm = np.zeros(n)
    for ch in range(NCHUNK):
        dm += buf_arr[ch]
    return dm, float(np.sum(def_arr))


cdef inline double _span(double a, double b, double c) nogil:
    cdef double m = a
    if b < m:
        m = b
    if c < m:
        m = c
    return a + b + c - 2.0 * m


cdef void _mild_node(double[::1] x, double[::1] wq, double[::1] f, double sigma, bint truncate,
                     Py_ssize_t i, double* a_out, double* o_out) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t j, k, p
    cdef double x1 = x[i], x2, mn, phi, wt, f2, t, top = x[n - 1]
    cdef double acc_a = 0.0, acc_o = 0.0
    for j in range(n):
        if f[j] == 0.0 or x[j] <= sigma:
            continue
        p = 0
        for k in range(n):
            x2 = x[j] + x[k] - x1
            if x2 < 0.0:
                continue
            if x2 > top:
                break
            while p < n - 1 and x[p + 1] < x2:
                p += 1
            if x2 <= x[p]:
                f2 = f[p]
            else:
                t = (x2 - x[p]) / (x[p + 1] - x[p])
                f2 = (1.0 - t) * f[p] + t * f[p + 1]
            mn = x1
            if x2 < mn:
                mn = x2
            if x[j] < mn:
                mn = x[j]
            if x[k] < mn:
                mn = x[k]
            mn = mn - sigma
            if mn <= 0.0:
                continue
            phi = sqrt(mn)
            wt = wq[j] * wq[k] * phi * f[j]
            if not truncate or _span(x1, x2, x[j]) <= top:
                acc_a += 2.0 * wt * f2
            if not truncate or _span(x1, x[j], x[k]) <= top:
                acc_a -= wt * f[k]
            if not truncate or _span(x2, x[j], x[k]) <= top:
                acc_o += wt * f2 * f[k]
    a_out[0] = acc_a / sqrt(x1)
    o_out[0] = acc_o


def mild_rates(double[::1] x, double[::1] wq, double[::1] f, double sigma, bint truncate=True, int threads=1):
    """Loss rate A and gain O on the nodes x (see wke._core_py.mild_rates).

    Output cells are independent, so the parallel loop is deterministic.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef int nthreads = threads if threads > 1 else 1
    a_arr = np.zeros(n)
    o_arr = np.zeros(n)
    cdef double[::1] A = a_arr
    cdef double[::1] O = o_arr
    for i in prange(n, nogil=True, num_threads=nthreads, schedule="dynamic"):
        if x[i] > sigma and x[i] > 0.0:
            _mild_node(x, wq, f, sigma, truncate, i, &A[i], &O[i])
    return a_arr, o_arr
