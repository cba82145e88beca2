# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_kernels_py``; same signatures."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, round as cround, INFINITY

cnp.import_array()


cdef inline double _wrap(double x, double D) nogil:
    return x - D * floor(x / D + 0.5)


def modulo(z, double D):
    z = np.asarray(z, dtype=complex)
    re = z.real - D * np.floor(z.real / D + 0.5)
    im = z.imag - D * np.floor(z.imag / D + 0.5)
    return re + 1j * im


def thp_precode(S, B, double D):
    cdef const double complex[:, ::1] s = np.ascontiguousarray(S, dtype=complex)
    cdef const double complex[:, ::1] b = np.ascontiguousarray(B, dtype=complex)
    cdef Py_ssize_t n = s.shape[0], K = s.shape[1], t, k, j
    V_arr = np.empty((n, K), dtype=complex)
    I_arr = np.empty((n, K), dtype=complex)
    cdef double complex[:, ::1] v = V_arr
    cdef double complex[:, ::1] ii = I_arr
    cdef double complex x
    cdef double xr, xi, vr, vi
    with nogil:
        for t in range(n):
            for k in range(K):
                x = s[t, k]
                for j in range(k):
                    x = x - b[k, j] * v[t, j]
                xr = x.real
                xi = x.imag
                vr = _wrap(xr, D)
                vi = _wrap(xi, D)
                v[t, k] = vr + 1j * vi
                ii[t, k] = cround((vr - xr) / D) + 1j * cround((vi - xi) / D)
    return V_arr, I_arr


cdef inline double _quad(const double* z, const double[:, ::1] M, const double[::1] r0,
                         Py_ssize_t r, Py_ssize_t m) nogil:
    cdef double acc = 0.0, ri
    cdef Py_ssize_t i, j
    for j in range(m):
        ri = r0[j]
        for i in range(r):
            ri += z[i] * M[i, j]
        acc += ri * ri
    return acc


cdef inline double _limit(const double* z, const double[:, :, ::1] G, Py_ssize_t L,
                          Py_ssize_t r) nogil:
    cdef double qmax = 0.0, q, zi
    cdef Py_ssize_t l, i, j
    for l in range(L):
        q = 0.0
        for i in range(r):
            zi = 0.0
            for j in range(r):
                zi += G[l, i, j] * z[j]
            q += z[i] * zi
        if q > qmax:
            qmax = q
    if qmax > 0:
        return 1.0 / sqrt(qmax)
    return INFINITY


def quad_values(Z, M, r0):
    cdef const double[:, ::1] z = np.ascontiguousarray(np.atleast_2d(Z), dtype=float)
    cdef const double[:, ::1] m = np.ascontiguousarray(M, dtype=float)
    cdef const double[::1] c = np.ascontiguousarray(r0, dtype=float)
    cdef Py_ssize_t n = z.shape[0], r = m.shape[0], w = m.shape[1], t
    out = np.empty(n)
    cdef double[::1] o = out
    if r == 0:
        out[:] = np.dot(r0, r0)
        return out
    with nogil:
        for t in range(n):
            o[t] = _quad(&z[t, 0], m, c, r, w)
    return out


def radial_limit(Z, forms):
    cdef const double[:, ::1] z = np.ascontiguousarray(np.atleast_2d(Z), dtype=float)
    cdef Py_ssize_t n = z.shape[0], r = z.shape[1], t
    if len(forms) == 0 or r == 0:
        return np.full(n, np.inf)
    cdef const double[:, :, ::1] G = np.ascontiguousarray(forms, dtype=float)
    cdef Py_ssize_t L = G.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for t in range(n):
            o[t] = _limit(&z[t, 0], G, L, r)
    return out


def ascend(Z0, M, r0, forms, int steps):
    Z_arr = np.array(Z0, dtype=float, copy=True, order="C")
    cdef double[:, ::1] Z = Z_arr
    cdef const double[:, ::1] m = np.ascontiguousarray(M, dtype=float)
    cdef const double[::1] c = np.ascontiguousarray(r0, dtype=float)
    cdef Py_ssize_t n = Z.shape[0], r = m.shape[0], w = m.shape[1]
    vals_arr = np.empty(n)
    cdef double[::1] vals = vals_arr
    if r == 0:
        vals_arr[:] = np.dot(r0, r0)
        return Z_arr, vals_arr
    cdef const double[:, :, ::1] G = np.ascontiguousarray(np.asarray(forms, dtype=float).reshape(-1, r, r))
    cdef Py_ssize_t L = G.shape[0]
    cdef double lip = 2.0 * max(np.linalg.norm(M, 2) ** 2, 1e-300)
    cand_arr = np.empty(r)
    res_arr = np.empty(w)
    push_arr = np.empty(r)
    cdef double[::1] cand = cand_arr
    cdef double[::1] res = res_arr
    cdef double[::1] push = push_arr
    cdef double alpha, tlim, fs, fp, g, s
    cdef Py_ssize_t t, it, i, j
    with nogil:
        for t in range(n):
            vals[t] = _quad(&Z[t, 0], m, c, r, w)
            alpha = 1.0 / lip
            for it in range(steps):
                for j in range(w):
                    s = c[j]
                    for i in range(r):
                        s += Z[t, i] * m[i, j]
                    res[j] = s
                for i in range(r):
                    g = 0.0
                    for j in range(w):
                        g += m[i, j] * res[j]
                    cand[i] = Z[t, i] + alpha * 2.0 * g
                tlim = _limit(&cand[0], G, L, r)
                if tlim < INFINITY:
                    for i in range(r):
                        push[i] = cand[i] * tlim
                    fp = _quad(&push[0], m, c, r, w)
                else:
                    fp = -INFINITY
                if tlim < 1.0:
                    for i in range(r):
                        cand[i] = cand[i] * tlim
                fs = _quad(&cand[0], m, c, r, w)
                if fp > fs:
                    if fp > vals[t]:
                        for i in range(r):
                            Z[t, i] = push[i]
                        vals[t] = fp
                        alpha = alpha * 1.5
                    else:
                        alpha = alpha * 0.5
                elif fs > vals[t]:
                    for i in range(r):
                        Z[t, i] = cand[i]
                    vals[t] = fs
                    alpha = alpha * 1.5
                else:
                    alpha = alpha * 0.5
                if alpha * lip < 1e-12:
                    break
    return Z_arr, vals_arr
