# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: Ising energy tables, transverse-field matvec and the
adaptive DOP853 propagator for H(t) = a(t) H_TF + diag(a(t) d_a + b(t) d_b + d_c).

Complex blocks are handled through their interleaved float64 view, so every
inner loop is plain real arithmetic. The pure-Python twin in ``_kernels_py``
implements the same algorithms with numpy; both are selected through
``ctqo.kernels``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow

cnp.import_array()


class NormDriftError(RuntimeError):
    pass


def ising_energies(int n, const long[::1] edge_i, const long[::1] edge_j, const double[::1] weights,
                   const long[::1] field_idx, const double[::1] field_vals):
    cdef Py_ssize_t dim = 1 << n
    cdef Py_ssize_t z, k
    cdef long si, sj
    cdef double acc
    out = np.empty(dim, dtype=np.float64)
    cdef double[::1] e = out
    cdef Py_ssize_t ne = edge_i.shape[0]
    cdef Py_ssize_t nf = field_idx.shape[0]
    with nogil:
        for z in range(dim):
            acc = 0.0
            for k in range(ne):
                si = (z >> edge_i[k]) & 1
                sj = (z >> edge_j[k]) & 1
                if si == sj:
                    acc += weights[k]
                else:
                    acc -= weights[k]
            for k in range(nf):
                if (z >> field_idx[k]) & 1:
                    acc -= field_vals[k]
                else:
                    acc += field_vals[k]
            e[z] = acc
    return out


cdef void _apply(const double[:, ::1] psi, double[:, ::1] out, int n, double tf,
                 const double[::1] diag) noexcept nogil:
    # psi, out: (dim, 2m) interleaved real/imag
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t w = psi.shape[1]
    cdef Py_ssize_t z, k, zz
    cdef int i
    cdef double d, sr, si
    cdef const double* p = &psi[0, 0]
    cdef double* o = &out[0, 0]
    cdef const double* q
    if w == 2:
        for z in range(dim):
            sr = 0.0
            si = 0.0
            if tf != 0.0:
                for i in range(n):
                    zz = (z ^ (1 << i)) * 2
                    sr += p[zz]
                    si += p[zz + 1]
            d = diag[z]
            o[2 * z] = d * p[2 * z] - tf * sr
            o[2 * z + 1] = d * p[2 * z + 1] - tf * si
        return
    for z in range(dim):
        d = diag[z]
        for k in range(w):
            o[z * w + k] = d * p[z * w + k]
        if tf != 0.0:
            for i in range(n):
                q = p + (z ^ (1 << i)) * w
                for k in range(w):
                    o[z * w + k] -= tf * q[k]


cdef void _apply_mi(const double[:, ::1] psi, double[:, ::1] out, int n, double tf,
                    const double[::1] diag) noexcept nogil:
    # out <- -i H psi
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t w = psi.shape[1]
    cdef Py_ssize_t z, k
    cdef double re, im
    _apply(psi, out, n, tf, diag)
    for z in range(dim):
        for k in range(0, w, 2):
            re = out[z, k]
            im = out[z, k + 1]
            out[z, k] = im
            out[z, k + 1] = -re


def hamiltonian_apply(const double complex[:, ::1] psi, int n, double tf, const double[::1] diag):
    """Return ``diag * psi - tf * sum_i X_i psi`` for a (dim, m) block of states."""
    psi_arr = np.asarray(psi)
    out = np.empty((psi.shape[0], psi.shape[1]), dtype=np.complex128)
    cdef const double[:, ::1] pv = psi_arr.view(np.float64)
    cdef double[:, ::1] ov = out.view(np.float64)
    with nogil:
        _apply(pv, ov, n, tf, diag)
    return out


def dop853_propagate(double complex[:, ::1] y_c, int n, bint has_tf,
                     const double[::1] d_a, const double[::1] d_b, const double[::1] d_c, coef,
                     double t0, double t1, double h, double rtol, double atol,
                     double norm_tol, long max_steps,
                     const double[:, ::1] A, const double[::1] B, const double[::1] C,
                     const double[::1] E3, const double[::1] E5):
    """Advance ``y`` in place from t0 to t1; columns are renormalised after each
    accepted step and a drift above ``norm_tol`` raises ``NormDriftError``.

    Returns ``(h_next, n_accepted, n_rejected, nfev)``.
    """
    cdef Py_ssize_t dim = y_c.shape[0]
    cdef Py_ssize_t m = y_c.shape[1]
    cdef Py_ssize_t w = 2 * m
    cdef int ns = 12
    cdef double[:, ::1] y = np.asarray(y_c).view(np.float64)
    K_arr = np.zeros((ns + 1, dim, w), dtype=np.float64)
    cdef double[:, :, ::1] K = K_arr
    cdef double[:, ::1] ytmp = np.empty((dim, w), dtype=np.float64)
    cdef double[:, ::1] ynew = np.empty((dim, w), dtype=np.float64)
    cdef double[:, ::1] f = np.empty((dim, w), dtype=np.float64)
    cdef double[::1] diag = np.empty(dim, dtype=np.float64)
    cdef double[::1] nrm = np.empty(m, dtype=np.float64)
    cdef double t = t0
    cdef long n_acc = 0, n_rej = 0, nfev = 0
    cdef bint rejected = False
    cdef bint last
    cdef Py_ssize_t s, j, z, k, c
    cdef double acc, acc3r, acc3i, acc5r, acc5i, a, b, tf
    cdef double h_req = h
    cdef double sc, ay, an, e3, e5, err, factor, drift, worst
    cdef double ncomp = <double>(dim * m)
    cdef double exponent = -1.0 / 8.0

    if t1 <= t0:
        return h, 0, 0, 0

    a, b = coef(t)
    nfev += 1
    tf = a if has_tf else 0.0
    with nogil:
        for z in range(dim):
            diag[z] = a * d_a[z] + b * d_b[z] + d_c[z]
        _apply_mi(y, f, n, tf, diag)

    while t < t1:
        if n_acc + n_rej >= max_steps:
            raise RuntimeError("propagator exceeded max_steps=%d at t=%g" % (max_steps, t))
        last = False
        h_req = h
        if t + h >= t1:
            h = t1 - t
            last = True
        K[0, :, :] = f
        for s in range(1, ns + 1):
            if s < ns:
                a, b = coef(t + C[s] * h)
            else:
                a, b = coef(t + h)
            nfev += 1
            tf = a if has_tf else 0.0
            with nogil:
                for z in range(dim):
                    diag[z] = a * d_a[z] + b * d_b[z] + d_c[z]
                if s < ns:
                    for z in range(dim):
                        for k in range(w):
                            acc = 0.0
                            for j in range(s):
                                acc = acc + A[s, j] * K[j, z, k]
                            ytmp[z, k] = y[z, k] + h * acc
                    _apply_mi(ytmp, K[s], n, tf, diag)
                else:
                    for z in range(dim):
                        for k in range(w):
                            acc = 0.0
                            for j in range(ns):
                                acc = acc + B[j] * K[j, z, k]
                            ynew[z, k] = y[z, k] + h * acc
                    _apply_mi(ynew, K[ns], n, tf, diag)
        e3 = 0.0
        e5 = 0.0
        with nogil:
            for z in range(dim):
                for k in range(0, w, 2):
                    acc3r = 0.0
                    acc3i = 0.0
                    acc5r = 0.0
                    acc5i = 0.0
                    for j in range(ns + 1):
                        acc3r = acc3r + E3[j] * K[j, z, k]
                        acc3i = acc3i + E3[j] * K[j, z, k + 1]
                        acc5r = acc5r + E5[j] * K[j, z, k]
                        acc5i = acc5i + E5[j] * K[j, z, k + 1]
                    ay = sqrt(y[z, k] * y[z, k] + y[z, k + 1] * y[z, k + 1])
                    an = sqrt(ynew[z, k] * ynew[z, k] + ynew[z, k + 1] * ynew[z, k + 1])
                    sc = atol + rtol * (ay if ay > an else an)
                    e3 += (acc3r * acc3r + acc3i * acc3i) / (sc * sc)
                    e5 += (acc5r * acc5r + acc5i * acc5i) / (sc * sc)
        if e5 == 0.0 and e3 == 0.0:
            err = 0.0
        else:
            err = fabs(h) * e5 / sqrt((e5 + 0.01 * e3) * ncomp)
        if err < 1.0:
            if err == 0.0:
                factor = 10.0
            else:
                factor = 0.9 * pow(err, exponent)
                if factor > 10.0:
                    factor = 10.0
            if rejected and factor > 1.0:
                factor = 1.0
            if last:
                t = t1
            else:
                t = t + h
            # renormalisation guard, column by column
            worst = 0.0
            with nogil:
                for c in range(m):
                    nrm[c] = 0.0
                for z in range(dim):
                    for c in range(m):
                        nrm[c] += ynew[z, 2 * c] * ynew[z, 2 * c] + ynew[z, 2 * c + 1] * ynew[z, 2 * c + 1]
                for c in range(m):
                    nrm[c] = sqrt(nrm[c])
                    drift = fabs(nrm[c] - 1.0)
                    if drift > worst:
                        worst = drift
            if worst > norm_tol:
                raise NormDriftError(
                    "norm drift %.3e exceeds %.1e at t=%g" % (worst, norm_tol, t))
            with nogil:
                for z in range(dim):
                    for k in range(w):
                        y[z, k] = ynew[z, k] / nrm[k // 2]
                        f[z, k] = K[ns, z, k] / nrm[k // 2]
            n_acc += 1
            rejected = False
            if last:
                h = h_req if h_req > h * factor else h * factor
            else:
                h = h * factor
        else:
            factor = 0.9 * pow(err, exponent)
            if factor < 0.2:
                factor = 0.2
            h = h * factor
            n_rej += 1
            rejected = True
    return h, n_acc, n_rej, nfev
