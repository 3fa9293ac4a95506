"""Pure-numpy implementations of the compiled kernels in ``_kernels.pyx``.

Same algorithms, same DOP853 tableau and step control, so results agree with
the compiled path to round-off.
"""

from __future__ import annotations

import numpy as np


class NormDriftError(RuntimeError):
    pass


def ising_energies(n, edge_i, edge_j, weights, field_idx, field_vals):
    z = np.arange(1 << n, dtype=np.int64)
    spins = 1.0 - 2.0 * ((z[:, None] >> np.arange(n)) & 1)
    out = np.zeros(1 << n)
    if len(edge_i):
        out += (spins[:, edge_i] * spins[:, edge_j]) @ np.asarray(weights, dtype=float)
    if len(field_idx):
        out += spins[:, field_idx] @ np.asarray(field_vals, dtype=float)
    return out


def _flip_sum(psi, n):
    # psi: (dim, m); bit i of the row index lives on axis n-1-i after reshaping
    m = psi.shape[1]
    t = psi.reshape((2,) * n + (m,))
    acc = np.zeros_like(t)
    for axis in range(n):
        acc += np.flip(t, axis=axis)
    return acc.reshape(psi.shape)


def hamiltonian_apply(psi, n, tf, diag):
    out = diag[:, None] * psi
    if tf != 0.0 and n > 0:
        out -= tf * _flip_sum(psi, n)
    return out


def dop853_propagate(y, n, has_tf, d_a, d_b, d_c, coef, t0, t1, h, rtol, atol,
                     norm_tol, max_steps, A, B, C, E3, E5):
    ns = 12
    counter = [0]

    def rhs(t, v):
        counter[0] += 1
        a, b = coef(t)
        diag = a * d_a + b * d_b + d_c
        return -1j * hamiltonian_apply(v, n, a if has_tf else 0.0, diag)

    if t1 <= t0:
        return h, 0, 0, 0
    dim, m = y.shape
    ncomp = float(dim * m)
    K = np.zeros((ns + 1, dim, m), dtype=np.complex128)
    t = t0
    n_acc = n_rej = 0
    rejected = False
    f = rhs(t, y)
    while t < t1:
        if n_acc + n_rej >= max_steps:
            raise RuntimeError(f"propagator exceeded max_steps={max_steps} at t={t:g}")
        last = False
        h_req = h
        if t + h >= t1:
            h = t1 - t
            last = True
        K[0] = f
        for s in range(1, ns):
            dy = np.tensordot(A[s, :s], K[:s], axes=1)
            K[s] = rhs(t + C[s] * h, y + h * dy)
        ynew = y + h * np.tensordot(B, K[:ns], axes=1)
        K[ns] = rhs(t + h, ynew)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err3 = np.tensordot(E3, K, axes=1) / scale
        err5 = np.tensordot(E5, K, axes=1) / scale
        e3 = float(np.sum(err3.real**2 + err3.imag**2))
        e5 = float(np.sum(err5.real**2 + err5.imag**2))
        if e5 == 0.0 and e3 == 0.0:
            err = 0.0
        else:
            err = abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * ncomp)
        if err < 1.0:
            factor = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** (-1.0 / 8.0))
            if rejected:
                factor = min(1.0, factor)
            t = t1 if last else t + h
            nrm = np.sqrt(np.sum(ynew.real**2 + ynew.imag**2, axis=0))
            drift = np.abs(nrm - 1.0)
            if np.any(drift > norm_tol):
                raise NormDriftError(
                    f"norm drift {drift.max():.3e} exceeds {norm_tol:.1e} at t={t:g}")
            y[...] = ynew / nrm
            f = K[ns] / nrm
            n_acc += 1
            rejected = False
            h = max(h_req, h * factor) if last else h * factor
        else:
            h *= max(0.2, 0.9 * err ** (-1.0 / 8.0))
            n_rej += 1
            rejected = True
    return h, n_acc, n_rej, counter[0]
