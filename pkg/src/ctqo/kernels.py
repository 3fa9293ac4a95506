"""Kernel selection.

The compiled extension is used when it imports; otherwise (or when the
environment variable ``CTQO_PURE_PYTHON`` is set to a non-empty value other
than ``0``) the numpy implementations are used. ``BACKEND`` names the active one.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from . import _kernels_py

_FORCE_PY = os.environ.get("CTQO_PURE_PYTHON", "") not in ("", "0")

_compiled = None
if not _FORCE_PY:
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"

DOP853_TABLEAU = (
    np.ascontiguousarray(_dop.A[:12, :12], dtype=np.float64),
    np.ascontiguousarray(_dop.B, dtype=np.float64),
    np.ascontiguousarray(_dop.C[:12], dtype=np.float64),
    np.ascontiguousarray(_dop.E3, dtype=np.float64),
    np.ascontiguousarray(_dop.E5, dtype=np.float64),
)

NormDriftError = _impl.NormDriftError


def implementation(name: str | None = None):
    """Return the kernel module by name (``"cython"``/``"python"``) or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown kernel implementation {name!r}")


def ising_energies(n, edge_i, edge_j, weights, field_idx, field_vals, impl=None):
    mod = implementation(impl)
    return mod.ising_energies(
        int(n),
        np.ascontiguousarray(edge_i, dtype=np.int64),
        np.ascontiguousarray(edge_j, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(field_idx, dtype=np.int64),
        np.ascontiguousarray(field_vals, dtype=np.float64),
    )


def hamiltonian_apply(psi, n, tf, diag, impl=None):
    """``diag * psi - tf * sum_i X_i psi`` for a vector or a (dim, m) block."""
    psi = np.asarray(psi)
    vec = psi.ndim == 1
    block = np.ascontiguousarray(psi.reshape(psi.shape[0], -1), dtype=np.complex128)
    out = implementation(impl).hamiltonian_apply(
        block, int(n), float(tf), np.ascontiguousarray(diag, dtype=np.float64))
    out = np.asarray(out)
    return out[:, 0] if vec else out


def dop853_propagate(y, n, has_tf, d_a, d_b, d_c, coef, t0, t1, h, rtol, atol,
                     norm_tol, max_steps, impl=None):
    """Advance the C-contiguous complex block ``y`` in place; see ``_kernels.pyx``."""
    A, B, C, E3, E5 = DOP853_TABLEAU
    return implementation(impl).dop853_propagate(
        y, int(n), bool(has_tf),
        np.ascontiguousarray(d_a, dtype=np.float64),
        np.ascontiguousarray(d_b, dtype=np.float64),
        np.ascontiguousarray(d_c, dtype=np.float64),
        coef, float(t0), float(t1), float(h), float(rtol), float(atol),
        float(norm_tol), int(max_steps), A, B, C, E3, E5)
