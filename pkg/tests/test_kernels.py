from __future__ import annotations

import numpy as np
import pytest

from ctqo import kernels
from ctqo.problems import make_problem

IMPLS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        kernels.implementation("fortran")


@pytest.mark.parametrize("impl", IMPLS)
def test_ising_energies_agree(impl):
    p = make_problem("sk", 7, 3)
    ci, cj, cw = zip(*p.couplings)
    fi, fv = zip(*p.fields)
    e = kernels.ising_energies(7, ci, cj, cw, fi, fv, impl=impl)
    np.testing.assert_allclose(e, p.energies, atol=1e-12)


@pytest.mark.parametrize("impl", IMPLS)
def test_apply_agrees(impl, rng):
    n = 6
    d = rng.normal(size=1 << n)
    psi = rng.normal(size=(1 << n, 2)) + 1j * rng.normal(size=(1 << n, 2))
    out = kernels.hamiltonian_apply(psi, n, 0.7, d, impl=impl)
    ref = kernels.hamiltonian_apply(psi, n, 0.7, d, impl="python")
    np.testing.assert_allclose(out, ref, atol=1e-13)


def test_compiled_and_python_propagators_agree():
    if kernels.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    from ctqo.dynamics import Schedule, evolve
    from ctqo.operators import DriverSpec, HamiltonianSpec

    p = make_problem("maxcut", 6, 2)
    h = HamiltonianSpec(1.0, 0.0, DriverSpec.transverse_field(6), p)
    s = [Schedule.linear("A", 1.0, 0.2, 3.0), Schedule.linear("B", 0.0, 1.0, 3.0)]
    psi = np.full(64, 1 / 8, dtype=complex)
    a = evolve(h, s, psi, [0, 1.5, 3.0], impl="cython")
    b = evolve(h, s, psi, [0, 1.5, 3.0], impl="python")
    np.testing.assert_allclose(a.hp, b.hp, atol=1e-12)
