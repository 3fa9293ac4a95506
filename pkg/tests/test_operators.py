from __future__ import annotations

import numpy as np
import pytest

from ctqo.operators import (
    DiagonalMoments,
    DriverSpec,
    EigCache,
    HamiltonianSpec,
    MaxCutMoments,
    Moments,
    apply,
    dense,
    dense_moments,
    eig,
    gcond_threshold,
    moments,
)
from ctqo.problems import Graph, IsingProblem, SizeCapError, make_problem, maxcut_problem


def _problem(n, seed=0, family="maxcut"):
    if n == 1:
        return IsingProblem.from_couplings(1, [], [(0, 1.0)])
    return make_problem(family, n, seed)


def _random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def test_transverse_field_on_plus_state():
    n = 5
    p = _problem(n)
    h = HamiltonianSpec(1.0, 0.0, DriverSpec.transverse_field(n), p)
    plus = np.full(p.dim, 2 ** (-n / 2), dtype=complex)
    np.testing.assert_allclose(apply(h, plus), -n * plus, atol=1e-12)


def test_diagonal_on_basis_state(mc6):
    h = HamiltonianSpec(0.0, 1.0, DriverSpec.transverse_field(6), mc6)
    for z in (0, 7, 63):
        e = np.zeros(64, dtype=complex)
        e[z] = 1
        out = apply(h, e)
        assert out[z] == mc6.energies[z] and np.count_nonzero(out) <= 1


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("kind", ["transverse_field", "biased_local", "projector_bias"])
def test_apply_matches_dense(n, kind, rng):
    p = _problem(n, seed=n, family="sk")
    drv = (DriverSpec.transverse_field(n) if kind == "transverse_field"
           else getattr(DriverSpec, kind)(n, 1 % (1 << n), 0.7))
    bias = DriverSpec.biased_local(n, 0, 0.3) if kind == "transverse_field" else None
    h = HamiltonianSpec(0.8, 1.3, drv, p, bias)
    m = dense(h)
    assert np.array_equal(m, m.T)
    for _ in range(100):
        psi = _random_state(rng, p.dim)
        ref = m @ psi
        assert np.linalg.norm(apply(h, psi) - ref) <= 1e-12 * max(1.0, np.linalg.norm(ref))


def test_apply_block_and_dimension_check(mc6, rng):
    h = HamiltonianSpec(0.5, 1.0, DriverSpec.transverse_field(6), mc6)
    blk = np.stack([_random_state(rng, 64) for _ in range(3)], axis=1)
    out = apply(h, blk)
    for j in range(3):
        np.testing.assert_allclose(out[:, j], apply(h, blk[:, j]), atol=1e-13)
    with pytest.raises(ValueError):
        apply(h, np.ones(32))


def test_dense_small_cases():
    p = _problem(1)
    np.testing.assert_array_equal(dense(HamiltonianSpec(1.0, 0.0, DriverSpec.transverse_field(1), p)),
                                  [[0, -1], [-1, 0]])
    np.testing.assert_array_equal(dense(HamiltonianSpec(0.0, 1.0, DriverSpec.transverse_field(1), p)),
                                  np.diag([1.0, -1.0]))


def test_dense_columns_match_apply():
    p = make_problem("sk", 3, 5)
    h = HamiltonianSpec(0.6, 1.1, DriverSpec.transverse_field(3), p, DriverSpec.projector_bias(3, 2, 0.5))
    m = dense(h)
    for z in range(8):
        e = np.zeros(8)
        e[z] = 1
        np.testing.assert_allclose(m[:, z], apply(h, e).real, atol=1e-15)


def test_driver_tables():
    d = DriverSpec.biased_local(3, 0b101, 2.0)
    assert np.argmin(d.diagonal) == 0b101 and d.diagonal.min() == -6.0
    pb = DriverSpec.projector_bias(3, 6, 1.5)
    assert pb.diagonal[6] == -1.5 and np.count_nonzero(pb.diagonal) == 1
    with pytest.raises(ValueError):
        DriverSpec.biased_local(3, 9, 1.0)
    with pytest.raises(ValueError):
        DriverSpec.projector_bias(3, 1, -1.0)


def test_eig_small_and_diagonal(mc6):
    es = eig(HamiltonianSpec(1.0, 0.0, DriverSpec.transverse_field(1), _problem(1)), cache=None)
    np.testing.assert_allclose(es.values, [-1, 1], atol=1e-14)
    es = eig(HamiltonianSpec(0.0, 1.0, DriverSpec.transverse_field(6), mc6), cache=None)
    np.testing.assert_array_equal(es.values, np.sort(mc6.energies))


@pytest.mark.parametrize("family", ["maxcut", "sk"])
def test_eig_reconstruction_and_trace(family):
    p = make_problem(family, 10, 3)
    h = HamiltonianSpec(0.7, 1.2, DriverSpec.transverse_field(10), p)
    es = eig(h, cache=None)
    m = dense(h)
    rec = (es.vectors * es.values) @ es.vectors.T
    assert np.linalg.norm(m - rec) <= 1e-10 * np.linalg.norm(m)
    assert np.all(np.diff(es.values) >= 0)
    mu = moments(h.driver, p, 0.7, 1.2).mu
    assert abs(es.values.sum() - p.dim * mu) <= 1e-8 * max(1.0, np.abs(es.values).sum())
    np.testing.assert_allclose(es.vectors.T @ es.vectors, np.eye(p.dim), atol=1e-10)


def test_parity_solver_matches_dense_solver():
    p = make_problem("maxcut", 8, 4)
    h = HamiltonianSpec(0.9, 1.0, DriverSpec.transverse_field(8), p)
    assert h.parity_symmetric
    es = eig(h, cache=None)
    np.testing.assert_allclose(es.values, np.linalg.eigvalsh(dense(h)), atol=1e-10)
    m = dense(h)
    np.testing.assert_allclose(m @ es.vectors, es.vectors * es.values, atol=1e-10)


def test_eig_cache_hits_and_size_cap():
    p = make_problem("maxcut", 5, 1)
    cache = EigCache()
    h = HamiltonianSpec(1.0, 0.5, DriverSpec.transverse_field(5), p)
    a = eig(h, cache=cache)
    b = eig(h.with_coefficients(1.0, 0.5), cache=cache)
    assert a is b and cache.hits == 1
    with pytest.raises(SizeCapError):
        eig(h, cap=4, cache=None)


def test_moments_examples():
    k3 = maxcut_problem(Graph(n=3, edges=((0, 1), (0, 2), (1, 2))))
    m = moments(DriverSpec.transverse_field(3), k3, 0.0, 1.0)
    assert abs(m.delta ** 3 - 3.0) < 1e-12
    assert m.trdp == 0 and gcond_threshold(m) == 0
    one = _problem(1)
    assert abs(moments(DriverSpec.transverse_field(1), one, 1.0, 0.0).sigma2 - 1.0) < 1e-15
    syn = Moments(mu=0, sigma2=1, delta=0, trp2=4, trd2=1, trdp=-2, trp_mean=0, trd_mean=0)
    assert gcond_threshold(syn) == 0.5
    with pytest.raises(ValueError):
        gcond_threshold(Moments(0, 1, 0, 0.0, 1, 0, 0, 0))


@pytest.mark.parametrize("family,n", [("maxcut", 8), ("sk", 7), ("maxcut", 10)])
def test_moments_match_spectrum(family, n):
    p = make_problem(family, n, 2)
    for a, b in [(1.3, 0.3), (0.2, 1.1)]:
        h = HamiltonianSpec(a, b, DriverSpec.transverse_field(n), p)
        w = eig(h, cache=None).values
        m = moments(h.driver, p, a, b)
        assert abs(m.sigma2 - w.var()) <= 1e-8 * w.var()
        m3 = np.mean((w - w.mean()) ** 3)
        assert abs(m.m3 - m3) <= 1e-8 * max(1.0, abs(m3))
        if family == "maxcut":
            assert abs(m.sigma2 - (a * a * n + b * b * p.kappa2)) < 1e-9
            assert abs(m.delta ** 3 - 3 * p.kappa3 * b ** 3) < 1e-9 * max(1, p.kappa3)
            assert m.mu == 0


def test_moments_with_bias_match_dense():
    p = make_problem("sk", 5, 8)
    for bias in (DriverSpec.biased_local(5, 3, 0.4), DriverSpec.projector_bias(5, 9, 1.2)):
        h = HamiltonianSpec(0.9, 1.1, DriverSpec.transverse_field(5), p, bias)
        m = moments(h.driver, p, 0.9, 1.1, bias)
        d = dense_moments(h)
        for f in ("mu", "sigma2", "m3", "trp2", "trd2", "trdp", "trp_mean", "trd_mean"):
            assert abs(getattr(m, f) - getattr(d, f)) < 1e-10, f


def test_diagonal_driver_moments_match_dense():
    p = make_problem("sk", 4, 1)
    h = HamiltonianSpec(0.6, 1.0, DriverSpec.biased_local(4, 5, 1.0), p)
    m = moments(h.driver, p, 0.6, 1.0)
    d = dense_moments(h)
    assert abs(m.sigma2 - d.sigma2) < 1e-12 and abs(m.trdp - d.trdp) < 1e-12


def test_partials_finite_difference():
    p = make_problem("maxcut", 8, 6)
    for prov in (DiagonalMoments(DriverSpec.transverse_field(8), p), MaxCutMoments.from_problem(p)):
        a, b, h = 0.8, 0.6, 1e-6
        d = prov.with_partials(a, b)
        for key in ("mu", "sigma2", "m3"):
            fa = (prov.with_partials(a + h, b)[key] - prov.with_partials(a - h, b)[key]) / (2 * h)
            fb = (prov.with_partials(a, b + h)[key] - prov.with_partials(a, b - h)[key]) / (2 * h)
            assert abs(fa - d[key + "_a"]) < 1e-6 * max(1, abs(fa))
            assert abs(fb - d[key + "_b"]) < 1e-6 * max(1, abs(fb))


def test_plus_state_samples_table_mean(sk5):
    plus = np.full(sk5.dim, 2 ** (-5 / 2))
    h = HamiltonianSpec(0.0, 1.0, DriverSpec.transverse_field(5), sk5)
    val = np.vdot(plus, apply(h, plus)).real
    assert abs(val - sk5.energies.mean()) < 1e-12
