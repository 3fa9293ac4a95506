from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate, stats

from ctqo.ansatz import (
    EmgBackend,
    EmgModel,
    EmgParams,
    GaussianBackend,
    GaussianModel,
    delta_partials,
    emg_beta,
    emg_expectations,
    emg_pstqa,
    gaussian_closed_form,
    maxcut_gaussian_hp,
    moments_provider,
)
from ctqo.dynamics import Schedule
from ctqo.operators import DiagonalMoments, DriverSpec, HamiltonianSpec, MaxCutMoments
from ctqo.pstqa import ExactSpectrumBackend, initial_energy, pstqa_solve
from ctqo.statmech import BetaRangeError


def ramp(a0, a1, b0, b1, tf):
    return [Schedule.linear("A", a0, a1, tf), Schedule.linear("B", b0, b1, tf)]


def test_moments_provider_selection(mc6, sk5):
    tf6 = DriverSpec.transverse_field(6)
    assert isinstance(moments_provider(mc6, tf6), MaxCutMoments)
    assert isinstance(moments_provider(sk5, DriverSpec.transverse_field(5)), DiagonalMoments)
    bias = DriverSpec.biased_local(6, 0, 1.0)
    assert isinstance(moments_provider(mc6, tf6, bias), DiagonalMoments)


def test_delta_partials_generic_matches_analytic():
    m = MaxCutMoments(8, 14.0, -3.5).with_partials(0.7, 1.3)
    analytic = delta_partials(m)
    generic = delta_partials({k: v for k, v in m.items() if not k.startswith("delta")})
    assert np.allclose(generic, analytic, rtol=1e-12)
    zero = delta_partials({"m3": 0.0, "m3_a": 0.0, "m3_b": 0.0})
    assert zero == (0.0, 0.0, 0.0)


def test_gaussian_zero_constant_gives_infinite_temperature():
    mom = MaxCutMoments(6, 9.0, 1.0)
    model = GaussianModel.from_initial(mom, 1.0, 0.5, 0.0)
    assert model.c == 0.0
    tr = gaussian_closed_form(mom, ramp(1.0, 0.2, 0.5, 1.5, 4.0), e0=0.0,
                              grid=np.linspace(0, 4, 9))
    assert np.all(tr.beta == 0.0)
    assert np.all(tr.energy == 0.0)


def test_gaussian_model_relations():
    mom = MaxCutMoments(6, 9.0, 1.0)
    model = GaussianModel.from_initial(mom, 1.0, 0.3, -1.7)
    for beta in (0.0, 0.2, 1.1):
        e = model.energy(beta, 0.6, 0.9)
        assert model.beta(e, 0.6, 0.9) == pytest.approx(beta, abs=1e-14)
        h = 1e-5
        de = -(model.log_z(beta + h, 0.6, 0.9) - model.log_z(beta - h, 0.6, 0.9)) / (2 * h)
        assert de == pytest.approx(e, rel=1e-8)


def test_maxcut_gaussian_hp_matches_closed_form(mc6):
    drv = DriverSpec.transverse_field(6)
    h = HamiltonianSpec(1.2, 0.1, drv, mc6)
    e0 = initial_energy(h)
    assert e0 == pytest.approx(-1.2 * 6, abs=1e-12)
    mom = MaxCutMoments.from_problem(mc6)
    tr = gaussian_closed_form(mom, ramp(1.2, 0.1, 0.1, 1.4, 5.0), e0=e0,
                              grid=np.linspace(0, 5, 11))
    want = [maxcut_gaussian_hp(6, mc6.kappa2, 1.2, 0.1, a, b) for a, b in zip(tr.a, tr.b)]
    assert np.allclose(tr.hp, want, rtol=1e-12, atol=1e-14)
    # entropy deficit is constant by construction
    assert np.ptp(tr.sd) == 0.0


def test_gaussian_closed_form_matches_integrated_backend(mc6):
    mom = MaxCutMoments.from_problem(mc6)
    sched = ramp(1.2, 0.1, 0.1, 1.4, 5.0)
    grid = np.linspace(0, 5, 11)
    closed = gaussian_closed_form(mom, sched, e0=-7.2, grid=grid)
    ode = pstqa_solve(GaussianBackend(mom), sched, -7.2, grid, rtol=1e-10)
    assert np.max(np.abs(ode.energy - closed.energy)) < 1e-6
    assert np.max(np.abs(ode.beta - closed.beta)) < 1e-6
    assert np.max(np.abs(ode.hp - closed.hp)) < 1e-6


def test_gaussian_closed_form_matches_exact_on_synthetic_spectrum(sk5):
    # levels mu + sigma x_k: beta sigma is conserved, so E - mu stays proportional to sigma
    mom = DiagonalMoments(DriverSpec.transverse_field(5), sk5)
    k = 4001
    x = stats.norm.ppf((np.arange(k) + 0.5) / k)
    x = (x - x.mean()) / x.std()
    be = ExactSpectrumBackend.scaled_spectrum(x, mom)
    sched = ramp(1.1, 0.1, 0.2, 1.0, 6.0)
    m0 = mom.with_partials(1.1, 0.2)
    e0 = m0["mu"] - 0.8 * np.sqrt(m0["sigma2"])
    grid = np.linspace(0, 6, 13)
    exact = pstqa_solve(be, sched, e0, grid, rtol=1e-10)
    closed = gaussian_closed_form(mom, sched, e0=e0, grid=grid)
    assert np.max(np.abs(exact.energy - closed.energy)) < 1e-6
    assert np.max(np.abs(exact.hp - closed.hp)) < 1e-6
    sig = np.sqrt([mom.with_partials(a, b)["sigma2"] for a, b in zip(exact.a, exact.b)])
    bs = exact.beta * sig
    assert np.ptp(bs) < 1e-6
    # dense Gaussian quantiles: the Gaussian beta is close but not exact
    assert bs[0] == pytest.approx(0.8, rel=1e-2)


@pytest.mark.parametrize("delta", [-0.6, 0.5])
def test_emg_log_z_against_numerical_laplace_transform(delta):
    p = EmgParams(0.3, 1.4, delta)
    s = np.sqrt(p.s2)
    k = abs(delta) / s
    dist = stats.exponnorm(k, loc=0.0, scale=s)
    sign = np.sign(delta)
    mean, var, skew = dist.stats(moments="mvs")
    # X = nu + sign * Y with Y exponnorm
    assert p.nu + sign * mean == pytest.approx(p.mu, rel=1e-12)
    assert var == pytest.approx(p.sigma2, rel=1e-12)
    assert sign * skew * var ** 1.5 == pytest.approx(2 * delta ** 3, rel=1e-10)
    for beta in (0.0, 0.4, 1.0):
        val, _ = integrate.quad(lambda y: dist.pdf(y) * np.exp(-beta * (p.nu + sign * y)),
                                -40 * s, 80 * s, epsabs=0, epsrel=1e-12, limit=400)
        assert p.log_z(beta) == pytest.approx(np.log(val), abs=1e-9)


def test_emg_energy_is_derivative_of_log_z():
    p = EmgParams(-0.4, 2.0, -0.7)
    h = 1e-5
    for beta in (0.0, 0.3, 1.2):
        de = -(p.log_z(beta + h) - p.log_z(beta - h)) / (2 * h)
        assert p.energy(beta) == pytest.approx(de, rel=1e-8, abs=1e-10)
    with pytest.raises(BetaRangeError):
        p.energy(1.0 / 0.7 + 0.1)


def test_emg_round_trip(rng):
    worst = 0.0
    for _ in range(500):
        s2 = rng.uniform(0.5, 5.0)
        d = rng.uniform(-0.95, 0.95) * np.sqrt(s2)
        p = EmgParams(rng.normal(), s2, d)
        top = 1.0 / -d if d < 0 else 10.0
        beta = rng.uniform(0.0, 0.99 * top)
        worst = max(worst, abs(emg_beta(p, p.energy(beta)) - beta) / max(1.0, beta))
    assert worst <= 1e-9
    p = EmgParams(0.7, 1.5, 0.4)
    assert emg_beta(p, 0.7) == 0.0


def test_emg_beta_domain_errors():
    with pytest.raises(BetaRangeError):
        emg_beta(EmgParams(0.0, 1.0, 1.0), -0.5)
    with pytest.raises(BetaRangeError):
        emg_beta(EmgParams(0.0, 1.0, 0.3), 0.2)


def test_emg_small_delta_limit():
    base = EmgParams(0.2, 1.7, 0.0)
    for d in (1e-3, -1e-3, 1e-5):
        p = EmgParams(0.2, 1.7, d)
        for beta in (0.1, 0.9):
            # leading correction is O(beta^2 Delta^3)
            assert abs(p.energy(beta) - base.energy(beta)) <= 2 * beta ** 2 * abs(d) ** 3
            e = base.energy(beta)
            assert emg_beta(p, e) == pytest.approx(emg_beta(base, e), abs=10 * abs(d) ** 2)


def test_emg_skew_sign():
    for d in (0.5, -0.5):
        p = EmgParams(0.0, 1.0, d)
        g = EmgParams(0.0, 1.0, 0.0)
        for beta in (0.3, 1.0):
            assert np.sign(p.energy(beta) - g.energy(beta)) == np.sign(d)


def test_emg_expectations_at_infinite_temperature():
    model = EmgModel(MaxCutMoments(8, 12.0, 2.5))
    assert emg_expectations(model, 0.8, 0.6, 0.0) == (0.0, 0.0)


def test_emg_expectations_are_coefficient_derivatives():
    model = EmgModel(MaxCutMoments(8, 12.0, -2.5))
    a, b, beta = 0.8, 0.6, 0.35
    h = 1e-6

    def lz(a, b):
        return model.params(a, b).log_z(beta)

    hd, hp = emg_expectations(model, a, b, beta)
    assert hd == pytest.approx(-(lz(a + h, b) - lz(a - h, b)) / (2 * h * beta), rel=1e-7)
    assert hp == pytest.approx(-(lz(a, b + h) - lz(a, b - h)) / (2 * h * beta), rel=1e-7)


def test_emg_backend_variance_is_energy_slope():
    be = EmgBackend(MaxCutMoments(8, 12.0, 2.5))
    h = 1e-5
    th = be.thermo(0.4, 0.9, 0.7)
    slope = -(be.thermo(0.4 + h, 0.9, 0.7).energy - be.thermo(0.4 - h, 0.9, 0.7).energy) / (2 * h)
    assert th.var == pytest.approx(slope, rel=1e-7)


def test_emg_without_skew_reduces_to_gaussian():
    mom = MaxCutMoments(10, 15.0, 0.0)
    sched = ramp(1.0, 0.1, 0.05, 1.2, 6.0)
    grid = np.linspace(0, 6, 13)
    emg = pstqa_solve(EmgBackend(mom), sched, -10.0, grid, rtol=1e-10)
    gau = gaussian_closed_form(mom, sched, e0=-10.0, grid=grid)
    assert np.max(np.abs(emg.energy - gau.energy)) < 1e-6
    assert np.max(np.abs(emg.hp - gau.hp)) < 1e-6


def test_emg_pstqa_constant_schedule(mc6):
    s = [Schedule.constant("A", 1.0, 2.0), Schedule.constant("B", 0.4, 2.0)]
    tr = emg_pstqa(mc6, DriverSpec.transverse_field(6), s, grid=np.linspace(0, 2, 5))
    assert tr.energy[0] == pytest.approx(-6.0, abs=1e-12)
    for col in (tr.energy, tr.beta, tr.hp):
        assert np.ptp(col) == 0.0
