from __future__ import annotations

import numpy as np
import pytest

from ctqo.dynamics import (
    CoefficientPath,
    IntegrationError,
    Schedule,
    cyclic_quench_work,
    evolve,
    final_state,
    fmt,
    stage_average,
    stage_std,
)
from ctqo.operators import DriverSpec, HamiltonianSpec, eig
from ctqo.problems import IsingProblem, instance_seed, make_problem


def plus(n):
    return np.full(1 << n, 2 ** (-n / 2), dtype=complex)


def one_qubit():
    # H_p = Z with bit 0 -> +1
    return IsingProblem.from_couplings(1, [], [(0, 1.0)])


def test_schedule_values_and_half_open_intervals():
    s = Schedule.staircase("gamma", [0.5, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert s.value(0.0) == 0.5 and s.value(1.0) == 0.5 and s.value(1.0 + 1e-12) == 1.0
    assert s.value(3.0) == 2.0 and s.boundaries() == [1.0, 2.0]
    lin = Schedule.linear("A", 1.3, 0.3, 12.0)
    assert abs(lin.value(6.0) - 0.8) < 1e-15 and abs(lin.derivative(3.0) + 1 / 12) < 1e-15
    tab = Schedule("tabulated", "B", 2.0, ((0.0, 0.0), (1.0, 1.0), (2.0, 1.0)))
    assert tab.value(0.5) == 0.5 and tab.boundaries() == [1.0]
    g = Schedule.square_gaussian("G", 10.0, 2.0)
    assert g.value(5.0) == 2.0 and g.value(0.0) < 1e-8


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule.staircase("gamma", [1.0, 0.5], [1.0, 2.0], monotone=True)
    with pytest.raises(ValueError):
        Schedule.staircase("gamma", [1.0, 2.0], [2.0, 1.0])
    with pytest.raises(ValueError):
        Schedule.linear("X", 0, 1, 1.0)
    with pytest.raises(ValueError):
        Schedule("tabulated", "A", 2.0, ((0.5, 1.0), (2.0, 1.0)))
    with pytest.raises(ValueError):
        CoefficientPath([Schedule.constant("gamma", 1, 1), Schedule.constant("B", 1, 1)])
    with pytest.raises(ValueError):
        CoefficientPath([Schedule.constant("A", 1, 1), Schedule.constant("B", 1, 2)])


def test_channel_mapping():
    assert CoefficientPath(Schedule.constant("gamma", 0.7, 1.0)).coef(0.5) == (1.0, 0.7)
    assert CoefficientPath(Schedule.constant("G", 0.3, 1.0)).coef(0.5) == (0.3, 1.0)


def test_transverse_field_plus_state_is_stationary(mc6):
    h = HamiltonianSpec(1.0, 0.0, DriverSpec.transverse_field(6), mc6)
    path = CoefficientPath(Schedule.linear("A", 1.0, 1.0, 5.0), defaults=(1.0, 0.0))
    tr = evolve(h, path, plus(6), np.linspace(0, 5, 11))
    np.testing.assert_allclose(tr.hp, mc6.energies.mean(), atol=1e-10)


@pytest.mark.parametrize("method", ["exact", "rk"])
def test_rabi_oscillation(method):
    p = one_qubit()
    h = HamiltonianSpec(1.0, 0.0, DriverSpec.transverse_field(1), p)
    s = (Schedule.constant("A", 1.0, 6.0) if method == "exact" else Schedule.linear("A", 1.0, 1.0, 6.0))
    grid = np.linspace(0, 6, 61)
    tr = evolve(h, CoefficientPath(s, defaults=(1.0, 0.0)), np.array([1, 0], complex), grid,
                method=method)
    np.testing.assert_allclose(tr.hp, np.cos(2 * grid), atol=1e-9)


def test_norm_energy_and_quench_bookkeeping():
    p = make_problem("maxcut", 8, 3)
    h = HamiltonianSpec(1.0, 0.5, DriverSpec.transverse_field(8), p)
    s = Schedule.staircase("gamma", [0.5, 1.0, 1.5], [4.0, 8.0, 12.0])
    ends = [4.0, 8.0]
    grid = np.unique(np.concatenate([np.linspace(0, 12, 97), ends, np.nextafter(ends, 13)]))
    tr = evolve(h, s, plus(8), grid)
    assert np.max(np.abs(tr.norm - 1)) < 1e-10
    for lo, hi in [(0, 4), (4, 8), (8, 12)]:
        m = (grid > lo) & (grid <= hi) if lo else (grid <= hi)
        e = tr.energy[m]
        assert np.max(np.abs(e - e[0])) <= 1e-9 * max(1, abs(e[0]))
    for k, tk in enumerate(ends):
        i = np.searchsorted(grid, tk)
        jump = tr.energy[i + 1] - tr.energy[i]
        assert abs(jump - 0.5 * tr.hp[i]) < 1e-9


def test_exact_matches_adaptive_on_piecewise_schedule():
    p = make_problem("sk", 7, 4)
    h = HamiltonianSpec(1.0, 0.3, DriverSpec.transverse_field(7), p)
    s = Schedule.staircase("gamma", [0.3, 0.8], [2.0, 4.0])
    grid = np.linspace(0, 4, 21)
    a = evolve(h, s, plus(7), grid, method="exact")
    b = evolve(h, s, plus(7), grid, method="rk")
    assert np.max(np.abs(a.hp - b.hp)) < 1e-7


def test_mixture_matches_individual_runs():
    p = make_problem("maxcut", 5, 1)
    h = HamiltonianSpec(1.0, 0.0, DriverSpec.transverse_field(5), p)
    s = [Schedule.linear("A", 1.0, 0.5, 2.0), Schedule.linear("B", 0.0, 1.0, 2.0)]
    blk = np.zeros((32, 2), complex)
    blk[3, 0] = blk[17, 1] = 1
    w = np.array([0.25, 0.75])
    mix = evolve(h, s, blk, [0, 1, 2], weights=w)
    singles = [evolve(h, s, blk[:, j], [0, 1, 2]).hp for j in range(2)]
    np.testing.assert_allclose(mix.hp, w @ np.array(singles), atol=1e-12)


def test_input_validation(mc6):
    h = HamiltonianSpec(1.0, 1.0, DriverSpec.transverse_field(6), mc6)
    s = Schedule.constant("gamma", 1.0, 1.0)
    with pytest.raises(ValueError):
        evolve(h, s, 2 * plus(6), [0, 1])
    with pytest.raises(ValueError):
        evolve(h, s, plus(6), [0, 2])
    with pytest.raises(ValueError):
        evolve(h, Schedule.linear("A", 1, 0, 1.0), plus(6), [0, 1], method="exact")


def test_norm_guard_raises():
    p = make_problem("maxcut", 4, 1)
    h = HamiltonianSpec(1.0, 1.0, DriverSpec.transverse_field(4), p)
    with pytest.raises(IntegrationError):
        evolve(h, Schedule.linear("A", 1, 0, 50.0), plus(4), [0, 50.0], rtol=1e-2, atol=1e-2,
               norm_tol=1e-14)


def test_stage_average_simple_cases(mc6):
    h = HamiltonianSpec(1.0, 1.0, DriverSpec.transverse_field(6), mc6)
    es = eig(h)
    v = es.vectors[:, 3].astype(complex)
    tr = evolve(h, Schedule.constant("gamma", 1.0, 10.0), v, np.linspace(0, 10, 51))
    point = float(es.diag_expectations(mc6.energies)[3])
    assert abs(stage_average(tr, (0, 10)) - point) < 1e-10
    assert stage_std(tr, (0, 10)) < 1e-10
    with pytest.raises(ValueError):
        stage_average(tr, (0, 10), burn_in=10)


def test_cyclic_quench_work_trivial(mc6):
    h = HamiltonianSpec(1.0, 0.5, DriverSpec.transverse_field(6), mc6)
    assert cyclic_quench_work(h, 0.5, 0.5, 1.0, 3.0, plus(6)) == 0.0
    # a ground state is passive, so no work comes out of the cycle
    v = eig(h).vectors[:, 0].astype(complex)
    assert cyclic_quench_work(h, 0.5, 1.0, 1.0, 3.0, v) <= 1e-12
    # eigenstate of both couplings: nothing moves
    flat = IsingProblem.from_couplings(6, [], [], family="ising")
    hf = HamiltonianSpec(1.0, 0.5, DriverSpec.transverse_field(6), flat)
    assert abs(cyclic_quench_work(hf, 0.5, 1.0, 1.0, 3.0, plus(6))) < 1e-12


@pytest.mark.slow
def test_quench_work_planck_campaign():
    # W = dgamma (<H_p(t2)> - <H_p(t1)>) within 3 sigma of the stage fluctuations
    ok = 0
    for i in range(50):
        p = make_problem("maxcut", 10, instance_seed(21, i))
        h = HamiltonianSpec(1.0, 0.5, DriverSpec.transverse_field(10), p)
        s = Schedule.staircase("gamma", [0.5, 1.0], [10.0, 20.0])
        grid = np.linspace(0, 20, 201)
        tr = evolve(h, s, plus(10), grid)
        w = 0.5 * (tr.hp[-1] - tr.hp[100])
        tol = 0.5 * 3 * max(stage_std(tr, (0, 10)), stage_std(tr, (10, 20)))
        ok += w <= tol
    assert ok >= 48


def test_final_state_and_csv(mc6):
    h = HamiltonianSpec(1.0, 1.0, DriverSpec.transverse_field(6), mc6)
    s = Schedule.constant("gamma", 1.0, 2.0)
    tr = evolve(h, s, plus(6), [0, 1, 2], compute_sd=True)
    np.testing.assert_allclose(final_state(h, s, plus(6)), tr.final_state, atol=1e-13)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,hp,hd,energy,sd" and len(lines) == 4
    assert lines[1].split(",")[0] == fmt(0.0) == "0.00000000000e+00"
