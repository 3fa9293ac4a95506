"""Checks of the exact identities the toolkit relies on, each returning a
measured value to compare against a tolerance.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import unitary_group

from .ansatz import EmgParams, emg_beta
from .dynamics import Schedule
from .operators import DriverSpec, HamiltonianSpec, dense, eig
from .problems import IsingProblem
from .protocols import (
    cyclic_unitary,
    entropy_accounting,
    stochasticity_error,
    transition_matrix,
    warmstart_ctqw,
)
from .pstqa import (
    ExactSpectrumBackend,
    initial_energy,
    path_independence_check,
    pstqa_entropy,
    pstqa_solve,
    timescale_invariance_check,
)
from .statmech import gibbs_hp_sweep, gibbs_model


@dataclass(frozen=True)
class Check:
    suite: str
    instance: int
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)

    def record(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def gibbs_passivity(h: HamiltonianSpec, beta: float, n_unitaries: int, rng) -> float:
    """Largest work ``Tr[H (rho - U rho U^dagger)]`` over Haar-random unitaries
    for the Gibbs state ``rho`` of ``h``."""
    es = eig(h)
    p = gibbs_model(es, beta).populations
    rho = (es.vectors * p) @ es.vectors.T
    m = dense(h)
    e0 = float(np.sum(m * rho.T).real)
    worst = -np.inf
    for _ in range(n_unitaries):
        u = unitary_group.rvs(h.dim, random_state=rng)
        rho1 = u @ rho @ u.conj().T
        worst = max(worst, e0 - float(np.sum(m * rho1.T).real))
    return worst


def doubly_stochastic(problem: IsingProblem, drive: Schedule, bias: DriverSpec | None = None) -> float:
    u = cyclic_unitary(problem, DriverSpec.transverse_field(problem.n), bias, drive)
    return stochasticity_error(transition_matrix(u))


def linear_path(a0, a1, b0, b1, t_final):
    return [Schedule.linear("A", a0, a1, t_final), Schedule.linear("B", b0, b1, t_final)]


# Near-ground starts push beta to ~1e4 on small instances; the S_d drift is
# integration error and scales with rtol, so the invariant checks run tighter.
RTOL = 1e-10


def sd_drift(h: HamiltonianSpec, schedules, n_grid: int = 25,
             rtol: float = RTOL) -> tuple[float, float]:
    """``(max |S_d(t) - S_d(0)|, |S_d(0)|)`` for the exact backend from ``|+...+>``."""
    be = ExactSpectrumBackend.from_hamiltonian(h)
    tf = schedules[0].t_final
    tr = pstqa_solve(be, schedules, initial_energy(h), np.linspace(0, tf, n_grid),
                     rtol=rtol)
    sd, drift = pstqa_entropy(tr)
    return drift, abs(float(sd[0]))


def tf_invariance(h: HamiltonianSpec, schedules, scales=(1.0, 3.0), rtol: float = RTOL) -> float:
    be = ExactSpectrumBackend.from_hamiltonian(h)
    return timescale_invariance_check(be, schedules, initial_energy(h), list(scales),
                                      rtol=rtol)


def path_independence(h: HamiltonianSpec, a=(1.3, 0.3), b=(0.3, 1.3), t_final=12.0,
                      rtol: float = RTOL) -> float:
    """Relative final-``<H_p>`` gap between a straight path and a two-leg path."""
    be = ExactSpectrumBackend.from_hamiltonian(h)
    straight = linear_path(a[0], a[1], b[0], b[1], t_final)
    half = t_final / 2
    bent = [Schedule(kind="tabulated", channel="A", t_final=t_final,
                     breakpoints=((0.0, a[0]), (half, a[0]), (t_final, a[1]))),
            Schedule(kind="tabulated", channel="B", t_final=t_final,
                     breakpoints=((0.0, b[0]), (half, b[1]), (t_final, b[1])))]
    r = path_independence_check(be, ((a[0], b[0]), (a[1], b[1])), initial_energy(h),
                                (straight, bent), rtol=rtol)
    return r["hp_rel"]


def entropy_ledger(problem: IsingProblem, drive: Schedule, rng, support: int = 16) -> float:
    """``|sd_C - S_0|`` for a random input distribution and string-dependent biased cycles."""
    d = problem.dim
    idx = rng.choice(d, size=min(support, d), replace=False)
    p = np.zeros(d)
    p[idx] = rng.random(idx.size)
    p /= p.sum()
    drv = DriverSpec.transverse_field(problem.n)

    def cycle(z):
        return cyclic_unitary(problem, drv, DriverSpec.biased_local(problem.n, z, 1.0),
                              drive).column(z)

    led = entropy_accounting(p, cycle, problem.n)
    return abs(led.sd_c - led.s0)


def emg_round_trip(rng, trials: int = 200) -> float:
    """Worst ``|beta' - beta| / max(1, beta)`` over random EMG shapes."""
    worst = 0.0
    for _ in range(trials):
        s2 = rng.uniform(0.5, 5.0)
        d = rng.uniform(-0.95, 0.95) * np.sqrt(s2)
        p = EmgParams(rng.normal(), s2, d)
        top = 1.0 / -d if d < 0 else 10.0
        beta = rng.uniform(0.0, 0.99 * top)
        worst = max(worst, abs(emg_beta(p, p.energy(beta)) - beta) / max(1.0, beta))
    return worst


def sweep_monotone(problem: IsingProblem, beta: float, gammas) -> float:
    """Largest increase of ``<H_p>`` between consecutive gamma points."""
    sw = gibbs_hp_sweep(problem, DriverSpec.transverse_field(problem.n), beta, gammas)
    return float(max(0.0, np.max(np.diff(sw.hp))))


def warmstart_gap(problem: IsingProblem, g: float) -> float:
    """``hp_initial - hp_time_avg``; the no-go says this is not positive."""
    r = warmstart_ctqw(problem, g, "ensemble")
    return r.hp_initial - r.hp_time_avg
