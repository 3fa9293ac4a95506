"""Closed-form density-of-states models for the thermal annealing equations.

Two shapes are provided: a Gaussian, fixed by the mean and variance of the
spectrum, and an exponentially modified Gaussian (EMG) that adds a skew
parameter ``Delta`` with ``Delta^3 = m3 / 2``. Both take their moments from a
provider exposing ``with_partials(a, b)``, so the cost is independent of the
Hilbert-space dimension whenever the moments are analytic (MAX-CUT with a
transverse-field driver).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dynamics import CoefficientPath
from .operators import DiagonalMoments, DriverSpec, HamiltonianSpec, MaxCutMoments
from .problems import IsingProblem
from .pstqa import (
    PartitionBackend,
    PstqaTrajectory,
    Thermo,
    _as_path,
    initial_energy,
    pstqa_solve,
)
from .statmech import BetaRangeError

log = logging.getLogger(__name__)


def moments_provider(problem: IsingProblem, driver: DriverSpec, bias: DriverSpec | None = None):
    """Analytic MAX-CUT moments when they apply, energy-table moments otherwise."""
    if (problem.family == "maxcut" and problem.kappa3 is not None and bias is None
            and not driver.is_diagonal):
        return MaxCutMoments.from_problem(problem)
    return DiagonalMoments(driver, problem, bias)


def delta_partials(m: dict) -> tuple[float, float, float]:
    """``Delta = cbrt(m3 / 2)`` and its partial derivatives in a and b.

    Providers may supply ``delta`` directly, which avoids the ``0/0`` of the
    generic formula where ``Delta`` vanishes.
    """
    if "delta" in m:
        return m["delta"], m["delta_a"], m["delta_b"]
    d = float(np.cbrt(m["m3"] / 2.0))
    if abs(d) < 1e-150:
        return d, 0.0, 0.0
    return d, m["m3_a"] / (6.0 * d * d), m["m3_b"] / (6.0 * d * d)


# ---------------------------------------------------------------------------
# Gaussian


@dataclass(frozen=True)
class GaussianModel:
    """Gaussian density of states with integration constant ``c``.

    ``E(t) = mu(t) + c sigma(t)`` and ``beta(t) = -c / sigma(t)``.
    """

    moments: object
    c: float = 0.0

    @classmethod
    def from_initial(cls, moments, a0: float, b0: float, e0: float) -> "GaussianModel":
        m = moments.with_partials(a0, b0)
        s = np.sqrt(m["sigma2"])
        if not s > 0:
            raise ValueError("sigma(0) must be positive")
        return cls(moments, float((e0 - m["mu"]) / s))

    def log_z(self, beta: float, a: float, b: float) -> float:
        m = self.moments.with_partials(a, b)
        return -beta * m["mu"] + 0.5 * beta * beta * m["sigma2"]

    def energy(self, beta: float, a: float, b: float) -> float:
        m = self.moments.with_partials(a, b)
        return m["mu"] - beta * m["sigma2"]

    def beta(self, energy: float, a: float, b: float) -> float:
        m = self.moments.with_partials(a, b)
        return (m["mu"] - energy) / m["sigma2"]


class GaussianBackend(PartitionBackend):
    """``ln Z = -beta mu + beta^2 sigma^2 / 2``."""

    kind = "gaussian"

    def __init__(self, moments):
        self.moments = moments

    def thermo(self, beta, a, b) -> Thermo:
        m = self.moments.with_partials(a, b)
        mu, s2 = m["mu"], m["sigma2"]
        return Thermo(-beta * mu + 0.5 * beta * beta * s2, mu - beta * s2, s2,
                      m["mu_a"] - 0.5 * beta * m["sigma2_a"], m["mu_b"] - 0.5 * beta * m["sigma2_b"])

    def solve_beta(self, energy, a, b, guess=None):
        m = self.moments.with_partials(a, b)
        beta = (m["mu"] - energy) / m["sigma2"]
        if beta < -1e-12 * np.sqrt(m["sigma2"]):
            raise BetaRangeError(f"energy {energy:.10g} above the mean (negative temperature)")
        return max(beta, 0.0)


def gaussian_closed_form(moments, a_sched, b_sched=None, e0: float | None = None,
                         grid=None) -> PstqaTrajectory:
    """Analytic Gaussian trajectory ``E = mu + c sigma``; no ODE is integrated.

    Parameters
    ----------
    moments : provider with ``with_partials(a, b)``
    a_sched, b_sched : Schedule
        Coefficient schedules; ``a_sched`` may also be a full list of schedules
        or a ``CoefficientPath`` with ``b_sched`` omitted.
    e0 : float
        Initial energy.
    grid : array_like
        Output times.
    """
    if b_sched is None:
        path = _as_path(a_sched)
    else:
        path = CoefficientPath([a_sched, b_sched])
    if e0 is None or grid is None:
        raise ValueError("e0 and grid are required")
    grid = np.asarray(grid, dtype=float)
    a0, b0 = path.coef(0.0)
    model = GaussianModel.from_initial(moments, a0, b0, e0)
    c = model.c
    cols = {k: np.empty(grid.size) for k in ("a", "b", "e", "beta", "hd", "hp", "sd")}
    for i, t in enumerate(grid):
        a, b = path.coef(t)
        m = moments.with_partials(a, b)
        s = np.sqrt(m["sigma2"])
        if not s > 0:
            raise ValueError(f"sigma vanishes at t={t:.6g}")
        beta = -c / s
        cols["a"][i], cols["b"][i] = a, b
        cols["e"][i] = m["mu"] + c * s
        cols["beta"][i] = beta
        cols["hd"][i] = m["mu_a"] - 0.5 * beta * m["sigma2_a"]
        cols["hp"][i] = m["mu_b"] - 0.5 * beta * m["sigma2_b"]
        cols["sd"][i] = -0.5 * c * c
    return PstqaTrajectory(grid, grid / path.t_final, cols["a"], cols["b"], cols["e"],
                           cols["beta"], cols["hd"], cols["hp"], cols["sd"], "gaussian_closed_form")


def maxcut_gaussian_hp(n: int, kappa2: float, a0: float, b0: float, a: float, b: float) -> float:
    """``<H_p>`` for MAX-CUT from ``|+...+>`` under the Gaussian model."""
    return -n * a0 * b * kappa2 / (np.sqrt(a0 * a0 * n + b0 * b0 * kappa2)
                                   * np.sqrt(a * a * n + b * b * kappa2))


# ---------------------------------------------------------------------------
# exponentially modified Gaussian


@dataclass(frozen=True)
class EmgParams:
    """EMG shape at one ``(a, b)``.

    ``nu = mu - Delta``, ``s2 = sigma^2 - Delta^2`` and ``lam = 1 / Delta``.
    """

    mu: float
    sigma2: float
    delta: float

    @property
    def nu(self) -> float:
        return self.mu - self.delta

    @property
    def s2(self) -> float:
        return self.sigma2 - self.delta ** 2

    @property
    def lam(self) -> float:
        return np.inf if self.delta == 0 else 1.0 / self.delta

    @property
    def width(self) -> float:
        return float(np.sqrt(self.sigma2))

    def log_z(self, beta: float) -> float:
        q = 1.0 + beta * self.delta
        if q <= 0:
            raise BetaRangeError("1 + beta Delta <= 0")
        return float(-np.log(q) - self.nu * beta + 0.5 * beta * beta * self.s2)

    def energy(self, beta: float) -> float:
        q = 1.0 + beta * self.delta
        if q <= 0:
            raise BetaRangeError("1 + beta Delta <= 0")
        return float(self.mu - beta * self.sigma2 + beta * beta * self.delta ** 3 / q)


@dataclass(frozen=True)
class EmgModel:
    """EMG density of states driven by a moments provider."""

    moments: object

    def partials(self, a: float, b: float) -> dict:
        m = dict(self.moments.with_partials(a, b))
        m["delta"], m["delta_a"], m["delta_b"] = delta_partials(m)
        return m

    def params(self, a: float, b: float) -> EmgParams:
        m = self.partials(a, b)
        return EmgParams(m["mu"], m["sigma2"], m["delta"])


def emg_beta(model, energy: float, a: float | None = None, b: float | None = None,
             rtol: float = 1e-9) -> float:
    """Invert the EMG energy relation for ``beta``.

    Solves ``Delta (sigma^2 - Delta^2) beta^2 + (sigma^2 + Delta x) beta + x = 0``
    with ``x = E - mu``, taking the ``+omega`` root,
    ``omega^2 = (sigma^2 + Delta x)^2 + 4 Delta x (Delta^2 - sigma^2)``. The
    root must reproduce ``energy`` to ``rtol`` times the width; otherwise the
    other root is tried and the switch is logged.

    Parameters
    ----------
    model : EmgParams or EmgModel
        An ``EmgModel`` needs ``a`` and ``b``.

    Raises
    ------
    BetaRangeError
        ``Delta^2 >= sigma^2``, a negative discriminant, or no root passing the
        round trip.
    """
    p = model if isinstance(model, EmgParams) else model.params(a, b)
    s2, d = p.sigma2, p.delta
    if d * d >= s2:
        raise BetaRangeError("Delta^2 >= sigma^2: the EMG fit is ill-posed")
    x = energy - p.mu
    if x > 0:
        raise BetaRangeError("energy above the mean (negative temperature)")
    if d == 0.0:
        return -x / s2
    om2 = (s2 + d * x) ** 2 + 4.0 * d * x * (d * d - s2)
    if om2 < 0:
        raise BetaRangeError("negative discriminant: energy outside the EMG image")
    om = np.sqrt(om2)
    den = 2.0 * d * (s2 - d * d)
    # the +omega root, rationalised to avoid cancellation near x = 0
    q = s2 + d * x + om
    plus = -2.0 * x / q if q != 0 else (-s2 - d * x + om) / den
    minus = (-s2 - d * x - om) / den
    tol = rtol * max(p.width, 1e-300)
    for k, beta in enumerate((plus, minus)):
        if not np.isfinite(beta) or beta < 0 or 1.0 + beta * d <= 0:
            continue
        if abs(p.energy(beta) - energy) <= tol:
            if k:
                log.warning("EMG inversion used the -omega root (E=%.6g)", energy)
            return float(beta)
    raise BetaRangeError("no EMG root reproduces the energy")


def emg_expectations(model: EmgModel, a: float, b: float, beta: float) -> tuple[float, float]:
    """``(<H_d>, <H_p>)`` under the EMG model.

    ``<H_p> = d_B mu - (Delta beta / (1 + Delta beta)) d_B Delta
    - beta (sigma d_B sigma - Delta d_B Delta)``, and the same with ``A`` for
    ``<H_d>``.
    """
    m = model.partials(a, b)
    d = m["delta"]
    q = 1.0 + beta * d
    if q <= 0:
        raise BetaRangeError(f"1 + Delta beta = {q:.3e} <= 0")
    g = beta * d / q

    def obs(x):
        return m["mu_" + x] - g * m["delta_" + x] - beta * (0.5 * m["sigma2_" + x] - d * m["delta_" + x])

    return float(obs("a")), float(obs("b"))


class EmgBackend(PartitionBackend):
    """``ln Z = -ln(1 + beta Delta) - (mu - Delta) beta + beta^2 (sigma^2 - Delta^2) / 2``."""

    kind = "emg"

    def __init__(self, moments):
        self.model = EmgModel(moments)

    @property
    def moments(self):
        return self.model.moments

    def thermo(self, beta, a, b) -> Thermo:
        m = self.model.partials(a, b)
        p = EmgParams(m["mu"], m["sigma2"], m["delta"])
        d = p.delta
        q = 1.0 + beta * d
        var = p.sigma2 - d ** 3 * beta * (2.0 + beta * d) / (q * q)
        hd, hp = emg_expectations(self.model, a, b, beta)
        return Thermo(p.log_z(beta), p.energy(beta), float(var), hd, hp)

    def beta_max(self, a, b):
        d = self.model.params(a, b).delta
        return (1.0 / -d) * (1 - 1e-12) if d < 0 else np.inf

    def energy_scale(self, a, b):
        return max(self.model.params(a, b).width, 1e-300)

    def solve_beta(self, energy, a, b, guess=None):
        p = self.model.params(a, b)
        if abs(energy - p.mu) <= 1e-12 * p.width:
            return 0.0
        try:
            return emg_beta(p, energy)
        except BetaRangeError:
            if p.delta ** 2 >= p.sigma2 or energy > p.mu:
                raise
            return super().solve_beta(energy, a, b, guess)


def emg_pstqa(problem: IsingProblem, driver: DriverSpec, schedules, e0: float | None = None,
              grid=None, **kw) -> PstqaTrajectory:
    """Thermal annealing trajectory with the EMG backend.

    ``e0`` defaults to the energy of ``|+...+>`` at ``t = 0``, which needs a
    single ``2**n`` vector; everything else scales with the moments provider.
    """
    path = _as_path(schedules)
    if grid is None:
        grid = np.linspace(0.0, path.t_final, 101)
    if e0 is None:
        a0, b0 = path.coef(0.0)
        e0 = initial_energy(HamiltonianSpec(a0, b0, driver, problem))
    return pstqa_solve(EmgBackend(moments_provider(problem, driver)), path, e0, grid, **kw)
