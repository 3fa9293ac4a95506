"""Diagonal ensembles, Gibbs states, diagonal entropy, extractable work and
passivity, plus the fixed-temperature sweep over the problem coupling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .operators import DriverSpec, EigenSystem, HamiltonianSpec, apply, eig
from .problems import IsingProblem


class BetaRangeError(ValueError):
    """Requested energy has no inverse temperature in the supported range."""


class NegativeTemperatureError(BetaRangeError):
    """Energy at or above the infinite-temperature value ``Tr' H``."""


class BelowGroundStateError(BetaRangeError):
    """Energy at or below the ground-state energy."""


# ---------------------------------------------------------------------------
# entropy


def diagonal_entropy(populations, base: float | None = None) -> float:
    """Shannon entropy ``-sum p ln p`` with ``0 ln 0 = 0``.

    ``base=2`` reports bits.
    """
    p = np.asarray(populations, dtype=float)
    if np.any(p < -1e-15):
        raise ValueError("populations must be non-negative")
    p = p[p > 0]
    s = float(-np.sum(p * np.log(p)))
    return s / np.log(base) if base is not None else s


# ---------------------------------------------------------------------------
# observables in an eigenbasis

Observable = "HamiltonianSpec | np.ndarray"


def _obs_elements(es: EigenSystem, observable) -> np.ndarray:
    """Diagonal matrix elements ``<E_k|A|E_k>``.

    ``observable`` is a HamiltonianSpec or a 1-D table for a diagonal operator.
    """
    if isinstance(observable, HamiltonianSpec):
        if observable.is_diagonal:
            return es.diag_expectations(observable.diag)
        av = apply(observable, es.vectors).real
        return np.einsum("zk,zk->k", es.vectors, av)
    table = np.asarray(observable, dtype=float)
    if table.ndim != 1 or table.shape[0] != es.values.shape[0]:
        raise ValueError("observable table has the wrong dimension")
    return es.diag_expectations(table)


def _obs_block(vecs: np.ndarray, observable) -> np.ndarray:
    if isinstance(observable, HamiltonianSpec):
        return vecs.T @ apply(observable, vecs).real
    return vecs.T @ (np.asarray(observable, dtype=float)[:, None] * vecs)


def degenerate_blocks(values: np.ndarray, rtol: float = 1e-9) -> list[tuple[int, int]]:
    """``[start, stop)`` index ranges of (near-)degenerate eigenvalue clusters."""
    width = max(float(values[-1] - values[0]), 1.0)
    gaps = np.diff(values) > rtol * width
    edges = np.concatenate([[0], np.nonzero(gaps)[0] + 1, [len(values)]])
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


# ---------------------------------------------------------------------------
# diagonal ensemble


@dataclass(frozen=True, eq=False)
class DiagonalEnsemble:
    """Populations over the eigenstates of ``basis``.

    ``coefficients`` (the amplitudes ``<E_k|psi>``) are kept when the ensemble
    comes from a pure state, so that expectation values can keep the
    coherences inside degenerate eigenspaces, which never dephase.
    """

    populations: np.ndarray
    basis: EigenSystem
    energy: float
    coefficients: np.ndarray | None = None

    @property
    def entropy(self) -> float:
        return diagonal_entropy(self.populations)


def diagonal_ensemble(psi: np.ndarray, h: HamiltonianSpec) -> DiagonalEnsemble:
    """Dephased (infinite-time-averaged) version of the pure state ``psi`` under ``h``."""
    psi = np.asarray(psi)
    nrm = float(np.vdot(psi, psi).real)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"state is not normalised (norm^2 = {nrm:.3e})")
    es = eig(h)
    c = es.vectors.T @ psi
    p = (c.real ** 2 + c.imag ** 2) if np.iscomplexobj(c) else c * c
    return DiagonalEnsemble(p, es, float(p @ es.values), c)


def mixed_diagonal_ensemble(weights: np.ndarray, states: np.ndarray,
                            h: HamiltonianSpec) -> DiagonalEnsemble:
    """Diagonal ensemble of the mixture ``sum_j w_j |psi_j><psi_j|`` (columns of ``states``).

    Coherences inside degenerate eigenspaces are dropped here; use
    ``mixture_steady_expectation`` when exact degenerate handling matters.
    """
    es = eig(h)
    c = es.vectors.T @ states
    p = ((c.real ** 2 + c.imag ** 2) if np.iscomplexobj(c) else c * c) @ np.asarray(weights)
    return DiagonalEnsemble(p, es, float(p @ es.values))


def steady_expectation(ens: DiagonalEnsemble, observable) -> float:
    """Long-time average ``sum_k p_k <E_k|A|E_k>`` of an observable.

    When the ensemble keeps its amplitudes, degenerate eigenspaces contribute
    ``c_B^dagger A_BB c_B`` instead, which is the exact infinite-time average.
    """
    es = ens.basis
    if isinstance(observable, HamiltonianSpec) and observable.dim != es.values.shape[0]:
        raise ValueError("observable acts on a different Hilbert space")
    elems = _obs_elements(es, observable)
    total = float(ens.populations @ elems)
    if ens.coefficients is None:
        return total
    for a, b in degenerate_blocks(es.values):
        if b - a < 2:
            continue
        cb = ens.coefficients[a:b]
        blk = _obs_block(es.vectors[:, a:b], observable)
        total += float(np.real(np.conj(cb) @ blk @ cb)) - float(ens.populations[a:b] @ elems[a:b])
    return total


def mixture_steady_expectation(weights: np.ndarray, states: np.ndarray, h: HamiltonianSpec,
                               observable) -> float:
    """Exact infinite-time average of an observable for a mixture of pure states."""
    es = eig(h)
    c = es.vectors.T @ states
    p = ((c.real ** 2 + c.imag ** 2) if np.iscomplexobj(c) else c * c) @ np.asarray(weights)
    elems = _obs_elements(es, observable)
    total = float(p @ elems)
    for a, b in degenerate_blocks(es.values):
        if b - a < 2:
            continue
        cb = c[a:b]
        blk = _obs_block(es.vectors[:, a:b], observable)
        rho_b = (cb * np.asarray(weights)) @ np.conj(cb).T
        total += float(np.real(np.trace(blk @ rho_b.T))) - float(p[a:b] @ elems[a:b])
    return total


# ---------------------------------------------------------------------------
# Gibbs states


def _thermal_moments(values: np.ndarray, beta: float) -> tuple[float, float, float]:
    """``(ln Z, U, var)`` at inverse temperature ``beta``, shift-stabilised."""
    e0 = values[0] if beta >= 0 else values[-1]
    x = -beta * (values - e0)
    lz = logsumexp(x)
    w = np.exp(x - lz)
    u = float(w @ values)
    var = float(w @ (values - u) ** 2)
    return float(lz - beta * e0), u, var


def solve_beta(energy_var: Callable[[float], tuple[float, float]], target: float,
               lo: float, hi: float, guess: float | None = None, tol: float = 1e-12,
               scale: float = 1.0, maxiter: int = 200) -> float:
    """Root of ``U(beta) = target`` for decreasing ``U`` on ``[lo, hi]``.

    ``energy_var(beta)`` returns ``(U, dU/dbeta)``. Newton steps are taken when
    they stay inside the current bracket, bisection otherwise. Stops once the
    residual is below ``tol`` and the next step is below ``1e-12`` relative
    (``scale`` sets the size of a typical beta).
    """
    b = guess if guess is not None and lo <= guess < hi else 0.5 * (lo + hi)
    f = np.inf
    for _ in range(maxiter):
        u, du = energy_var(b)
        f = u - target
        if f == 0.0:
            return b
        if f > 0:
            lo = b
        else:
            hi = b
        nb = b - f / du if du < 0 else np.nan
        if not lo < nb < hi:
            nb = 0.5 * (lo + hi)
        done = abs(f) <= tol and abs(nb - b) <= 1e-12 * max(abs(b), scale)
        b = nb
        if done or hi - lo <= 1e-15 * max(hi, scale):
            return b
    raise RuntimeError(f"beta solve did not converge (residual {f:.3e})")


def fit_beta(spectrum, energy: float, rtol: float = 1e-10, beta_max_width: float = 50.0,
             guess: float | None = None) -> float:
    """Inverse temperature whose Gibbs energy equals ``energy``.

    Only the positive-temperature branch ``beta in [0, 50 / width]`` is
    searched. Energies at or above ``Tr' H`` raise NegativeTemperatureError,
    energies at or below the ground state raise BelowGroundStateError.
    """
    values = np.sort(np.asarray(spectrum, dtype=float))
    width = float(values[-1] - values[0])
    mean = float(values.mean())
    tol = rtol * max(width, 1e-300)
    if width == 0.0:
        if abs(energy - mean) <= tol:
            return 0.0
        raise BetaRangeError("spectrum is degenerate and energy differs from it")
    if abs(energy - mean) <= tol:
        return 0.0
    if energy > mean:
        raise NegativeTemperatureError(
            f"energy {energy:.12g} is above Tr'H = {mean:.12g}: negative temperature requested")
    if energy <= values[0]:
        raise BelowGroundStateError(
            f"energy {energy:.12g} is at or below the ground-state energy {values[0]:.12g}")
    hi = beta_max_width / width
    _, u_hi, _ = _thermal_moments(values, hi)
    if energy < u_hi - tol:
        raise BetaRangeError(
            f"energy {energy:.12g} needs beta above the supported maximum {hi:.6g}")

    def ev(b):
        _, u, var = _thermal_moments(values, b)
        return u, -var

    return solve_beta(ev, energy, 0.0, hi, guess, tol, scale=1.0 / width)


@dataclass(frozen=True, eq=False)
class GibbsModel:
    """Gibbs state ``exp(-beta H) / Z`` in the eigenbasis ``basis``."""

    beta: float
    basis: EigenSystem
    log_z: float

    @property
    def populations(self) -> np.ndarray:
        x = -self.beta * self.basis.values
        return np.exp(x - logsumexp(x))

    @property
    def energy(self) -> float:
        return float(self.populations @ self.basis.values)

    @property
    def free_energy(self) -> float:
        return -self.log_z / self.beta if self.beta > 0 else float("-inf")


def gibbs_model(h_or_basis, beta: float) -> GibbsModel:
    es = eig(h_or_basis) if isinstance(h_or_basis, HamiltonianSpec) else h_or_basis
    lz, _, _ = _thermal_moments(es.values, beta)
    return GibbsModel(float(beta), es, lz)


def gibbs_expectation(model: GibbsModel, observable) -> float:
    """``Tr(A exp(-beta H)) / Z``; shifting the spectrum leaves it unchanged."""
    return float(model.populations @ _obs_elements(model.basis, observable))


def eth_expectation(h: HamiltonianSpec, energy: float, observable) -> tuple[float, float]:
    """Energy-matched Gibbs prediction of an observable; returns ``(beta, <A>)``."""
    es = eig(h)
    beta = fit_beta(es.values, energy)
    return beta, gibbs_expectation(gibbs_model(es, beta), observable)


# ---------------------------------------------------------------------------
# work and passivity


@dataclass(frozen=True, eq=False)
class Mixture:
    """Probability-weighted set of pure states (columns of ``states``)."""

    weights: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if self.states.ndim != 2 or self.states.shape[1] != w.shape[0]:
            raise ValueError("weights and state columns do not match")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be a probability vector")


def energy_of(h: HamiltonianSpec, rho) -> float:
    """``Tr(H rho)`` for a state vector or a Mixture."""
    if isinstance(rho, Mixture):
        if rho.states.shape[0] != h.dim:
            raise ValueError("state dimension does not match the Hamiltonian")
        hs = apply(h, rho.states)
        vals = np.sum(np.conj(rho.states) * hs, axis=0).real
        return float(np.asarray(rho.weights) @ vals)
    psi = np.asarray(rho)
    if psi.shape[0] != h.dim:
        raise ValueError("state dimension does not match the Hamiltonian")
    return float(np.vdot(psi, apply(h, psi)).real)


def extractable_work(h: HamiltonianSpec, rho_initial, rho_final) -> float:
    """``W = Tr[H (rho_i - rho_f)]``; positive values mean work was extracted."""
    return energy_of(h, rho_initial) - energy_of(h, rho_final)


def is_passive(populations, spectrum, atol: float = 1e-12) -> bool:
    """True iff populations do not increase with energy; ties never violate it."""
    p = np.asarray(populations, dtype=float)
    e = np.asarray(spectrum, dtype=float)
    if p.shape != e.shape:
        raise ValueError("populations and spectrum lengths differ")
    order = np.argsort(e, kind="stable")
    p, e = p[order], e[order]
    blocks = degenerate_blocks(e, rtol=1e-12) if len(e) > 1 else [(0, len(e))]
    prev_min = np.inf
    for a, b in blocks:
        if p[a:b].max() > prev_min + atol:
            return False
        prev_min = p[a:b].min()
    return True


# ---------------------------------------------------------------------------
# fixed-temperature sweep


@dataclass(frozen=True)
class GibbsSweep:
    gammas: np.ndarray
    hp: np.ndarray
    free_energy: np.ndarray
    d2_free_energy: np.ndarray
    beta: float

    def to_records(self) -> list[dict]:
        return [{"gamma": float(g), "beta": self.beta, "hp": float(h), "free_energy": float(f),
                 "d2_free_energy": float(c)}
                for g, h, f, c in zip(self.gammas, self.hp, self.free_energy, self.d2_free_energy)]


def _second_derivative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if len(x) < 3:
        return np.full_like(y, np.nan)
    return np.gradient(np.gradient(y, x, edge_order=2), x, edge_order=2)


def gibbs_hp_sweep(problem: IsingProblem, driver: DriverSpec, beta: float, gammas,
                   bias: DriverSpec | None = None) -> GibbsSweep:
    """``<H_p>`` of the Gibbs state of ``H_d + gamma H_p`` at fixed ``beta`` for each gamma.

    Also returns the free energy ``-ln Z / beta`` and its numerical second
    derivative in gamma (non-positive for a concave free energy).
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    gammas = np.asarray(gammas, dtype=float)
    hp = np.empty_like(gammas)
    fe = np.empty_like(gammas)
    for i, g in enumerate(gammas):
        h = HamiltonianSpec(1.0, float(g), driver, problem, bias)
        es = eig(h)
        model = gibbs_model(es, beta)
        hp[i] = gibbs_expectation(model, problem.energies)
        fe[i] = model.free_energy if beta > 0 else np.nan
    return GibbsSweep(gammas, hp, fe, _second_derivative(gammas, fe), float(beta))


def summary_record(beta: float | None, energy: float, hp: float, sd: float) -> dict:
    """JSON record ``{beta, energy, hp, sd}`` for ensembles and Gibbs states."""
    return {"beta": None if beta is None else float(beta), "energy": float(energy),
            "hp": float(hp), "sd": float(sd)}
