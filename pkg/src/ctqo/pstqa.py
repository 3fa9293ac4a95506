"""Pure-state thermal annealing: the energy ODE ``dE/dt = A' <H_d> + B' <H_p>``
closed by a Gibbs state whose inverse temperature is re-solved from ``E`` at
every evaluation.

Partition-function backends expose ``ln Z(beta, A, B)`` and its first
derivatives. The exact backend works from level data ``(E_k, dE_k/dA,
dE_k/dB)``; by Hellmann-Feynman these are the eigenvalues and the driver and
problem expectations in each eigenvector.
"""

from __future__ import annotations

import csv
import io
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import logsumexp

from .dynamics import CoefficientPath, Schedule, fmt
from .operators import HamiltonianSpec, apply, eig
from .statmech import BelowGroundStateError, BetaRangeError, solve_beta


class PstqaBreakdown(RuntimeError):
    """The thermal model has no valid inverse temperature at some time."""

    def __init__(self, msg: str, t: float | None = None):
        super().__init__(msg if t is None else f"t={t:.6g}: {msg}")
        self.t = t


@dataclass(frozen=True)
class Thermo:
    """Thermal quantities at ``(beta, a, b)``.

    ``energy = -d ln Z / d beta``, ``var = d^2 ln Z / d beta^2``,
    ``hd = -(1/beta) d ln Z / dA`` and ``hp = -(1/beta) d ln Z / dB``.
    """

    log_z: float
    energy: float
    var: float
    hd: float
    hp: float

    def grad(self, beta: float) -> tuple[float, float, float]:
        """``(d/dbeta, d/dA, d/dB)`` of ``ln Z``."""
        return -self.energy, -beta * self.hd, -beta * self.hp


class PartitionBackend:
    """Interface shared by the exact and ansatz partition functions."""

    kind = "abstract"

    def thermo(self, beta: float, a: float, b: float) -> Thermo:
        raise NotImplementedError

    def log_z(self, beta: float, a: float, b: float) -> float:
        return self.thermo(beta, a, b).log_z

    def grad_log_z(self, beta: float, a: float, b: float) -> tuple[float, float, float]:
        return self.thermo(beta, a, b).grad(beta)

    def mean_energy(self, a: float, b: float) -> float:
        """Infinite-temperature energy ``Tr' H``."""
        return self.thermo(0.0, a, b).energy

    def beta_max(self, a: float, b: float) -> float:
        return np.inf

    def solve_beta(self, energy: float, a: float, b: float, guess: float | None = None) -> float:
        mu = self.mean_energy(a, b)
        scale = self.energy_scale(a, b)
        tol = 1e-10 * scale
        if abs(energy - mu) <= tol:
            return 0.0
        if energy > mu:
            raise BetaRangeError(f"energy {energy:.10g} above Tr'H = {mu:.10g} (negative temperature)")
        hi = self.beta_max(a, b)
        if not np.isfinite(hi):
            hi = 1.0 / scale
            while self.thermo(hi, a, b).energy > energy:
                hi *= 2.0
                if hi > 1e8 / scale:
                    raise BetaRangeError("no inverse temperature reproduces the energy")
        elif self.thermo(hi, a, b).energy > energy + tol:
            raise BetaRangeError(f"energy {energy:.10g} needs beta above the supported {hi:.6g}")

        def ev(beta):
            th = self.thermo(beta, a, b)
            return th.energy, -th.var

        return solve_beta(ev, energy, 0.0, hi, guess, tol, scale=1.0 / scale)

    def energy_scale(self, a: float, b: float) -> float:
        return max(np.sqrt(self.thermo(0.0, a, b).var), 1e-300)


@dataclass(frozen=True)
class Levels:
    """Level data at one ``(a, b)``: energies and their A and B derivatives."""

    energies: np.ndarray
    hd: np.ndarray
    hp: np.ndarray


class ExactSpectrumBackend(PartitionBackend):
    """``Z = sum_k exp(-beta E_k(A, B))`` from level data.

    Parameters
    ----------
    levels : callable
        ``levels(a, b) -> Levels``.
    cache_size : int
        Number of ``(a, b)`` points whose level data is memoised.
    """

    kind = "exact"

    def __init__(self, levels: Callable[[float, float], Levels], cache_size: int = 64):
        self._levels = levels
        self._cache: OrderedDict = OrderedDict()
        self._size = int(cache_size)
        self._lock = threading.Lock()
        self.n_factorisations = 0

    @classmethod
    def from_hamiltonian(cls, h: HamiltonianSpec, **kw) -> "ExactSpectrumBackend":
        """Level data of ``a H_d + b H_p (+ H_b)`` for the template ``h``."""
        e = np.asarray(h.problem.energies)
        c = None if h.bias is None else np.asarray(h.bias.diagonal)

        def levels(a, b):
            hk = h.with_coefficients(a, b)
            es = eig(hk, cache=None)
            hp = es.diag_expectations(e)
            if a != 0.0:
                hb = es.diag_expectations(c) if c is not None else 0.0
                hd = (es.values - b * hp - hb) / a
            else:
                hd_op = HamiltonianSpec(1.0, 0.0, h.driver, h.problem)
                hd = np.einsum("zk,zk->k", es.vectors, apply(hd_op, es.vectors).real)
            return Levels(es.values, hd, hp)

        return cls(levels, **kw)

    @classmethod
    def scaled_spectrum(cls, x: np.ndarray, moments, **kw) -> "ExactSpectrumBackend":
        """Levels ``E_k = mu(A, B) + sigma(A, B) x_k`` for a fixed standardised set ``x``.

        ``moments`` provides ``with_partials(a, b)``. With Gaussian quantiles for
        ``x`` this is a synthetic spectrum with an exactly Gaussian shape at
        every ``(A, B)``.
        """
        x = np.asarray(x, dtype=float)

        def levels(a, b):
            m = moments.with_partials(a, b)
            s = np.sqrt(m["sigma2"])
            return Levels(m["mu"] + s * x, m["mu_a"] + m["sigma2_a"] / (2 * s) * x,
                          m["mu_b"] + m["sigma2_b"] / (2 * s) * x)

        return cls(levels, **kw)

    def levels(self, a: float, b: float) -> Levels:
        key = (float(a), float(b))
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        lv = self._levels(a, b)
        with self._lock:
            self.n_factorisations += 1
            self._cache[key] = lv
            while len(self._cache) > self._size:
                self._cache.popitem(last=False)
        return lv

    def thermo(self, beta, a, b) -> Thermo:
        lv = self.levels(a, b)
        e = lv.energies
        e0 = e.min() if beta >= 0 else e.max()
        x = -beta * (e - e0)
        lz = logsumexp(x)
        w = np.exp(x - lz)
        u = float(w @ e)
        return Thermo(float(lz - beta * e0), u, float(w @ (e - u) ** 2), float(w @ lv.hd),
                      float(w @ lv.hp))

    def mean_energy(self, a, b):
        return float(np.mean(self.levels(a, b).energies))

    def energy_scale(self, a, b):
        e = self.levels(a, b).energies
        return max(float(e.max() - e.min()), 1e-300)

    def solve_beta(self, energy, a, b, guess=None):
        e_min = float(self.levels(a, b).energies.min())
        if energy <= e_min:
            raise BelowGroundStateError(f"energy {energy:.10g} at or below the ground state {e_min:.10g}")
        return super().solve_beta(energy, a, b, guess)


# ---------------------------------------------------------------------------
# trajectory


@dataclass
class PstqaTrajectory:
    times: np.ndarray
    s: np.ndarray
    a: np.ndarray
    b: np.ndarray
    energy: np.ndarray
    beta: np.ndarray
    hd: np.ndarray
    hp: np.ndarray
    sd: np.ndarray
    backend: str = ""
    stats: dict = field(default_factory=dict)

    COLUMNS = ("t", "s", "A", "B", "energy", "beta", "hd", "hp", "sd")

    def to_csv(self, target=None) -> str:
        buf = io.StringIO()
        buf.write(f"# backend={self.backend}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in zip(self.times, self.s, self.a, self.b, self.energy, self.beta, self.hd,
                       self.hp, self.sd):
            w.writerow([fmt(x) for x in row])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text


def _as_path(schedules) -> CoefficientPath:
    if isinstance(schedules, CoefficientPath):
        return schedules
    return CoefficientPath(schedules)


def initial_energy(h: HamiltonianSpec, psi: np.ndarray | None = None) -> float:
    """Pure-state energy ``<psi|a H_d + b H_p (+ H_b)|psi>``; ``psi`` defaults to ``|+...+>``."""
    if psi is None:
        psi = np.full(h.dim, 1.0 / np.sqrt(h.dim), dtype=complex)
    return float(np.vdot(psi, apply(h, psi)).real)


def pstqa_solve(backend: PartitionBackend, schedules, e0: float, grid: Sequence[float], *,
                rtol: float = 1e-8, atol: float | None = None,
                method: str = "DOP853") -> PstqaTrajectory:
    """Integrate the thermal energy equation along a schedule.

    Parameters
    ----------
    backend : PartitionBackend
    schedules : Schedule list or CoefficientPath
        Coefficients ``(A(t), B(t))``; piecewise-constant components act as
        sudden quenches, where ``E`` jumps by ``dA <H_d> + dB <H_p>`` of the
        pre-quench Gibbs state.
    e0 : float
        Initial energy; must lie on the positive-temperature side at ``t = 0``.
    grid : sequence of float
        Output times in ``[0, t_final]``.

    Raises
    ------
    PstqaBreakdown
        No positive inverse temperature matches the energy at some time.
    """
    path = _as_path(schedules)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0) or grid[0] < 0 or grid[-1] > path.t_final * (1 + 1e-12):
        raise ValueError("grid must be non-decreasing inside [0, t_final]")
    a0, b0 = path.coef(0.0)
    scale = backend.energy_scale(a0, b0)
    if atol is None:
        atol = rtol * scale * 1e-2
    state = {"beta": None, "nbeta": 0, "misses": 0}

    def beta_of(e, t, a, b):
        try:
            bt = backend.solve_beta(e, a, b, state["beta"])
        except BetaRangeError as exc:
            raise PstqaBreakdown(str(exc), t) from exc
        state["beta"] = bt
        state["nbeta"] += 1
        return bt

    try:
        beta0 = backend.solve_beta(e0, a0, b0)
    except BetaRangeError as exc:
        raise PstqaBreakdown(f"initial energy: {exc}", 0.0) from exc
    state["beta"] = beta0

    def rhs(t, y, lo, hi):
        tt = min(max(t, lo), hi)
        a, b = path.segment_coef(lo, hi)(tt)
        da, db = path.rate(0.5 * (lo + hi) if path.piecewise_constant else tt)
        if da == 0.0 and db == 0.0:
            return [0.0]
        try:
            bt = backend.solve_beta(y[0], a, b, state["beta"])
            state["beta"] = bt
            state["nbeta"] += 1
        except BetaRangeError:
            # a trial stage left the domain; the step is judged by the error
            # estimate and accepted points are validated after the solve
            bt = state["beta"]
            state["misses"] += 1
        th = backend.thermo(bt, a, b)
        return [da * th.hd + db * th.hp]

    cuts = [0.0] + path.boundaries() + [path.t_final]
    energies = np.empty(grid.size)
    e = float(e0)
    i = 0
    nfev = 0
    while i < grid.size and grid[i] <= 0.0:
        energies[i] = e
        i += 1
    for k in range(len(cuts) - 1):
        lo, hi = cuts[k], cuts[k + 1]
        if k > 0:
            # sudden change of coefficients at the boundary
            a_m, b_m = path.segment_coef(cuts[k - 1], lo)(lo)
            a_p, b_p = path.segment_coef(lo, hi)(lo)
            if (a_m, b_m) != (a_p, b_p):
                bt = beta_of(e, lo, a_m, b_m)
                th = backend.thermo(bt, a_m, b_m)
                e += (a_p - a_m) * th.hd + (b_p - b_m) * th.hp
                beta_of(e, lo, a_p, b_p)
        j = i
        while j < grid.size and grid[j] <= hi:
            j += 1
        t_eval = grid[i:j]
        if hi > lo:
            # the segment end is always evaluated so the next segment starts from it
            te = t_eval if t_eval.size and t_eval[-1] >= hi else np.append(t_eval, hi)
            sol = solve_ivp(rhs, (lo, hi), [e], method=method, rtol=rtol, atol=atol,
                            t_eval=te, args=(lo, hi))
            if not sol.success:
                raise PstqaBreakdown(f"integrator failed: {sol.message}", lo)
            nfev += sol.nfev
            energies[i:j] = sol.y[0, :t_eval.size]
            e = float(sol.y[0, -1])
            beta_of(e, hi, *path.segment_coef(lo, hi)(hi))
        i = j
    if i < grid.size:
        raise ValueError("grid extends beyond the schedule")

    out = {k: np.empty(grid.size) for k in ("a", "b", "beta", "hd", "hp", "sd")}
    for q, t in enumerate(grid):
        a, b = _coef_at(path, cuts, t)
        bt = beta_of(energies[q], t, a, b)
        th = backend.thermo(bt, a, b)
        out["a"][q], out["b"][q], out["beta"][q] = a, b, bt
        out["hd"][q], out["hp"][q] = th.hd, th.hp
        out["sd"][q] = th.log_z + bt * energies[q]
        if bt < 0:
            raise PstqaBreakdown("beta crossed zero", t)
    return PstqaTrajectory(grid, grid / path.t_final, out["a"], out["b"], energies, out["beta"],
                           out["hd"], out["hp"], out["sd"], backend.kind,
                           {"nfev": nfev, "beta_solves": state["nbeta"],
                            "trial_misses": state["misses"]})


def _coef_at(path: CoefficientPath, cuts, t):
    if t <= 0.0:
        return path.coef(0.0)
    k = int(np.searchsorted(cuts, t, side="left"))
    k = min(max(k, 1), len(cuts) - 1)
    return path.segment_coef(cuts[k - 1], cuts[k])(t)


def pstqa_entropy(traj: PstqaTrajectory) -> tuple[np.ndarray, float]:
    """Diagonal-entropy series ``ln Z + beta E`` and its maximum drift from the start."""
    sd = np.asarray(traj.sd)
    return sd, float(np.max(np.abs(sd - sd[0])))


def _endpoints(path: CoefficientPath):
    return path.coef(0.0), path.coef(path.t_final)


def path_independence_check(backend: PartitionBackend, endpoints, e0: float, paths,
                            n_grid: int = 2, rtol: float = 1e-8) -> dict:
    """Final energy and ``<H_p>`` discrepancies between two paths with shared endpoints."""
    p1, p2 = (_as_path(p) for p in paths)
    for p in (p1, p2):
        (sa, sb), (ea, eb) = _endpoints(p)
        if not (np.allclose((sa, sb), endpoints[0], atol=1e-12)
                and np.allclose((ea, eb), endpoints[1], atol=1e-12)):
            raise ValueError("path does not join the declared endpoints")
    r1 = pstqa_solve(backend, p1, e0, np.linspace(0, p1.t_final, n_grid), rtol=rtol)
    r2 = pstqa_solve(backend, p2, e0, np.linspace(0, p2.t_final, n_grid), rtol=rtol)
    de = abs(r1.energy[-1] - r2.energy[-1])
    dh = abs(r1.hp[-1] - r2.hp[-1])
    return {"energy_diff": float(de), "hp_diff": float(dh),
            "energy_rel": float(de / max(abs(r1.energy[-1]), 1e-300)),
            "hp_rel": float(dh / max(abs(r1.hp[-1]), 1e-300)),
            "energy": (float(r1.energy[-1]), float(r2.energy[-1])),
            "hp": (float(r1.hp[-1]), float(r2.hp[-1]))}


def rescale_schedule(s: Schedule, factor: float) -> Schedule:
    """Same shape on the normalised time axis, duration multiplied by ``factor``."""
    params = dict(s.params)
    if s.kind == "square_gaussian":
        params["centre"] *= factor
        params["width"] *= factor
    return Schedule(s.kind, s.channel, s.t_final * factor,
                    tuple((t * factor, v) for t, v in s.breakpoints), params, s.monotone)


def timescale_invariance_check(backend: PartitionBackend, schedules, e0: float,
                               tf_scales: Sequence[float], n_grid: int = 21,
                               rtol: float = 1e-8) -> float:
    """Largest ``<H_p>(s)`` deviation between runs whose time axis is rescaled."""
    path = _as_path(schedules)
    s = np.linspace(0.0, 1.0, n_grid)
    ref = None
    worst = 0.0
    for f in tf_scales:
        p = CoefficientPath([rescale_schedule(x, f) for x in path.schedules], path.defaults)
        tr = pstqa_solve(backend, p, e0, s * p.t_final, rtol=rtol)
        if ref is None:
            ref = tr.hp
        else:
            worst = max(worst, float(np.max(np.abs(tr.hp - ref))))
    return worst
