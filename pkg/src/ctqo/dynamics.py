"""Schedules and exact Schrödinger propagation.

Piecewise-constant schedules are propagated exactly segment by segment with
the segment eigendecomposition. Smooth schedules use an adaptive DOP853
integrator (compiled when available) with a per-step renormalisation guard.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .operators import HamiltonianSpec, driver_expectation, eig, expectation_diag
from .statmech import diagonal_entropy

PIECEWISE_CONSTANT = "piecewise_constant"
LINEAR = "linear"
SQUARE_GAUSSIAN = "square_gaussian"
TABULATED = "tabulated"
SCHEDULE_KINDS = (PIECEWISE_CONSTANT, LINEAR, SQUARE_GAUSSIAN, TABULATED)
CHANNELS = ("A", "B", "gamma", "G")

FLOAT_FMT = ".11e"  # 12 significant digits


def fmt(x) -> str:
    if x is None:
        return "nan"
    return format(float(x), FLOAT_FMT)


class IntegrationError(RuntimeError):
    """The adaptive propagator failed (step budget or norm guard)."""


@dataclass(frozen=True)
class Schedule:
    """Time-dependent coefficient on one channel.

    Parameters
    ----------
    kind : str
        ``piecewise_constant``: ``breakpoints = [(t_1, v_1), ..., (t_L, v_L)]``
        with ``v_k`` held on ``(t_{k-1}, t_k]`` (``v_1`` also at ``t = 0``) and
        ``t_L = t_final``. ``linear``: ``params = {"start", "end"}``.
        ``square_gaussian``: ``params = {"amplitude", "centre", "width",
        "exponent"}`` giving ``g exp(-((t - t_c) / w)^p)``. ``tabulated``:
        ``breakpoints = [(t, v), ...]`` linearly interpolated.
    channel : str
        ``A`` or ``B`` (coefficients of ``H_d`` and ``H_p``), ``gamma`` (problem
        coupling with unit driver) or ``G`` (driver coupling with unit problem).
    monotone : bool
        Validate on a dense grid that the schedule never decreases.
    """

    kind: str
    channel: str
    t_final: float
    breakpoints: tuple[tuple[float, float], ...] = ()
    params: dict = field(default_factory=dict)
    monotone: bool = False

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        bps = tuple((float(t), float(v)) for t, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        if self.kind in (PIECEWISE_CONSTANT, TABULATED):
            if not bps:
                raise ValueError(f"{self.kind} schedule needs breakpoints")
            ts = [t for t, _ in bps]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("breakpoint times must be strictly increasing")
            if self.kind == PIECEWISE_CONSTANT and abs(ts[-1] - self.t_final) > 1e-12 * self.t_final:
                raise ValueError("last piecewise-constant breakpoint must equal t_final")
            if self.kind == TABULATED and (ts[0] > 0 or ts[-1] < self.t_final):
                raise ValueError("tabulated schedule must cover [0, t_final]")
        if self.kind == SQUARE_GAUSSIAN:
            p = {"amplitude": 1.0, "centre": self.t_final / 2, "width": self.t_final / 5,
                 "exponent": 4.0}
            p.update(self.params)
            object.__setattr__(self, "params", p)
        if self.kind == LINEAR and not {"start", "end"} <= set(self.params):
            raise ValueError("linear schedule needs 'start' and 'end'")
        if self.monotone:
            grid = np.linspace(0.0, self.t_final, 2001)
            vals = self.values(grid)
            if np.any(np.diff(vals) < -1e-12 * max(1.0, np.abs(vals).max())):
                raise ValueError("schedule flagged monotone decreases somewhere")

    # constructors -----------------------------------------------------------
    @classmethod
    def linear(cls, channel, start, end, t_final, monotone=False) -> "Schedule":
        return cls(LINEAR, channel, float(t_final), params={"start": float(start), "end": float(end)},
                   monotone=monotone)

    @classmethod
    def constant(cls, channel, value, t_final) -> "Schedule":
        return cls(PIECEWISE_CONSTANT, channel, float(t_final), ((float(t_final), float(value)),))

    @classmethod
    def staircase(cls, channel, values: Sequence[float], stage_ends: Sequence[float],
                  monotone=True) -> "Schedule":
        """``values[k]`` held until ``stage_ends[k]``; the last end is ``t_final``."""
        if len(values) != len(stage_ends):
            raise ValueError("one stage end per value")
        return cls(PIECEWISE_CONSTANT, channel, float(stage_ends[-1]),
                   tuple(zip(stage_ends, values)), monotone=monotone)

    @classmethod
    def square_gaussian(cls, channel, t_final, amplitude=1.0, centre=None, width=None,
                        exponent=4.0) -> "Schedule":
        return cls(SQUARE_GAUSSIAN, channel, float(t_final), params={
            "amplitude": float(amplitude),
            "centre": float(t_final / 2 if centre is None else centre),
            "width": float(t_final / 5 if width is None else width),
            "exponent": float(exponent)})

    # evaluation -------------------------------------------------------------
    @property
    def is_piecewise_constant(self) -> bool:
        return self.kind == PIECEWISE_CONSTANT

    def boundaries(self) -> list[float]:
        """Interior times where the schedule or its derivative jumps."""
        if self.kind in (PIECEWISE_CONSTANT, TABULATED):
            return [t for t, _ in self.breakpoints if 0.0 < t < self.t_final]
        return []

    def values(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == PIECEWISE_CONSTANT:
            ends = np.array([b[0] for b in self.breakpoints])
            vals = np.array([b[1] for b in self.breakpoints])
            idx = np.minimum(np.searchsorted(ends, t, side="left"), len(vals) - 1)
            return vals[idx]
        if self.kind == LINEAR:
            s0, s1 = self.params["start"], self.params["end"]
            return s0 + (s1 - s0) * t / self.t_final
        if self.kind == SQUARE_GAUSSIAN:
            p = self.params
            return p["amplitude"] * np.exp(-np.abs((t - p["centre"]) / p["width"]) ** p["exponent"])
        ts = np.array([b[0] for b in self.breakpoints])
        vs = np.array([b[1] for b in self.breakpoints])
        return np.interp(t, ts, vs)

    def value(self, t: float) -> float:
        return float(self.values(t))

    def derivative(self, t: float) -> float:
        if self.kind == PIECEWISE_CONSTANT:
            return 0.0
        if self.kind == LINEAR:
            return (self.params["end"] - self.params["start"]) / self.t_final
        if self.kind == SQUARE_GAUSSIAN:
            p = self.params
            x = (t - p["centre"]) / p["width"]
            e = p["exponent"]
            return float(-self.value(t) * e * np.sign(x) * np.abs(x) ** (e - 1) / p["width"])
        ts = np.array([b[0] for b in self.breakpoints])
        vs = np.array([b[1] for b in self.breakpoints])
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        return float((vs[k + 1] - vs[k]) / (ts[k + 1] - ts[k]))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "channel": self.channel, "t_final": self.t_final,
                "breakpoints": [list(b) for b in self.breakpoints], "params": dict(self.params),
                "monotone": self.monotone}


class CoefficientPath:
    """Maps a set of schedules onto the coefficient pair ``(a(t), b(t))`` of
    ``a H_d + b H_p``.

    Channel ``gamma`` means ``a = 1, b = gamma``; channel ``G`` means
    ``a = G, b = 1``; ``A`` and ``B`` set the coefficients directly (a missing
    one defaults to a constant taken from ``defaults``).
    """

    def __init__(self, schedules: Iterable[Schedule] | Schedule, defaults=(1.0, 1.0)):
        if isinstance(schedules, Schedule):
            schedules = [schedules]
        self.schedules = list(schedules)
        if not self.schedules:
            raise ValueError("at least one schedule is required")
        chans = [s.channel for s in self.schedules]
        if len(set(chans)) != len(chans):
            raise ValueError("duplicate schedule channel")
        self.a_s = self.b_s = None
        for s in self.schedules:
            if s.channel in ("A", "G"):
                self.a_s = s
            else:
                self.b_s = s
        if ("gamma" in chans and "B" in chans) or ("G" in chans and "A" in chans):
            raise ValueError("conflicting schedule channels")
        tfs = {s.t_final for s in self.schedules}
        if max(tfs) - min(tfs) > 1e-12 * max(tfs):
            raise ValueError("schedules disagree on t_final")
        self.t_final = max(tfs)
        self.defaults = (float(defaults[0]), float(defaults[1]))

    @property
    def piecewise_constant(self) -> bool:
        return all(s.is_piecewise_constant for s in self.schedules)

    def boundaries(self) -> list[float]:
        return sorted({t for s in self.schedules for t in s.boundaries()})

    def coef(self, t: float) -> tuple[float, float]:
        a = self.a_s.value(t) if self.a_s is not None else self.defaults[0]
        b = self.b_s.value(t) if self.b_s is not None else self.defaults[1]
        return a, b

    def rate(self, t: float) -> tuple[float, float]:
        da = self.a_s.derivative(t) if self.a_s is not None else 0.0
        db = self.b_s.derivative(t) if self.b_s is not None else 0.0
        return da, db

    def segment_coef(self, t0: float, t1: float):
        """Coefficient function for integration over ``[t0, t1]`` that never
        reads values from the neighbouring segment of a piecewise schedule."""
        mid = 0.5 * (t0 + t1)
        if self.piecewise_constant:
            const = self.coef(mid)
            return lambda t: const
        return lambda t: self._one_sided(t, t0, t1)

    def _one_sided(self, t, t0, t1):
        a = self._side(self.a_s, t, t0, t1, self.defaults[0])
        b = self._side(self.b_s, t, t0, t1, self.defaults[1])
        return a, b

    @staticmethod
    def _side(s, t, t0, t1, default):
        if s is None:
            return default
        if s.is_piecewise_constant:
            return s.value(0.5 * (t0 + t1))
        return s.value(t)


@dataclass
class Trajectory:
    """Observable time series of a propagated state (or mixture)."""

    times: np.ndarray
    hp: np.ndarray
    hd: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    sd: np.ndarray | None = None
    psi_samples: np.ndarray | None = None
    coef: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    COLUMNS = ("t", "hp", "hd", "energy", "sd")

    def to_csv(self, target=None) -> str:
        """Write ``t, hp, hd, energy, sd`` rows; returns the text when ``target`` is None."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        sd = self.sd if self.sd is not None else [None] * len(self.times)
        for row in zip(self.times, self.hp, self.hd, self.energy, sd):
            w.writerow([fmt(x) for x in row])
        text = buf.getvalue()
        if target is None:
            return text
        with open(target, "w", newline="") as fh:
            fh.write(text)
        return text


def _observables(h: HamiltonianSpec, a: float, b: float, psi: np.ndarray, weights):
    e = np.asarray(h.problem.energies)
    hp = expectation_diag(e, psi)
    hd = driver_expectation(h.driver, psi)
    hb = expectation_diag(np.asarray(h.bias.diagonal), psi) if h.bias is not None else 0.0
    nrm = np.sum(psi.real ** 2 + psi.imag ** 2, axis=0)
    if weights is not None:
        hp, hd, nrm = weights @ hp, weights @ hd, weights @ nrm
        hb = weights @ hb if h.bias is not None else 0.0
    return float(hp), float(hd), float(a * hd + b * hp + hb), float(nrm)


def _populations(es, psi, weights):
    c = es.vectors.T @ psi
    p = c.real ** 2 + c.imag ** 2
    return p if weights is None else p @ weights


def evolve(h0: HamiltonianSpec, schedules, psi0: np.ndarray, grid: Sequence[float], *,
           method: str = "auto", weights=None, rtol: float = 1e-10, atol: float = 1e-12,
           norm_tol: float = 1e-8, max_steps: int = 1_000_000, store_states: bool = False,
           compute_sd: bool = False, impl: str | None = None) -> Trajectory:
    """Propagate ``psi0`` under ``h0`` with coefficients from ``schedules``.

    Parameters
    ----------
    h0 : HamiltonianSpec
        Template; its ``a`` and ``b`` are replaced by the scheduled values.
    schedules : Schedule, list of Schedule or CoefficientPath
    psi0 : ndarray
        Normalised state, or a ``(2**n, m)`` block of states mixed with ``weights``.
    grid : sequence of float
        Non-decreasing sample times in ``[0, t_final]``.
    method : {"auto", "exact", "rk"}
        ``auto`` uses exact segment propagation for piecewise-constant
        schedules and the adaptive integrator otherwise.
    compute_sd : bool
        Also record the diagonal entropy in the instantaneous eigenbasis.
    """
    path = schedules if isinstance(schedules, CoefficientPath) else CoefficientPath(schedules)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) < 0) or grid[0] < 0 or grid[-1] > path.t_final * (1 + 1e-12):
        raise ValueError("grid must be non-decreasing and inside [0, t_final]")
    psi = np.array(psi0, dtype=np.complex128, copy=True)
    vec = psi.ndim == 1
    if vec:
        psi = psi[:, None]
    if psi.shape[0] != h0.dim:
        raise ValueError("state dimension does not match the Hamiltonian")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (psi.shape[1],) or abs(weights.sum() - 1) > 1e-9:
            raise ValueError("weights must be a probability vector over the state columns")
    elif psi.shape[1] != 1:
        raise ValueError("a block of states needs mixture weights")
    norms = np.sqrt(np.sum(np.abs(psi) ** 2, axis=0))
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise ValueError("initial state is not normalised")
    if method == "auto":
        method = "exact" if path.piecewise_constant else "rk"
    if method == "exact" and not path.piecewise_constant:
        raise ValueError("exact propagation needs piecewise-constant schedules")
    w = None if vec else weights

    n_t = grid.size
    out = {k: np.empty(n_t) for k in ("hp", "hd", "energy", "norm")}
    sd = np.empty(n_t) if compute_sd else None
    states = np.empty((n_t,) + psi.shape, dtype=np.complex128) if store_states else None
    coefs = np.empty((n_t, 2))
    stats = {"method": method, "n_accepted": 0, "n_rejected": 0, "nfev": 0,
             "backend": kernels.BACKEND if method == "rk" else "eig"}

    def record(i, state, a, b, es=None):
        hp, hd, en, nr = _observables(h0, a, b, state[:, 0] if w is None else state,
                                      w)
        out["hp"][i], out["hd"][i], out["energy"][i], out["norm"][i] = hp, hd, en, nr
        coefs[i] = (a, b)
        if store_states:
            states[i] = state
        if compute_sd:
            es = es if es is not None else eig(h0.with_coefficients(a, b))
            sd[i] = diagonal_entropy(_populations(es, state, w))

    cuts = [0.0] + [t for t in path.boundaries() if 0 < t < path.t_final] + [path.t_final]
    t_cur = 0.0
    i = 0
    # samples at t = 0 use the initial coefficients
    while i < n_t and grid[i] <= 0.0:
        a, b = path.coef(0.0)
        record(i, psi, a, b)
        i += 1
    h_step = 1e-2
    for k in range(len(cuts) - 1):
        s0, s1 = cuts[k], cuts[k + 1]
        if i >= n_t:
            break
        if s1 <= t_cur:
            continue
        cf = path.segment_coef(s0, s1)
        if method == "exact":
            a, b = cf(0.5 * (s0 + s1))
            hk = h0.with_coefficients(a, b)
            es = eig(hk)
            c = es.vectors.T @ psi
            j = i
            while j < n_t and grid[j] <= s1:
                j += 1
            if j > i:
                dt = grid[i:j] - t_cur
                ph = np.exp(-1j * np.outer(es.values, dt))  # (D, G)
                for q, gi in enumerate(range(i, j)):
                    st = es.vectors @ (ph[:, q:q + 1] * c)
                    record(gi, st, a, b, es)
                i = j
            phase = np.exp(-1j * es.values * (s1 - t_cur))[:, None]
            psi = es.vectors @ (phase * c)
            t_cur = s1
            continue
        # adaptive integrator between consecutive sample times inside the segment
        d_flags = h0.components()
        while i < n_t and grid[i] <= s1:
            tg = grid[i]
            if tg > t_cur:
                h_step = _rk(psi, h0, d_flags, cf, t_cur, tg, h_step, rtol, atol, norm_tol,
                             max_steps, stats, impl)
                t_cur = tg
            a, b = cf(tg)
            record(i, psi, a, b)
            i += 1
        if s1 > t_cur and i < n_t:
            h_step = _rk(psi, h0, d_flags, cf, t_cur, s1, h_step, rtol, atol, norm_tol,
                         max_steps, stats, impl)
            t_cur = s1
    if i < n_t:
        raise ValueError("grid extends beyond the schedule")
    traj = Trajectory(grid, out["hp"], out["hd"], out["energy"], out["norm"], sd,
                      (states[:, :, 0] if vec and store_states else states), coefs, stats)
    traj.final_state = psi[:, 0] if vec else psi
    return traj


def _rk(psi, h0, flags, cf, t0, t1, h_step, rtol, atol, norm_tol, max_steps, stats, impl):
    has_tf, d_a, d_b, d_c = flags
    try:
        h_next, n_acc, n_rej, nfev = kernels.dop853_propagate(
            psi, h0.n, has_tf, d_a, d_b, d_c, cf, t0, t1, min(h_step, t1 - t0), rtol, atol,
            norm_tol, max_steps, impl=impl)
    except kernels.NormDriftError as exc:
        raise IntegrationError(str(exc)) from exc
    except RuntimeError as exc:
        raise IntegrationError(str(exc)) from exc
    stats["n_accepted"] += n_acc
    stats["n_rejected"] += n_rej
    stats["nfev"] += nfev
    return h_next


def final_state(h0: HamiltonianSpec, schedules, psi0, **kw) -> np.ndarray:
    """State at ``t_final``."""
    path = schedules if isinstance(schedules, CoefficientPath) else CoefficientPath(schedules)
    return evolve(h0, path, psi0, [path.t_final], **kw).final_state


def stage_window(traj: Trajectory, stage: tuple[float, float], burn_in: float | None = None):
    t0, t1 = stage
    length = t1 - t0
    if length <= 0:
        raise ValueError("stage must have positive length")
    bi = 0.2 * length if burn_in is None else float(burn_in)
    if bi >= length:
        raise ValueError("burn-in must be shorter than the stage")
    m = (traj.times > t0 + bi - 1e-12 * max(1.0, abs(t1))) & (traj.times <= t1 + 1e-12 * max(1.0, abs(t1)))
    if bi == 0.0:
        m |= np.isclose(traj.times, t0) & (t0 == 0.0)
    if not np.any(m):
        raise ValueError("empty averaging window")
    return m


def stage_average(traj: Trajectory, stage: tuple[float, float], burn_in: float | None = None,
                  series: str = "hp") -> float:
    """Time average of ``<H_p>`` over a stage after discarding ``burn_in``
    (default 20% of the stage length)."""
    m = stage_window(traj, stage, burn_in)
    t = traj.times[m]
    y = getattr(traj, series)[m]
    if t.size == 1 or t[-1] == t[0]:
        return float(np.mean(y))
    return float(np.trapezoid(y, t) / (t[-1] - t[0]))


def stage_std(traj: Trajectory, stage, burn_in=None, series: str = "hp") -> float:
    """Standard deviation of the series within the averaging window."""
    m = stage_window(traj, stage, burn_in)
    return float(np.std(getattr(traj, series)[m]))


def cyclic_quench_work(h: HamiltonianSpec, gamma1: float, gamma2: float, t1: float, t2: float,
                       psi0: np.ndarray) -> float:
    """Work ``dgamma (<H_p(t2)> - <H_p(t1)>)`` extracted by quenching the problem
    coupling gamma1 -> gamma2 at ``t1`` and back at ``t2``; Planck's principle
    predicts it is not positive."""
    if not t2 > t1 > 0:
        raise ValueError("need 0 < t1 < t2")
    tmpl = h.with_coefficients(h.a, gamma1)
    sched = Schedule.staircase("gamma", [gamma1, gamma2], [t1, t2], monotone=False)
    traj = evolve(tmpl, CoefficientPath(sched, defaults=(h.a, 1.0)), psi0, [t1, t2])
    return float((gamma2 - gamma1) * (traj.hp[1] - traj.hp[0]))
