"""Experiment protocols: multi-stage quantum walks, warm starts, reverse and
biased annealing shot loops, transition matrices and two-register entropy
bookkeeping.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    CoefficientPath,
    Schedule,
    Trajectory,
    evolve,
    final_state,
    fmt,
    stage_average,
    stage_std,
)
from .operators import DriverSpec, HamiltonianSpec, apply, eig
from .problems import N_MAX, IsingProblem, SizeCapError, check_size
from .statmech import (
    degenerate_blocks,
    diagonal_entropy,
    eth_expectation,
    gibbs_model,
    mixture_steady_expectation,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# states


def plus_state(n: int) -> np.ndarray:
    """``|+...+>``, the ground state of the transverse-field driver."""
    d = 1 << n
    return np.full(d, 1.0 / np.sqrt(d), dtype=complex)


def basis_state(n: int, z: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[z] = 1.0
    return psi


def better_than_random(problem: IsingProblem) -> np.ndarray:
    """Strings ``s`` with ``H_p(s) < Tr' H_p``."""
    e = np.asarray(problem.energies)
    return np.flatnonzero(e < e.mean())


def ensemble_initial(problem: IsingProblem) -> tuple[np.ndarray, np.ndarray]:
    """Uniform distribution over the strings that beat random guessing; returns
    ``(weights, strings)``."""
    s = better_than_random(problem)
    if s.size == 0:
        raise ValueError("no string lies below the spectral mean")
    return np.full(s.size, 1.0 / s.size), s


def draw_initial_string(problem: IsingProblem, rng: np.random.Generator) -> int:
    """Uniformly random strings are drawn until one beats ``Tr' H_p``."""
    e = np.asarray(problem.energies)
    mean = e.mean()
    if not np.any(e < mean):
        raise ValueError("no string lies below the spectral mean")
    while True:
        z = int(rng.integers(problem.dim))
        if e[z] < mean:
            return z


def time_averaged_distribution(h: HamiltonianSpec, weights, states) -> np.ndarray:
    """Infinite-time average of ``|<z|psi(t)>|^2`` for a mixture evolving under ``h``.

    Coherences inside degenerate eigenspaces do not dephase and are kept.
    """
    es = eig(h)
    states = np.asarray(states)
    if states.ndim == 1:
        states = states[:, None]
    w = np.asarray(weights, dtype=float)
    c = es.vectors.T @ states
    out = np.zeros(h.dim)
    for a, b in degenerate_blocks(es.values):
        amp = es.vectors[:, a:b] @ c[a:b]
        out += (amp.real ** 2 + amp.imag ** 2) @ w
    return out


# ---------------------------------------------------------------------------
# multi-stage quantum walks


@dataclass(frozen=True)
class StageSummary:
    stage: int
    t_start: float
    t_end: float
    gamma: float
    hp_mean: float
    hp_std: float
    hp_diagonal: float
    eth_beta: float
    hp_eth: float


@dataclass
class MsqwResult:
    trajectory: Trajectory
    stages: list[StageSummary]
    problem_seed: object = None

    def is_monotone(self, nsigma: float = 3.0) -> bool:
        return stages_monotone(self.stages, nsigma)

    def stage_records(self) -> list[dict]:
        return [asdict(s) for s in self.stages]


def stages_monotone(stages: Sequence[StageSummary], nsigma: float = 3.0) -> bool:
    """Stage averages never rise by more than ``nsigma`` times the larger
    within-stage fluctuation of the two stages compared."""
    for s0, s1 in zip(stages, stages[1:]):
        tol = nsigma * max(s0.hp_std, s1.hp_std)
        if s1.hp_mean > s0.hp_mean + tol:
            return False
    return True


def msqw_run(problem: IsingProblem, staircase: Schedule, *, driver: DriverSpec | None = None,
             psi0: np.ndarray | None = None, samples_per_stage: int = 200,
             burn_in: float = 0.2, predictions: bool = True) -> MsqwResult:
    """Multi-stage walk under ``H_d + gamma(t) H_p`` with a piecewise-constant gamma.

    Each stage gets its time average and spread of ``<H_p>`` after the
    burn-in fraction, the diagonal-ensemble value, and the ETH value at the
    stage energy.
    """
    if staircase.kind != "piecewise_constant" or staircase.channel != "gamma":
        raise ValueError("MSQW needs a piecewise-constant gamma schedule")
    driver = driver or DriverSpec.transverse_field(problem.n)
    psi = plus_state(problem.n) if psi0 is None else np.asarray(psi0, dtype=complex)
    ends = [t for t, _ in staircase.breakpoints]
    gammas = [g for _, g in staircase.breakpoints]
    starts = [0.0] + ends[:-1]
    grid = np.unique(np.concatenate(
        [np.linspace(a, b, samples_per_stage + 1) for a, b in zip(starts, ends)]))
    tmpl = HamiltonianSpec(1.0, gammas[0], driver, problem)
    traj = evolve(tmpl, staircase, psi, grid, method="exact")
    stages = []
    state = psi
    e = np.asarray(problem.energies)
    for k, (a, b, g) in enumerate(zip(starts, ends, gammas)):
        hk = tmpl.with_coefficients(1.0, g)
        mean = stage_average(traj, (a, b), burn_in)
        std = stage_std(traj, (a, b), burn_in)
        diag = eth_b = eth_v = np.nan
        if predictions:
            diag = mixture_steady_expectation(np.ones(1), state[:, None], hk, e)
            en = float(np.vdot(state, apply(hk, state)).real)
            try:
                eth_b, eth_v = eth_expectation(hk, en, e)
            except ValueError:
                pass
        stages.append(StageSummary(k, a, b, g, mean, std, float(diag), float(eth_b), float(eth_v)))
        if k + 1 < len(ends):
            es = eig(hk)
            c = es.vectors.T @ state
            state = es.vectors @ (np.exp(-1j * es.values * (b - a)) * c)
    return MsqwResult(traj, stages, problem.seed)


def msqw_campaign(problems: Sequence[IsingProblem], staircase: Schedule,
                  stage_burn_in: float = 0.2, **kw) -> list[MsqwResult]:
    """``msqw_run`` over a problem set."""
    return [msqw_run(p, staircase, burn_in=stage_burn_in, **kw) for p in problems]


@dataclass(frozen=True)
class StageComparison:
    energy_two_stage: float
    energy_three_stage: float
    tolerance: float

    @property
    def difference(self) -> float:
        return self.energy_three_stage - self.energy_two_stage

    @property
    def ok(self) -> bool:
        return self.difference <= self.tolerance


def intermediate_stage_comparison(problem: IsingProblem, gammas=(0.5, 1.0, 2.0),
                                  times=(10.0, 20.0), *, driver: DriverSpec | None = None,
                                  samples: int = 400, burn_in: float = 0.2,
                                  nsigma: float = 3.0) -> StageComparison:
    """Energy in ``H(gamma_3)`` right after the final quench for the two-stage
    schedule ``gamma_1 -> gamma_3`` at ``t_1`` and the three-stage schedule
    ``gamma_1 -> gamma_2 -> gamma_3`` at ``t_1, t_2``.

    The tolerance is ``(gamma_3 - gamma_2)`` times ``nsigma`` standard
    deviations of ``<H_p>`` over the intermediate stage.
    """
    g1, g2, g3 = gammas
    t1, t2 = times
    if not (g1 < g2 < g3 and 0 < t1 < t2):
        raise ValueError("need gamma_1 < gamma_2 < gamma_3 and 0 < t_1 < t_2")
    driver = driver or DriverSpec.transverse_field(problem.n)
    tmpl = HamiltonianSpec(1.0, g1, driver, problem)
    psi = plus_state(problem.n)
    sched = Schedule.staircase("gamma", [g1, g2], [t1, t2])
    grid = np.unique(np.concatenate([[0.0], np.linspace(t1, t2, samples + 1)]))
    traj = evolve(tmpl, sched, psi, grid, method="exact")
    e1 = float(traj.energy[0])  # conserved during the first stage
    hp1 = float(traj.hp[np.searchsorted(grid, t1)])
    hp2 = float(traj.hp[-1])
    two = e1 + (g3 - g1) * hp1
    three = e1 + (g2 - g1) * hp1 + (g3 - g2) * hp2
    sig = stage_std(traj, (t1, t2), burn_in)
    return StageComparison(two, three, (g3 - g2) * nsigma * sig)


@dataclass
class PassiveRampResult:
    label: str
    times: np.ndarray
    hp: np.ndarray
    hp_initial: float
    tolerance: float

    @property
    def max_excess(self) -> float:
        return float(np.max(self.hp - self.hp_initial))

    @property
    def ok(self) -> bool:
        return self.max_excess <= self.tolerance


def passive_ramp(problem: IsingProblem, staircase: Schedule, initial="ground", *,
                 driver: DriverSpec | None = None, samples_per_stage: int = 100,
                 nsigma: float = 3.0) -> PassiveRampResult:
    """Evolve a passive state of ``H_d + gamma(0) H_p`` under a monotone gamma ramp.

    ``initial`` is ``"ground"`` or a non-negative inverse temperature. The
    tolerance is ``nsigma`` times the standard deviation of ``<H_p(t)>`` over
    the sampled times.
    """
    if not staircase.monotone:
        raise ValueError("the gamma ramp must be flagged monotone")
    driver = driver or DriverSpec.transverse_field(problem.n)
    g0 = staircase.value(0.0)
    h0 = HamiltonianSpec(1.0, g0, driver, problem)
    es = eig(h0)
    if isinstance(initial, str):
        if initial != "ground":
            raise ValueError("initial must be 'ground' or an inverse temperature")
        blk = degenerate_blocks(es.values)[0]
        m = blk[1] - blk[0]
        weights, states, label = np.full(m, 1.0 / m), es.vectors[:, blk[0]:blk[1]], "ground"
    else:
        beta = float(initial)
        p = gibbs_model(es, beta).populations
        keep = p > 1e-16
        weights, states, label = p[keep] / p[keep].sum(), es.vectors[:, keep], f"gibbs_beta={beta:g}"
    ends = [t for t, _ in staircase.breakpoints]
    starts = [0.0] + ends[:-1]
    grid = np.unique(np.concatenate(
        [np.linspace(a, b, samples_per_stage + 1) for a, b in zip(starts, ends)]))
    traj = evolve(h0, staircase, states.astype(complex), grid, weights=weights, method="exact")
    hp0 = float(traj.hp[0])
    return PassiveRampResult(label, grid, traj.hp, hp0, nsigma * float(np.std(traj.hp)))


# ---------------------------------------------------------------------------
# warm start


@dataclass
class WarmStartResult:
    hp_initial: float
    hp_time_avg: float
    hp_values: np.ndarray
    hp_probabilities: np.ndarray
    precondition_ok: bool
    conservation_residual: float = np.nan
    trajectory: Trajectory | None = None

    @property
    def no_go_holds(self) -> bool:
        return self.hp_time_avg >= self.hp_initial - 1e-10 * max(1.0, abs(self.hp_initial))

    def distribution_records(self) -> list[dict]:
        return [{"hp": float(v), "probability": float(p)}
                for v, p in zip(self.hp_values, self.hp_probabilities)]


def warmstart_ctqw(problem: IsingProblem, g: float, initial="ensemble", t1: float | None = None,
                   grid=None, *, driver: DriverSpec | None = None) -> WarmStartResult:
    """Walk under ``g H_d + H_p`` from a warm start.

    Parameters
    ----------
    initial : int, "ensemble" or (weights, strings)
        A single bitstring, the uniform ensemble over strings below the
        spectral mean, or an explicit mixture of bitstrings.
    t1, grid : optional
        When given, the state is also propagated on ``grid`` up to ``t1`` and the
        energy-balance identity ``g (<H_d(t)> - <H_d(0)>) = <H_p(0)> - <H_p(t)>``
        is checked.
    """
    driver = driver or DriverSpec.transverse_field(problem.n)
    e = np.asarray(problem.energies)
    if isinstance(initial, str):
        if initial != "ensemble":
            raise ValueError("initial must be a bitstring, 'ensemble' or (weights, strings)")
        weights, strings = ensemble_initial(problem)
    elif isinstance(initial, (int, np.integer)):
        weights, strings = np.ones(1), np.array([int(initial)])
    else:
        weights, strings = (np.asarray(x) for x in initial)
    weights = np.asarray(weights, dtype=float)
    hp0 = float(weights @ e[strings])
    ok = hp0 < e.mean()
    if not ok:
        log.warning("warm start is not better than random guessing; no-go not implied")
    h = HamiltonianSpec(float(g), 1.0, driver, problem)
    states = np.zeros((problem.dim, strings.size), dtype=complex)
    states[strings, np.arange(strings.size)] = 1.0
    dist = time_averaged_distribution(h, weights, states)
    vals, inv = np.unique(e, return_inverse=True)
    probs = np.bincount(inv, weights=dist, minlength=vals.size)
    avg = float(dist @ e)
    res = WarmStartResult(hp0, avg, vals, probs, ok)
    if grid is not None:
        t_end = float(t1 if t1 is not None else np.max(grid))
        path = CoefficientPath(Schedule.constant("G", float(g), t_end))
        traj = evolve(h, path, states if strings.size > 1 else states[:, 0], grid,
                      weights=weights if strings.size > 1 else None, method="exact")
        res.trajectory = traj
        res.conservation_residual = float(np.max(np.abs(
            g * (traj.hd - traj.hd[0]) - (traj.hp[0] - traj.hp))))
    return res


# ---------------------------------------------------------------------------
# cyclic unitaries


class CyclicUnitary:
    """One cycle of ``H_p (+ H_b) + G(t) H_d`` with ``G`` vanishing at both ends.

    Columns ``U|s>`` are propagated on demand and memoised.
    """

    def __init__(self, problem: IsingProblem, driver: DriverSpec, bias: DriverSpec | None,
                 drive: Schedule, rtol: float = 1e-10, atol: float = 1e-12,
                 cache_columns: int = 4096):
        if drive.channel != "G":
            raise ValueError("the drive must act on the G channel")
        amp = max(abs(drive.params.get("amplitude", 1.0)), 1.0)
        if abs(drive.value(0.0)) > 1e-8 * amp or abs(drive.value(drive.t_final)) > 1e-8 * amp:
            raise ValueError("drive is not cyclic: G(0) or G(t_cyc) exceeds 1e-8 of the amplitude")
        self.problem = problem
        self.h = HamiltonianSpec(0.0, 1.0, driver, problem, bias)
        self.drive = drive
        self.path = CoefficientPath(drive, defaults=(0.0, 1.0))
        self.rtol, self.atol = rtol, atol
        self._cols: dict[int, np.ndarray] = {}
        self._cap = int(cache_columns)

    @property
    def dim(self) -> int:
        return self.h.dim

    @property
    def endpoint_hamiltonian(self) -> HamiltonianSpec:
        """``H(0) = H(t_cyc) = H_p (+ H_b)``."""
        return self.h

    def apply(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if psi.ndim == 1:
            return final_state(self.h, self.path, psi, rtol=self.rtol, atol=self.atol)
        m = psi.shape[1]
        return final_state(self.h, self.path, psi, weights=np.full(m, 1.0 / m),
                           rtol=self.rtol, atol=self.atol)

    def column(self, s: int) -> np.ndarray:
        s = int(s)
        hit = self._cols.get(s)
        if hit is None:
            hit = self.apply(basis_state(self.problem.n, s))
            if len(self._cols) < self._cap:
                self._cols[s] = hit
        return hit

    def matrix(self, block: int = 256) -> np.ndarray:
        """Dense ``U``; columns are propagated in blocks."""
        d = self.dim
        u = np.empty((d, d), dtype=complex)
        for a in range(0, d, block):
            b = min(d, a + block)
            eye = np.zeros((d, b - a), dtype=complex)
            eye[np.arange(a, b), np.arange(b - a)] = 1.0
            u[:, a:b] = self.apply(eye)
        return u


def cyclic_unitary(problem: IsingProblem, driver: DriverSpec, bias: DriverSpec | None,
                   drive: Schedule, **kw) -> CyclicUnitary:
    """Handle for the propagator of one drive cycle."""
    return CyclicUnitary(problem, driver, bias, drive, **kw)


def transition_matrix(u, cap: int = N_MAX) -> np.ndarray:
    """``P[j, s] = |<j|U|s>|^2`` for a ``CyclicUnitary`` or a dense unitary."""
    if isinstance(u, CyclicUnitary):
        check_size(u.problem.n, cap)
        m = u.matrix()
    else:
        m = np.asarray(u)
        if m.shape[0] > (1 << cap):
            raise SizeCapError("transition matrix exceeds the size cap")
    return m.real ** 2 + m.imag ** 2


def stochasticity_error(p: np.ndarray) -> float:
    """Largest deviation of a row or column sum from 1."""
    return float(max(np.max(np.abs(p.sum(axis=0) - 1)), np.max(np.abs(p.sum(axis=1) - 1))))


def distribution_step(p_matrix: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Measured distribution after one cycle, ``P p``."""
    return p_matrix @ dist


# ---------------------------------------------------------------------------
# shot loops


@dataclass(frozen=True)
class ShotRecord:
    shot: int
    input: int
    output: int
    hp_in: float
    hp_out: float
    alpha: float
    accepted: bool
    work: float
    hp_mean: float = np.nan

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.accepted != (self.hp_out < self.hp_in):
            raise ValueError("accepted must equal hp_out < hp_in")


SHOT_COLUMNS = ("shot", "input", "output", "hp_in", "hp_out", "alpha", "accepted", "work",
                "hp_mean")


@dataclass(frozen=True)
class ProtocolConfig:
    """Shot-loop settings.

    ``alpha0 = None`` means ``sqrt(Tr' H_p^2)`` and ``alpha_step = None`` means
    ``alpha0 / k``.
    """

    k_max: int = 100
    k: int = 10
    alpha0: float | None = None
    alpha_step: float | None = None
    alpha_direction: str = "decrease"
    alpha_reset: bool = True
    amplitude: float = 1.0
    t_cycle: float = 10.0
    width: float | None = None
    exponent: float = 4.0
    bias_kind: str = "biased_local"
    seed: int = 0
    dense: bool = False
    psuc_cutoff: float | None = None

    def __post_init__(self):
        if not self.k_max >= self.k >= 1:
            raise ValueError("need k_max >= k >= 1")
        if self.alpha0 is not None and self.alpha0 < 0:
            raise ValueError("alpha0 must be non-negative")
        if self.alpha_direction not in ("decrease", "increase"):
            raise ValueError("alpha_direction is 'decrease' or 'increase'")
        if self.bias_kind not in ("biased_local", "projector_bias"):
            raise ValueError("unknown bias kind")

    def drive(self) -> Schedule:
        return Schedule.square_gaussian("G", self.t_cycle, self.amplitude, width=self.width,
                                        exponent=self.exponent)


@dataclass
class ShotLog:
    protocol: str
    records: list[ShotRecord]
    initial: int
    best: int
    best_hp: float
    ground_hp: float
    psuc: np.ndarray | None = None
    dense_series: dict | None = None

    @property
    def found_ground(self) -> bool:
        return bool(self.best_hp <= self.ground_hp + 1e-9 * max(1.0, abs(self.ground_hp)))

    @property
    def shots_used(self) -> int:
        return len(self.records)

    @property
    def approx_ratio(self) -> float:
        return float(self.best_hp / self.ground_hp) if self.ground_hp != 0 else np.nan

    def summary(self) -> dict:
        return {"found_ground": self.found_ground, "shots_used": self.shots_used,
                "best_hp": float(self.best_hp), "approx_ratio": self.approx_ratio}

    def heating_fraction(self) -> float:
        """Fraction of shots whose output ``<H_p>`` exceeds the input string's value."""
        if not self.records:
            return np.nan
        return float(np.mean([r.hp_mean > r.hp_in for r in self.records]))

    def to_csv(self, target=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SHOT_COLUMNS)
        for r in self.records:
            w.writerow([r.shot, r.input, r.output, fmt(r.hp_in), fmt(r.hp_out), fmt(r.alpha),
                        int(r.accepted), fmt(r.work), fmt(r.hp_mean)])
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text


def _expect(table: np.ndarray, psi: np.ndarray) -> float:
    return float((psi.real ** 2 + psi.imag ** 2) @ table)


def _sample(psi: np.ndarray, rng: np.random.Generator) -> int:
    p = psi.real ** 2 + psi.imag ** 2
    return int(rng.choice(p.size, p=p / p.sum()))


def _default_alpha0(problem: IsingProblem) -> float:
    e = np.asarray(problem.energies)
    return float(np.sqrt(np.mean(e * e)))


def _rng_of(config: ProtocolConfig, rng):
    if rng is not None:
        return rng
    return np.random.default_rng(config.seed)


def rqa_run(problem: IsingProblem, config: ProtocolConfig = ProtocolConfig(), initial=None, *,
            driver: DriverSpec | None = None, rng: np.random.Generator | None = None,
            unitary: CyclicUnitary | None = None) -> ShotLog:
    """Reverse annealing without a bias: repeat the cycle from the best string so far.

    ``initial`` is a start string; by default one is drawn uniformly from the
    strings below ``Tr' H_p``. In dense mode the ensemble recursion for the
    success probability is also evaluated.
    """
    rng = _rng_of(config, rng)
    driver = driver or DriverSpec.transverse_field(problem.n)
    e = np.asarray(problem.energies)
    u = unitary or cyclic_unitary(problem, driver, None, config.drive())
    cur = draw_initial_string(problem, rng) if initial is None else int(initial)
    start = cur
    recs: list[ShotRecord] = []
    stalls = 0
    psuc = series = None
    if config.dense:
        p0 = np.zeros(problem.dim)
        s = better_than_random(problem)
        p0[s] = 1.0 / s.size
        psuc, series = psuc_series(transition_matrix(u), e, p0, config.k_max)
    for shot in range(config.k_max):
        psi = u.column(cur)
        out = _sample(psi, rng)
        hp_mean = _expect(e, psi)
        acc = bool(e[out] < e[cur])
        recs.append(ShotRecord(shot, cur, out, float(e[cur]), float(e[out]), 0.0, acc,
                               float(e[cur] - hp_mean), hp_mean))
        if acc:
            cur, stalls = out, 0
        else:
            stalls += 1
        if stalls >= config.k:
            break
        if (config.psuc_cutoff is not None and psuc is not None and shot + 1 < psuc.size
                and psuc[shot + 1] > 0 and 1.0 / psuc[shot + 1] > config.psuc_cutoff):
            break
    return ShotLog("rqa", recs, start, cur, float(e[cur]), float(e.min()), psuc, series)


def psuc_series(p_matrix: np.ndarray, energies: np.ndarray, p0: np.ndarray,
                stages: int) -> tuple[np.ndarray, dict]:
    """Ensemble recursion over strictly descending chains.

    With ``f_0 = p0`` and ``f_k(j) = sum_{s : E_j < E_s} P[j, s] f_{k-1}(s)``,
    ``p_suc(k) = sum f_k / sum f_{k-1}``. Also returns ``<H_p>`` and the
    diagonal entropy (base 2) of the measured and post-selected distributions.
    """
    e = np.asarray(energies)
    lower = e[:, None] < e[None, :]
    pl = np.where(lower, p_matrix, 0.0)
    f = np.asarray(p0, dtype=float)
    out = np.zeros(stages)
    keys = ("hp_measured", "hp_postselected", "sd_measured", "sd_postselected")
    ser = {k: np.full(stages, np.nan) for k in keys}
    for k in range(stages):
        tot = f.sum()
        if tot <= 0:
            break
        meas = p_matrix @ f / tot
        nxt = pl @ f
        out[k] = nxt.sum() / tot
        ser["hp_measured"][k] = meas @ e
        ser["sd_measured"][k] = diagonal_entropy(meas, base=2)
        if nxt.sum() > 0:
            ps = nxt / nxt.sum()
            ser["hp_postselected"][k] = ps @ e
            ser["sd_postselected"][k] = diagonal_entropy(ps, base=2)
        f = nxt
    return out, ser


def bqa_run(problem: IsingProblem, config: ProtocolConfig = ProtocolConfig(), initial=None, *,
            driver: DriverSpec | None = None, rng: np.random.Generator | None = None) -> ShotLog:
    """Biased annealing: each cycle adds a bias whose ground state is the best string.

    ``alpha`` starts at ``alpha0``, moves by ``alpha_step`` on every
    non-improving shot (clamped at zero) and returns to ``alpha0`` after an
    acceptance unless ``alpha_reset`` is off. The run stops after ``k``
    consecutive non-improving shots or ``k_max`` shots.
    """
    rng = _rng_of(config, rng)
    driver = driver or DriverSpec.transverse_field(problem.n)
    e = np.asarray(problem.energies)
    if initial is None:
        cur = draw_initial_string(problem, rng)
    else:
        cur = int(initial)
        if not e[cur] < e.mean():
            log.warning("BQA start string is not better than random guessing")
    start = cur
    a0 = _default_alpha0(problem) if config.alpha0 is None else float(config.alpha0)
    step = a0 / config.k if config.alpha_step is None else float(config.alpha_step)
    if config.alpha_direction == "increase":
        log.warning("alpha increases on failure: deviates from the decreasing default")
    alpha = a0
    drive = config.drive()
    recs: list[ShotRecord] = []
    stalls = 0
    cache: dict[tuple, np.ndarray] = {}
    make = DriverSpec.biased_local if config.bias_kind == "biased_local" else DriverSpec.projector_bias
    for shot in range(config.k_max):
        key = (cur, round(alpha, 15))
        bias = make(problem.n, cur, alpha)
        psi = cache.get(key)
        if psi is None:
            psi = cyclic_unitary(problem, driver, bias, drive).column(cur)
            cache[key] = psi
        out = _sample(psi, rng)
        hb = np.asarray(bias.diagonal)
        hp_mean = _expect(e, psi)
        work = float(e[cur] + hb[cur] - hp_mean - _expect(hb, psi))
        acc = bool(e[out] < e[cur])
        recs.append(ShotRecord(shot, cur, out, float(e[cur]), float(e[out]), float(alpha), acc,
                               work, hp_mean))
        if acc:
            cur, stalls = out, 0
            if config.alpha_reset:
                alpha = a0
        else:
            stalls += 1
            if config.alpha_direction == "decrease":
                nxt = alpha - step
                if nxt < 0:
                    if alpha > 0:
                        log.debug("alpha clamped at zero")
                    nxt = 0.0
                alpha = nxt
            else:
                alpha = alpha + step
        if stalls >= config.k:
            break
    return ShotLog("bqa", recs, start, cur, float(e[cur]), float(e.min()))


# ---------------------------------------------------------------------------
# two-register entropy bookkeeping


@dataclass(frozen=True)
class EntropyLedger:
    sd_joint: float
    sd_q: float
    sd_c: float
    s0: float


def entropy_accounting(p, cycles: Callable[[int], np.ndarray], n: int,
                       cap: int = N_MAX) -> EntropyLedger:
    """Diagonal entropies after ``sum_z U_z (x) |z><z|`` acts on ``rho_Q (x) |0><0|_C``
    with the classical register copied from the measured string.

    Parameters
    ----------
    p : array_like
        Distribution ``p_z`` over input strings.
    cycles : callable
        ``cycles(z)`` returns ``U_z |z>``. Only strings with ``p_z > 0`` are
        evaluated; the joint state is held as one ``2**n`` column per string.
    """
    check_size(n, cap)
    p = np.asarray(p, dtype=float)
    if p.shape != (1 << n,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise ValueError("p must be a probability vector over 2**n strings")
    support = np.flatnonzero(p > 0)
    joint = []
    q = np.zeros(1 << n)
    for z in support:
        col = np.asarray(cycles(int(z)))
        prob = col.real ** 2 + col.imag ** 2
        joint.append(p[z] * prob)
        q += p[z] * prob
    marginal_c = np.array([blk.sum() for blk in joint])
    return EntropyLedger(diagonal_entropy(np.concatenate(joint)), diagonal_entropy(q),
                         diagonal_entropy(marginal_c), diagonal_entropy(p))


def shot_summary(logs: Sequence[ShotLog]) -> list[dict]:
    return [dict(instance=i, **lg.summary()) for i, lg in enumerate(logs)]
