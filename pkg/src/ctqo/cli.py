"""Config-driven campaign runner.

``ctqo run --config exp.yaml --out results/`` validates the YAML against a
strict schema, runs every instance, writes CSV data, a summary JSON derived
from those CSVs, and a manifest with file hashes. ``ctqo verify`` recomputes
the summary from the CSVs and compares it with the stored one.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .dynamics import CoefficientPath, IntegrationError, Schedule, evolve, fmt
from .operators import DriverSpec, HamiltonianSpec, SpectrumError
from .problems import N_MAX, SizeCapError, check_size, instance_seed, make_problem
from .pstqa import PstqaBreakdown
from .statmech import BetaRangeError

log = logging.getLogger("ctqo")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_SIZE, EXIT_NUMERICAL = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schema


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemSpec(Strict):
    family: Literal["maxcut", "sk"] = "maxcut"
    n: int = Field(10, ge=1)
    count: int = Field(1, ge=1)
    seed: int = 0
    p: float = Field(2.0 / 3.0, ge=0.0, le=1.0)


class ScheduleSpec(Strict):
    kind: Literal["linear", "staircase", "square_gaussian", "constant", "tabulated"]
    channel: Literal["A", "B", "gamma", "G"]
    t_final: float = Field(gt=0)
    start: Optional[float] = None
    end: Optional[float] = None
    value: Optional[float] = None
    values: Optional[list[float]] = None
    stage_ends: Optional[list[float]] = None
    points: Optional[list[tuple[float, float]]] = None
    amplitude: float = 1.0
    centre: Optional[float] = None
    width: Optional[float] = None
    exponent: float = 4.0
    monotone: bool = False

    @model_validator(mode="after")
    def _fields(self):
        need = {"linear": ("start", "end"), "staircase": ("values", "stage_ends"),
                "constant": ("value",), "tabulated": ("points",), "square_gaussian": ()}
        missing = [f for f in need[self.kind] if getattr(self, f) is None]
        if missing:
            raise ValueError(f"{self.kind} schedule needs {', '.join(missing)}")
        return self

    def build(self) -> Schedule:
        if self.kind == "linear":
            return Schedule.linear(self.channel, self.start, self.end, self.t_final, self.monotone)
        if self.kind == "constant":
            return Schedule.constant(self.channel, self.value, self.t_final)
        if self.kind == "staircase":
            if abs(self.stage_ends[-1] - self.t_final) > 1e-12 * self.t_final:
                raise ValueError("last stage end must equal t_final")
            return Schedule.staircase(self.channel, self.values, self.stage_ends, self.monotone)
        if self.kind == "tabulated":
            return Schedule("tabulated", self.channel, self.t_final, tuple(self.points),
                            monotone=self.monotone)
        return Schedule.square_gaussian(self.channel, self.t_final, self.amplitude, self.centre,
                                        self.width, self.exponent)


class BackendSpec(Strict):
    kind: Literal["exact", "gaussian", "emg"] = "exact"
    rtol: float = Field(1e-8, gt=0)


class MsqwParams(Strict):
    burn_in: float = Field(0.2, ge=0, lt=1)
    samples_per_stage: int = Field(200, ge=2)
    predictions: bool = True


class PstqaParams(Strict):
    grid_points: int = Field(101, ge=2)
    schrodinger: bool = True
    paths: list[list[ScheduleSpec]] = Field(default_factory=list)


class AnsatzParams(Strict):
    models: list[Literal["gaussian", "gaussian_closed_form", "emg", "exact"]] = ["gaussian", "emg"]
    grid_points: int = Field(101, ge=2)
    schrodinger: bool = True


class WarmstartParams(Strict):
    g: float = 0.5
    initial: Union[Literal["ensemble"], int] = "ensemble"
    t1: float = Field(20.0, gt=0)
    grid_points: int = Field(201, ge=2)


class ShotParams(Strict):
    k_max: int = Field(100, ge=1)
    k: int = Field(10, ge=1)
    alpha0: Optional[float] = Field(None, ge=0)
    alpha_step: Optional[float] = Field(None, ge=0)
    alpha_direction: Literal["decrease", "increase"] = "decrease"
    alpha_reset: bool = True
    amplitude: float = 1.0
    t_cycle: float = Field(10.0, gt=0)
    width: Optional[float] = None
    exponent: float = 4.0
    bias_kind: Literal["biased_local", "projector_bias"] = "biased_local"
    dense: bool = False
    psuc_cutoff: Optional[float] = None


class SweepParams(Strict):
    betas: list[float] = [0.1, 1.0, 5.0]
    gamma_min: float = 0.0
    gamma_max: float = 2.0
    points: int = Field(50, ge=3)


class PropertiesParams(Strict):
    suites: list[Literal["gibbs_passivity", "doubly_stochastic", "sd_conservation",
                         "tf_invariance", "path_independence", "entropy_ledger",
                         "emg_round_trip", "gibbs_sweep", "warmstart_no_go"]] = [
        "gibbs_passivity", "doubly_stochastic", "sd_conservation", "tf_invariance",
        "path_independence", "entropy_ledger", "emg_round_trip", "gibbs_sweep",
        "warmstart_no_go"]
    unitaries: int = Field(20, ge=1)


class Tolerances(Strict):
    gibbs_passivity: float = 1e-10
    doubly_stochastic: float = 1e-9
    sd_conservation: float = 1e-6
    tf_invariance: float = 1e-6
    path_independence: float = 1e-4
    entropy_ledger: float = 1e-12
    emg_round_trip: float = 1e-9
    gibbs_sweep: float = 1e-9
    warmstart_no_go: float = 1e-10
    msqw_nsigma: float = 3.0


class CampaignConfig(Strict):
    experiment: Literal["msqw", "pstqa", "ansatz", "warmstart", "rqa", "bqa", "gibbs_sweep",
                        "properties"]
    problem: ProblemSpec = ProblemSpec()
    schedules: list[ScheduleSpec] = Field(default_factory=list)
    backend: BackendSpec = BackendSpec()
    output: str = "results"
    tolerances: Tolerances = Tolerances()
    msqw: MsqwParams = MsqwParams()
    pstqa: PstqaParams = PstqaParams()
    ansatz: AnsatzParams = AnsatzParams()
    warmstart: WarmstartParams = WarmstartParams()
    shots: ShotParams = ShotParams()
    gibbs_sweep: SweepParams = SweepParams()
    properties: PropertiesParams = PropertiesParams()

    @model_validator(mode="after")
    def _needs_schedules(self):
        if self.experiment in ("msqw", "pstqa", "ansatz") and not self.schedules:
            raise ValueError(f"experiment {self.experiment} needs schedules")
        return self


def load_config(path: str | Path) -> CampaignConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        return CampaignConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def canonical_config(cfg: CampaignConfig) -> dict:
    """Config as JSON data without the output directory, which does not affect results."""
    return cfg.model_dump(mode="json", exclude={"output"})


def config_hash(cfg: CampaignConfig) -> str:
    text = json.dumps(canonical_config(cfg), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# experiments; each worker returns {filename: csv text} plus instance metadata


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(fmt(x) if isinstance(x, (float, np.floating)) else str(x) for x in r))
    return "\n".join(lines) + "\n"


def _problem(cfg: CampaignConfig, i: int):
    pr = cfg.problem
    return make_problem(pr.family, pr.n, instance_seed(pr.seed, i), pr.p)


def _path(cfg: CampaignConfig, specs=None) -> CoefficientPath:
    specs = specs if specs is not None else cfg.schedules
    return CoefficientPath([s.build() for s in specs])


def _plus(n):
    d = 1 << n
    return np.full(d, 1.0 / np.sqrt(d), dtype=complex)


def _traj_csv(tr) -> str:
    return tr.to_csv()


def _run_msqw(cfg, i, prob):
    from .protocols import msqw_run

    sched = cfg.schedules[0].build()
    r = msqw_run(prob, sched, samples_per_stage=cfg.msqw.samples_per_stage,
                 burn_in=cfg.msqw.burn_in, predictions=cfg.msqw.predictions)
    cols = ("stage", "t_start", "t_end", "gamma", "hp_mean", "hp_std", "hp_diagonal",
            "eth_beta", "hp_eth")
    rows = [[s.stage, s.t_start, s.t_end, s.gamma, s.hp_mean, s.hp_std, s.hp_diagonal,
             s.eth_beta, s.hp_eth] for s in r.stages]
    return {f"trajectory_{i:03d}.csv": r.trajectory.to_csv(), f"stages_{i:03d}.csv": _csv(cols, rows)}


def _backend(kind, h, prob):
    from .ansatz import EmgBackend, GaussianBackend, moments_provider
    from .pstqa import ExactSpectrumBackend

    if kind == "exact":
        return ExactSpectrumBackend.from_hamiltonian(h)
    mp = moments_provider(prob, h.driver)
    return GaussianBackend(mp) if kind == "gaussian" else EmgBackend(mp)


def _schrodinger(h, path, grid):
    tr = evolve(h, path, _plus(h.n), grid)
    return tr.to_csv()


def _run_pstqa(cfg, i, prob):
    from .pstqa import initial_energy, pstqa_solve

    path = _path(cfg)
    a0, b0 = path.coef(0.0)
    h = HamiltonianSpec(a0, b0, DriverSpec.transverse_field(prob.n), prob)
    grid = np.linspace(0, path.t_final, cfg.pstqa.grid_points)
    e0 = initial_energy(h)
    out = {}
    be = _backend(cfg.backend.kind, h, prob)
    out[f"pstqa_{i:03d}.csv"] = pstqa_solve(be, path, e0, grid, rtol=cfg.backend.rtol).to_csv()
    if cfg.pstqa.schrodinger:
        out[f"schrodinger_{i:03d}.csv"] = _schrodinger(h, path, grid)
    for k, specs in enumerate(cfg.pstqa.paths):
        p = _path(cfg, specs)
        g = np.linspace(0, p.t_final, cfg.pstqa.grid_points)
        be = _backend(cfg.backend.kind, h, prob)
        out[f"path{k}_{i:03d}.csv"] = pstqa_solve(be, p, e0, g, rtol=cfg.backend.rtol).to_csv()
    return out


def _run_ansatz(cfg, i, prob):
    from .ansatz import gaussian_closed_form, moments_provider
    from .pstqa import initial_energy, pstqa_solve

    path = _path(cfg)
    a0, b0 = path.coef(0.0)
    h = HamiltonianSpec(a0, b0, DriverSpec.transverse_field(prob.n), prob)
    grid = np.linspace(0, path.t_final, cfg.ansatz.grid_points)
    e0 = initial_energy(h)
    out = {}
    for m in cfg.ansatz.models:
        if m == "gaussian_closed_form":
            tr = gaussian_closed_form(moments_provider(prob, h.driver), path, None, e0, grid)
        else:
            tr = pstqa_solve(_backend(m, h, prob), path, e0, grid, rtol=cfg.backend.rtol)
        out[f"{m}_{i:03d}.csv"] = tr.to_csv()
    if cfg.ansatz.schrodinger:
        out[f"schrodinger_{i:03d}.csv"] = _schrodinger(h, path, grid)
    return out


def _run_warmstart(cfg, i, prob):
    from .protocols import warmstart_ctqw

    p = cfg.warmstart
    grid = np.linspace(0, p.t1, p.grid_points)
    r = warmstart_ctqw(prob, p.g, p.initial, p.t1, grid)
    return {f"distribution_{i:03d}.csv": _csv(("hp", "probability"),
                                              zip(map(float, r.hp_values), map(float, r.hp_probabilities))),
            f"trajectory_{i:03d}.csv": r.trajectory.to_csv(),
            f"initial_{i:03d}.csv": _csv(("hp_initial", "precondition_ok"),
                                         [[r.hp_initial, int(r.precondition_ok)]])}


def _shot_config(cfg, i):
    from .protocols import ProtocolConfig

    p = cfg.shots
    return ProtocolConfig(k_max=p.k_max, k=p.k, alpha0=p.alpha0, alpha_step=p.alpha_step,
                          alpha_direction=p.alpha_direction, alpha_reset=p.alpha_reset,
                          amplitude=p.amplitude, t_cycle=p.t_cycle, width=p.width,
                          exponent=p.exponent, bias_kind=p.bias_kind, seed=cfg.problem.seed,
                          dense=p.dense, psuc_cutoff=p.psuc_cutoff)


def _shot_rngs(cfg, i):
    ss = np.random.SeedSequence([cfg.problem.seed, i, 7])
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def _run_shots(cfg, i, prob):
    from .protocols import bqa_run, draw_initial_string, rqa_run

    pc = _shot_config(cfg, i)
    r_init, r_shot = _shot_rngs(cfg, i)
    z0 = draw_initial_string(prob, r_init)
    if cfg.experiment == "rqa":
        lg = rqa_run(prob, pc, z0, rng=r_shot)
    else:
        lg = bqa_run(prob, pc, z0, rng=r_shot)
    out = {f"shots_{i:03d}.csv": lg.to_csv()}
    if lg.psuc is not None:
        keys = ("hp_measured", "hp_postselected", "sd_measured", "sd_postselected")
        rows = [[k + 1, float(lg.psuc[k])] + [float(lg.dense_series[c][k]) for c in keys]
                for k in range(lg.psuc.size)]
        out[f"psuc_{i:03d}.csv"] = _csv(("stage", "psuc") + keys, rows)
    return out


def _run_sweep(cfg, i, prob):
    from .statmech import gibbs_hp_sweep

    p = cfg.gibbs_sweep
    gam = np.linspace(p.gamma_min, p.gamma_max, p.points)
    rows = []
    for beta in p.betas:
        sw = gibbs_hp_sweep(prob, DriverSpec.transverse_field(prob.n), beta, gam)
        rows += [[r["beta"], r["gamma"], r["hp"], r["free_energy"], r["d2_free_energy"]]
                 for r in sw.to_records()]
    return {f"sweep_{i:03d}.csv": _csv(("beta", "gamma", "hp", "free_energy", "d2_free_energy"), rows)}


def _run_properties(cfg, i, prob):
    from . import properties as P

    tol = cfg.tolerances
    rng = np.random.default_rng(np.random.SeedSequence([cfg.problem.seed, i, 11]))
    n = prob.n
    drv = DriverSpec.transverse_field(n)
    h = HamiltonianSpec(1.3, 0.3, drv, prob)
    sched = P.linear_path(1.3, 0.3, 0.3, 1.3, 12.0)
    drive = Schedule.square_gaussian("G", 10.0)
    rows = []
    for s in cfg.properties.suites:
        if s == "gibbs_passivity":
            hg = HamiltonianSpec(1.0, 1.0, drv, prob)
            v = max(P.gibbs_passivity(hg, b, cfg.properties.unitaries, rng) for b in (0.5, 2.0))
        elif s == "doubly_stochastic":
            v = P.doubly_stochastic(prob, drive)
        elif s == "sd_conservation":
            d, s0 = P.sd_drift(h, sched)
            v = d / s0
        elif s == "tf_invariance":
            v = P.tf_invariance(h, sched)
        elif s == "path_independence":
            v = P.path_independence(h)
        elif s == "entropy_ledger":
            v = P.entropy_ledger(prob, drive, rng)
        elif s == "emg_round_trip":
            v = P.emg_round_trip(rng)
        elif s == "gibbs_sweep":
            v = max(P.sweep_monotone(prob, b, np.linspace(0, 2, 50)) for b in (0.1, 1.0, 5.0))
        else:
            v = P.warmstart_gap(prob, 0.5)
        rows.append([s, i, float(v), float(getattr(tol, s))])
    return {f"properties_{i:03d}.csv": _csv(("suite", "instance", "value", "tolerance"), rows)}


RUNNERS = {"msqw": _run_msqw, "pstqa": _run_pstqa, "ansatz": _run_ansatz,
           "warmstart": _run_warmstart, "rqa": _run_shots, "bqa": _run_shots,
           "gibbs_sweep": _run_sweep, "properties": _run_properties}


def _worker(args):
    cfg_json, i = args
    cfg = CampaignConfig.model_validate_json(cfg_json)
    prob = _problem(cfg, i)
    files = RUNNERS[cfg.experiment](cfg, i, prob)
    meta = [i, cfg.problem.family, prob.n, float(prob.energies.min()), float(prob.kappa2),
            "" if prob.kappa3 is None else prob.kappa3]
    return files, meta


# ---------------------------------------------------------------------------
# summaries (always recomputed from CSV files)


def _read(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _col(rows, key) -> np.ndarray:
    return np.array([float(r[key]) for r in rows])


def summarise(cfg: CampaignConfig, out: Path) -> dict:
    """Summary statistics derived only from the CSV files in ``out``."""
    inst = _read(out / "instances.csv")
    res = []
    for row in inst:
        i = int(row["instance"])
        ground = float(row["ground_energy"])
        rec = {"instance": i}
        ex = cfg.experiment
        if ex == "msqw":
            st = _read(out / f"stages_{i:03d}.csv")
            hp, sd = _col(st, "hp_mean"), _col(st, "hp_std")
            tol = cfg.tolerances.msqw_nsigma * np.maximum(sd[:-1], sd[1:])
            rec["monotone"] = bool(np.all(hp[1:] <= hp[:-1] + tol))
            rec["final_stage_hp"] = fmt(hp[-1])
        elif ex in ("pstqa", "ansatz"):
            names = ([f"pstqa_{i:03d}.csv"] if ex == "pstqa"
                     else [f"{m}_{i:03d}.csv" for m in cfg.ansatz.models])
            sch = out / f"schrodinger_{i:03d}.csv"
            ref = _col(_read(sch), "hp")[-1] if sch.exists() else None
            for nm in names:
                tr = _read(out / nm)
                key = nm.rsplit("_", 1)[0]
                hp = _col(tr, "hp")
                sdv = _col(tr, "sd")
                rec[f"{key}_hp_final"] = fmt(hp[-1])
                rec[f"{key}_sd_drift"] = fmt(np.max(np.abs(sdv - sdv[0])))
                if ref is not None:
                    rec[f"{key}_rel_error"] = fmt(abs(hp[-1] - ref) / abs(ref))
            if ref is not None:
                rec["schrodinger_hp_final"] = fmt(ref)
            k = 0
            finals = []
            while (out / f"path{k}_{i:03d}.csv").exists():
                finals.append(_col(_read(out / f"path{k}_{i:03d}.csv"), "hp")[-1])
                k += 1
            if len(finals) > 1:
                rec["path_hp_spread"] = fmt(max(finals) - min(finals))
        elif ex == "warmstart":
            d = _read(out / f"distribution_{i:03d}.csv")
            avg = float(_col(d, "hp") @ _col(d, "probability"))
            h0 = float(_read(out / f"initial_{i:03d}.csv")[0]["hp_initial"])
            rec.update(hp_initial=fmt(h0), hp_time_avg=fmt(avg),
                       no_go=bool(avg >= h0 - cfg.tolerances.warmstart_no_go * max(1, abs(h0))))
        elif ex in ("rqa", "bqa"):
            sh = _read(out / f"shots_{i:03d}.csv")
            hp_in, hp_out = _col(sh, "hp_in"), _col(sh, "hp_out")
            acc = _col(sh, "accepted").astype(bool)
            best = min([hp_in[0]] + list(hp_out[acc]))
            rec.update(found_ground=bool(best <= ground + 1e-9 * max(1.0, abs(ground))),
                       shots_used=len(sh), best_hp=fmt(best),
                       approx_ratio=fmt(best / ground) if ground != 0 else "nan",
                       heating_fraction=fmt(np.mean(_col(sh, "hp_mean") > hp_in)))
        elif ex == "gibbs_sweep":
            sw = _read(out / f"sweep_{i:03d}.csv")
            beta, hp = _col(sw, "beta"), _col(sw, "hp")
            worst = 0.0
            for b in np.unique(beta):
                worst = max(worst, float(np.max(np.diff(hp[beta == b]), initial=0.0)))
            rec.update(max_increase=fmt(worst),
                       monotone=bool(worst <= cfg.tolerances.gibbs_sweep))
        else:
            pr = _read(out / f"properties_{i:03d}.csv")
            for r in pr:
                rec[r["suite"]] = {"value": r["value"],
                                   "passed": bool(float(r["value"]) <= float(r["tolerance"]))}
        res.append(rec)
    return {"experiment": cfg.experiment, "instances": res}


# ---------------------------------------------------------------------------
# run / verify


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_campaign(cfg: CampaignConfig, out: Path, jobs: int = 1) -> dict:
    check_size(cfg.problem.n, N_MAX)
    out.mkdir(parents=True, exist_ok=True)
    cfg_json = cfg.model_dump_json()
    tasks = [(cfg_json, i) for i in range(cfg.problem.count)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_worker, tasks))
    else:
        results = [_worker(t) for t in tasks]
    metas = []
    for files, meta in results:
        metas.append(meta)
        for name, text in files.items():
            (out / name).write_text(text)
    (out / "instances.csv").write_text(_csv(
        ("instance", "family", "n", "ground_energy", "kappa2", "kappa3"), metas))
    (out / "config.json").write_text(json.dumps(canonical_config(cfg), indent=2,
                                                sort_keys=True) + "\n")
    summary = summarise(cfg, out)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files = sorted(p.name for p in out.iterdir() if p.name != "manifest.json" and p.is_file())
    manifest = {
        "toolkit_version": __version__,
        "experiment": cfg.experiment,
        "config_hash": config_hash(cfg),
        "seeds": {"campaign": cfg.problem.seed,
                  "instances": [[cfg.problem.seed, i] for i in range(cfg.problem.count)]},
        "files": {name: _sha256(out / name) for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _diff(a, b, prefix="") -> list[str]:
    if isinstance(a, dict) and isinstance(b, dict):
        out = []
        for k in sorted(set(a) | set(b)):
            out += _diff(a.get(k), b.get(k), f"{prefix}.{k}" if prefix else str(k))
        return out
    if isinstance(a, list) and isinstance(b, list) and len(a) == len(b):
        out = []
        for i, (x, y) in enumerate(zip(a, b)):
            out += _diff(x, y, f"{prefix}[{i}]")
        return out
    return [] if a == b else [f"{prefix}: stored {b!r} != recomputed {a!r}"]


def verify(manifest_path: Path) -> tuple[bool, list[str]]:
    """Recompute the summary from the CSV files and compare with summary.json."""
    out = manifest_path.parent
    manifest = json.loads(manifest_path.read_text())
    problems = []
    for name, digest in manifest["files"].items():
        p = out / name
        if not p.exists():
            problems.append(f"{name}: missing")
        elif _sha256(p) != digest:
            problems.append(f"{name}: sha256 mismatch")
    cfg = CampaignConfig.model_validate(json.loads((out / "config.json").read_text()))
    if config_hash(cfg) != manifest["config_hash"]:
        problems.append("config.json: config hash mismatch")
    stored = json.loads((out / "summary.json").read_text())
    try:
        fresh = json.loads(json.dumps(summarise(cfg, out)))
    except (OSError, KeyError, ValueError, IndexError) as exc:
        problems.append(f"summary: cannot recompute ({exc})")
    else:
        problems += _diff(fresh, stored)
    return not problems, problems


# ---------------------------------------------------------------------------
# entry point


EXPERIMENT_FAMILIES = {
    "msqw": "multi-stage quantum walk trajectories with diagonal-ensemble and ETH overlays",
    "pstqa": "thermal annealing equations against Schrodinger evolution, path independence",
    "ansatz": "Gaussian and EMG partition-function models",
    "warmstart": "warm-started walks: initial vs time-averaged <H_p> and outcome distribution",
    "rqa": "reverse annealing shot loop (optional dense p_suc series)",
    "bqa": "biased annealing shot loop",
    "gibbs_sweep": "fixed-beta Gibbs <H_p> against gamma",
    "properties": "pass/fail table of the exact invariant suites",
}


def _error(code: int, exc: BaseException, out: Path | None) -> int:
    report = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(report), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(report, indent=2) + "\n")
        except OSError:
            pass
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctqo", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ctqo {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a campaign from a YAML config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="campaign seed (overrides the config)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--dense", dest="dense", action="store_true", default=None,
                      help="ensemble-exact p_suc series for shot loops")
    mode.add_argument("--sampled", dest="dense", action="store_false",
                      help="sampled shots only")
    v = sub.add_parser("verify", help="check a finished run against its CSV files")
    v.add_argument("manifest")
    sub.add_parser("list-experiments", help="list experiment kinds")
    sub.add_parser("print-schema", help="print the config JSON schema")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-experiments":
        for k, v in EXPERIMENT_FAMILIES.items():
            print(f"{k:12s} {v}")
        return EXIT_OK
    if args.command == "print-schema":
        print(json.dumps(CampaignConfig.model_json_schema(), indent=2))
        return EXIT_OK
    if args.command == "verify":
        try:
            ok, problems = verify(Path(args.manifest))
        except (OSError, ValueError, KeyError) as exc:
            return _error(EXIT_OTHER, exc, None)
        for p in problems:
            print(p)
        print("verify: " + ("ok" if ok else f"FAILED ({len(problems)} problems)"))
        return EXIT_OK if ok else EXIT_OTHER
    out = None
    try:
        cfg = load_config(args.config)
        upd = {}
        if args.seed is not None:
            upd["problem"] = cfg.problem.model_copy(update={"seed": args.seed})
        if args.dense is not None:
            upd["shots"] = cfg.shots.model_copy(update={"dense": args.dense})
        if args.out:
            upd["output"] = args.out
        if upd:
            cfg = CampaignConfig.model_validate({**cfg.model_dump(), **{
                k: (v.model_dump() if isinstance(v, BaseModel) else v) for k, v in upd.items()}})
        out = Path(cfg.output)
        # schedules are built once up front so bad values fail as config errors
        for s in cfg.schedules:
            s.build()
        for p in cfg.pstqa.paths:
            for s in p:
                s.build()
        run_campaign(cfg, out, max(1, args.jobs))
    except (ConfigError, ValidationError) as exc:
        return _error(EXIT_CONFIG, exc, out)
    except SizeCapError as exc:
        return _error(EXIT_SIZE, exc, out)
    except (PstqaBreakdown, IntegrationError, SpectrumError, BetaRangeError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        return _error(EXIT_NUMERICAL, exc, out)
    except ValueError as exc:
        if out is None:
            return _error(EXIT_CONFIG, exc, out)
        return _error(EXIT_OTHER, exc, out)
    except Exception as exc:  # noqa: BLE001 - structured report for anything else
        return _error(EXIT_OTHER, exc, out)
    print(f"wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
