"""Monte-Carlo experiment driver and CSV output.

Every trial draws its own generator ``default_rng([seed, trial])`` and
consumes it in a fixed order: RIS profiles, path gains, multipath (if any),
noise. The same trial index therefore sees the same profiles and gains at
every sweep point.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import IdentifiabilityError, compute_bounds
from .channel import RicianParams, SignalModel, make_schedule, synthesize, synthesize_multipath
from .config import ConfigError, ScenarioConfig
from .detection import H1, calibrate_threshold, detect_and_estimate
from .estimation import build_searches, estimate_los, estimate_nlos_lc, estimate_nlos_ml
from .geometry import GeometryError
from .localization import position_from_estimate, refine_position

EXPERIMENTS = ("los_power", "nlos_power_ml", "nlos_power_lc", "detect_power", "kappa",
               "cfo_sensitivity")


@dataclass
class TrialResult:
    position: np.ndarray
    position_coarse: np.ndarray
    nu_hat: float
    angles: np.ndarray
    peb: float
    crb_cfo: float
    crb_aod: np.ndarray
    decision: str | None = None


@dataclass
class SweepPoint:
    sweep_var: str
    value: float
    rmse_pos_m: float
    crb_pos_m: float
    rmse_cfo_hz: float
    crb_cfo_hz: float
    rmse_aod_deg: np.ndarray
    crb_aod_deg: np.ndarray
    pfa: float = float("nan")
    pd: float = float("nan")
    trials: int = 0
    seed: int = 0
    rmse_pos_coarse_m: float = float("nan")
    wall_s: float = 0.0


@dataclass
class SweepResult:
    experiment: str
    n_ris: int
    points: list = field(default_factory=list)
    threshold: float | None = None


def _wrap(angle):
    return (np.asarray(angle) + np.pi) % (2 * np.pi) - np.pi


def _rms(values, axis=0):
    values = np.asarray(values, dtype=float)
    return np.sqrt(np.mean(values ** 2, axis=axis))


def _estimate(kind, y, model, grid, searches, cfo, lc_joint_refine):
    if kind == "los":
        return estimate_los(y, model, grid, searches, cfo)
    if kind == "ml":
        return estimate_nlos_ml(y, model, grid, searches, cfo)
    return estimate_nlos_lc(y, model, grid, searches, cfo, joint_refine=lc_joint_refine)


def _locate(est, y, model, los, refine):
    try:
        coarse = position_from_estimate(est, model.scenario).position
    except GeometryError:
        return np.full(3, np.nan), np.full(3, np.nan), est.nu
    if not refine:
        return coarse, coarse, est.nu
    fine = refine_position(y, model, coarse, est.nu, los)
    return fine.position, coarse, fine.nu


def run_trial(config: ScenarioConfig, scenario, trial: int, nu: float, los_present: bool,
              estimator: str, rician: RicianParams | None = None, cfo_known: float | None = None,
              threshold: float | None = None, variant: str = "ml") -> TrialResult:
    """One Monte-Carlo draw: synthesise, estimate, localise, bound.

    With ``threshold`` set the detector picks the hypothesis and ``estimator``
    is ignored; ``variant`` selects its NLoS estimator.
    """
    run, grid = config.run, config.grid
    rng = np.random.default_rng([run.seed, trial])
    schedule = make_schedule(scenario, rng, run.base_kind)
    if run.fixed_profiles and trial:
        # the trial's own draw is still consumed so gains and noise match unfixed runs
        schedule = make_schedule(scenario, np.random.default_rng([run.seed, 0]), run.base_kind)
    model = SignalModel(scenario, schedule)
    if rician is None:
        obs = synthesize(scenario, schedule, nu, los_present, rng, model=model)
    else:
        obs = synthesize_multipath(scenario, schedule, nu, rician, rng, los_present, model=model)
    searches = build_searches(model, grid)
    decision = None
    if threshold is not None:
        det = detect_and_estimate(obs.y, model, grid, threshold, variant, searches,
                                  joint_refine=run.lc_joint_refine)
        est, decision = det.estimate, det.decision
    else:
        est = _estimate(estimator, obs.y, model, grid, searches, cfo_known, run.lc_joint_refine)
    los_model = est.hypothesis == "los"
    pos, coarse, nu_hat = _locate(est, obs.y, model, los_model, run.refine_position)
    try:
        b = compute_bounds(model, nu, obs.gains, los_present)
        peb, crb_cfo, crb_aod = b.peb, b.cfo, b.aod
    except IdentifiabilityError:
        peb = crb_cfo = float("nan")
        crb_aod = np.full((scenario.n_ris, 2), np.nan)
    return TrialResult(position=pos, position_coarse=coarse, nu_hat=nu_hat, angles=est.angles,
                       peb=peb, crb_cfo=crb_cfo, crb_aod=crb_aod, decision=decision)


def _aggregate(sweep_var, value, results, scenario, nu, seed, wall, pfa=float("nan"),
               pd=float("nan")) -> SweepPoint:
    truth = np.asarray(scenario.ue)
    aods = scenario.aods()
    pos_err = np.array([np.linalg.norm(r.position - truth) for r in results])
    coarse_err = np.array([np.linalg.norm(r.position_coarse - truth) for r in results])
    cfo_err = np.array([r.nu_hat - nu for r in results])
    aod_err = np.array([_wrap(r.angles - aods) for r in results])
    return SweepPoint(
        sweep_var=sweep_var, value=float(value),
        rmse_pos_m=float(_rms(pos_err)), crb_pos_m=float(_rms([r.peb for r in results])),
        rmse_cfo_hz=float(_rms(cfo_err)), crb_cfo_hz=float(_rms([r.crb_cfo for r in results])),
        rmse_aod_deg=np.rad2deg(_rms(aod_err)),
        crb_aod_deg=np.rad2deg(_rms(np.array([r.crb_aod for r in results]))),
        pfa=pfa, pd=pd, trials=len(results), seed=seed,
        rmse_pos_coarse_m=float(_rms(coarse_err)), wall_s=wall)


def _point(config, scenario, sweep_var, value, nu, los_present, estimator, **kwargs):
    start = time.perf_counter()
    results = [run_trial(config, scenario, t, nu, los_present, estimator, **kwargs)
               for t in range(config.run.trials)]
    point = _aggregate(sweep_var, value, results, scenario, nu, config.run.seed,
                       time.perf_counter() - start)
    if point.trials != config.run.trials:
        raise RuntimeError("trial count mismatch")
    return point, results


def validate(config: ScenarioConfig, experiment: str):
    """Reject impossible requests before any trial runs."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if experiment in ("nlos_power_ml", "nlos_power_lc", "detect_power") and config.scenario.n_ris < 2:
        raise ConfigError("NLoS localisation needs at least two RISs")
    nus = [config.run.cfo_hz, *config.sweep.cfos_hz]
    limit = 1.0 / (2 * config.scenario.ts)
    if any(abs(v) >= limit for v in nus):
        raise ConfigError(f"CFO values must lie within +-{limit:g} Hz")
    config.grid.cfo_grid(config.scenario.ts)
    config.grid.cfo_grid(config.scenario.ts, ml=True)


def run_sweep(config: ScenarioConfig, experiment: str, threshold: float | None = None) -> SweepResult:
    """Run one of `EXPERIMENTS`.

    ``threshold`` overrides the detector threshold for ``detect_power``.
    """
    validate(config, experiment)
    run, sweep, det = config.run, config.sweep, config.detector
    base = config.scenario
    result = SweepResult(experiment=experiment, n_ris=base.n_ris)
    nu = run.cfo_hz

    if experiment in ("los_power", "nlos_power_ml", "nlos_power_lc"):
        estimator = {"los_power": "los", "nlos_power_ml": "ml", "nlos_power_lc": "lc"}[experiment]
        for p in run.powers_dbm:
            point, _ = _point(config, base.with_power(p), "power_dbm", p, nu,
                              estimator == "los", estimator)
            result.points.append(point)

    elif experiment == "kappa":
        scenario = base.with_power(sweep.kappa_power_dbm)
        los = run.estimator == "los"
        for k in sweep.kappas:
            point, _ = _point(config, scenario, "kappa", k, nu, los, run.estimator,
                              rician=RicianParams.uniform(k, base.n_ris))
            result.points.append(point)

    elif experiment == "cfo_sensitivity":
        scenario = base.with_power(sweep.cfo_power_dbm)
        los = run.estimator == "los"
        for v in sweep.cfos_hz:
            point, _ = _point(config, scenario, "cfo_hz", v, v, los, run.estimator)
            result.points.append(point)
        for v in sweep.cfos_hz:
            point, _ = _point(config, scenario, "cfo_hz_nocfo", v, v, los, run.estimator,
                              cfo_known=0.0)
            result.points.append(point)

    else:
        if threshold is None:
            threshold = det.threshold
        if threshold is None:
            cal = calibrate_threshold(base.with_power(det.calibration_power_dbm), config.grid,
                                      det.calibration_trials, det.target_pd, run.seed, nu,
                                      det.variant, det.max_log_psi, run.base_kind,
                                      run.lc_joint_refine)
            threshold = cal.threshold
        result.threshold = threshold
        for p in run.powers_dbm:
            scenario = base.with_power(p)
            point, trials = _point(config, scenario, "power_dbm_nlos", p, nu, False, "ml",
                                   threshold=threshold, variant=det.variant)
            point.pfa = float(np.mean([t.decision == H1 for t in trials]))
            result.points.append(point)
            if det.measure_pd:
                point, trials = _point(config, scenario, "power_dbm_los", p, nu, True, "los",
                                       threshold=threshold, variant=det.variant)
                point.pd = float(np.mean([t.decision == H1 for t in trials]))
                result.points.append(point)
    return result


def csv_header(n_ris: int) -> list[str]:
    cols = ["sweep_var", "value", "rmse_pos_m", "crb_pos_m", "rmse_cfo_hz", "crb_cfo_hz"]
    cols += [f"rmse_aod{r + 1}_{c}_deg" for r in range(n_ris) for c in ("az", "el")]
    cols += [f"crb_aod{r + 1}_{c}_deg" for r in range(n_ris) for c in ("az", "el")]
    return cols + ["pfa", "pd", "trials", "seed"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".12g")


def csv_rows(result: SweepResult) -> list[list[str]]:
    rows = []
    for p in result.points:
        row = [p.sweep_var] + [_fmt(v) for v in (p.value, p.rmse_pos_m, p.crb_pos_m,
                                                  p.rmse_cfo_hz, p.crb_cfo_hz)]
        row += [_fmt(v) for v in np.ravel(p.rmse_aod_deg)]
        row += [_fmt(v) for v in np.ravel(p.crb_aod_deg)]
        row += [_fmt(p.pfa), _fmt(p.pd), _fmt(int(p.trials)), _fmt(int(p.seed))]
        rows.append(row)
    return rows


def format_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(result.n_ris))
    writer.writerows(csv_rows(result))
    return buf.getvalue()


def emit_csv(result: SweepResult, path) -> None:
    """Write one row per sweep point; ``path`` may also be an open text stream."""
    text = format_csv(result)
    if hasattr(path, "write"):
        path.write(text)
        return
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(text)


def read_csv(path) -> list[dict]:
    """Parse a file written by `emit_csv`; numeric fields come back as floats."""
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (v if k == "sweep_var" else float(v)) for k, v in row.items()} for row in rows]
