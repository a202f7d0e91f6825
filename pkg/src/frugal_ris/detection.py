"""GLRT test for the direct path and the joint detection/estimation driver.

The log-domain statistic compares the best NLoS fit with the best LoS fit,

    L = (||y - y_nlos||^2 - ||y - y_los - y_nlos||^2) / 2,

and declares the direct path present when ``L > psi'`` with
``psi' = sigma^2 log(psi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import SignalModel, make_schedule, synthesize
from .estimation import (ChannelEstimate, _residual, build_searches, estimate_los,
                         estimate_nlos_lc, estimate_nlos_ml)

H0, H1 = "nlos", "los"


@dataclass
class DetectionResult:
    statistic: float
    threshold: float
    decision: str
    estimate_nlos: ChannelEstimate
    estimate_los: ChannelEstimate

    @property
    def estimate(self) -> ChannelEstimate:
        """The estimate matching the decision."""
        return self.estimate_los if self.decision == H1 else self.estimate_nlos


def glrt_statistic(y, est_nlos: ChannelEstimate, est_los: ChannelEstimate) -> float:
    """Half the residual drop from the NLoS fit to the LoS fit."""
    return 0.5 * (est_nlos.residual - est_los.residual)


def decide(statistic: float, threshold: float) -> str:
    return H1 if statistic > threshold else H0


def nested_los_fit(y, model: SignalModel, est_nlos: ChannelEstimate) -> ChannelEstimate:
    """Refit the NLoS estimate with a free direct-path gain at the same CFO."""
    A = model.design(est_nlos.nu, est_nlos.angles, True)
    alpha = np.linalg.lstsq(A, y, rcond=None)[0]
    return ChannelEstimate(nu=est_nlos.nu, angles=est_nlos.angles, gains=alpha[1:],
                           hypothesis="los", residual=_residual(A, y),
                           coarse_residual=est_nlos.coarse_residual,
                           los_gain=complex(alpha[0]), cosines=est_nlos.cosines,
                           degenerate=est_nlos.degenerate)


def detect_and_estimate(y, model: SignalModel, grid, threshold: float, variant: str = "ml",
                        searches=None, joint_refine: bool = True,
                        nested: bool = False) -> DetectionResult:
    """Run both hypotheses, threshold the GLRT and keep the matching estimate.

    With ``nested`` the LoS candidate is the better of the LoS estimator and
    the NLoS estimate extended by a direct-path column. The LoS fit then
    nests the NLoS fit and the statistic cannot go negative; without it the
    statistic compares the two estimators as they are.
    """
    y = np.asarray(y)
    searches = build_searches(model, grid) if searches is None else searches
    if variant == "ml":
        est_nlos = estimate_nlos_ml(y, model, grid, searches)
    elif variant == "lc":
        est_nlos = estimate_nlos_lc(y, model, grid, searches, joint_refine=joint_refine)
    else:
        raise ValueError(f"unknown NLoS estimator {variant!r}")
    est_los = estimate_los(y, model, grid, searches)
    if nested:
        extended = nested_los_fit(y, model, est_nlos)
        if extended.residual < est_los.residual:
            est_los = extended
    stat = glrt_statistic(y, est_nlos, est_los)
    return DetectionResult(statistic=stat, threshold=threshold, decision=decide(stat, threshold),
                           estimate_nlos=est_nlos, estimate_los=est_los)


@dataclass
class Calibration:
    threshold: float
    detection_rate: float
    reachable: bool
    statistics: np.ndarray = field(repr=False)


def threshold_from_statistics(statistics, noise_power: float, target_pd: float,
                              max_log_psi: float) -> Calibration:
    """Largest ``psi' = sigma^2 log(psi)``, ``0 < log(psi) <= max_log_psi``, meeting ``target_pd``.

    If no positive threshold reaches the target, the result is flagged
    unreachable and ``psi' = 0`` (the most permissive GLRT threshold) is
    returned.
    """
    stats = np.sort(np.asarray(statistics, dtype=float))[::-1]
    n = stats.size
    if n == 0:
        raise ValueError("no statistics to calibrate on")
    need = int(np.ceil(target_pd * n - 1e-9))
    cap = noise_power * max_log_psi
    # decisions are strict (L > psi'), so psi' must sit just below the need-th largest value
    bound = np.nextafter(stats[need - 1], -np.inf) if need > 0 else np.inf
    threshold = min(cap, bound)
    reachable = threshold > 0
    if not reachable:
        threshold = 0.0
    rate = float(np.mean(stats > threshold))
    return Calibration(threshold=float(threshold), detection_rate=rate, reachable=bool(reachable),
                       statistics=stats[::-1].copy())


def calibrate_threshold(scenario, grid, trials: int, target_pd: float, seed: int = 0,
                        nu: float = -40e3, variant: str = "ml", max_log_psi: float = np.log(10.0),
                        base_kind: str = "random", joint_refine: bool = True) -> Calibration:
    """Monte-Carlo threshold under H1 at ``scenario.power_dbm``.

    Every trial draws fresh profiles, gains and noise from
    ``default_rng([seed, trial])``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    stats = np.empty(trials)
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        schedule = make_schedule(scenario, rng, base_kind)
        model = SignalModel(scenario, schedule)
        obs = synthesize(scenario, schedule, nu, True, rng, model=model)
        result = detect_and_estimate(obs.y, model, grid, 0.0, variant, joint_refine=joint_refine)
        stats[t] = result.statistic
    return threshold_from_statistics(stats, scenario.noise_power, target_pd, max_log_psi)


def glrt_statistics(y, model: SignalModel, grid, variants=("ml", "lc"), searches=None,
                    joint_refine: bool = True) -> dict:
    """Statistic for several NLoS estimators on one observation, sharing the LoS fit."""
    y = np.asarray(y)
    searches = build_searches(model, grid) if searches is None else searches
    est_los = estimate_los(y, model, grid, searches)
    out = {}
    for variant in variants:
        if variant == "ml":
            est = estimate_nlos_ml(y, model, grid, searches)
        elif variant == "lc":
            est = estimate_nlos_lc(y, model, grid, searches, joint_refine=joint_refine)
        else:
            raise ValueError(f"unknown NLoS estimator {variant!r}")
        out[variant] = glrt_statistic(y, est, est_los)
    return out
