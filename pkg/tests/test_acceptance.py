"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line with the measured
numbers, then asserts. Monte-Carlo criteria run the real sweep harness at
the default grids.
"""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from frugal_ris.bounds import (IdentifiabilityError, compute_bounds, fim_channel, fim_position,
                               jacobian_channel_to_position)
from frugal_ris.channel import PathGains, SignalModel, fspl_gains, make_schedule, synthesize
from frugal_ris.config import ConfigError, GridSpec, Scenario, ScenarioConfig
from frugal_ris.detection import calibrate_threshold, glrt_statistics
from frugal_ris.harness import run_sweep
from frugal_ris.ris_coding import decode_all

from test_bounds import numeric_derivatives

pytestmark = pytest.mark.slow
ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


def test_1_decoding_exactness(report):
    start = time.perf_counter()
    sc = Scenario(n0_dbm_hz=float("-inf"))
    rng = np.random.default_rng([0, 0])
    model = SignalModel(sc, make_schedule(sc, rng))
    gains = fspl_gains(sc, rng)
    y = model.noise_free(0.0, sc.aods(), gains, True)
    rows = decode_all(y, model.schedule)
    sqrt_p = np.sqrt(model.power)
    expected = [np.full(rows.shape[1], sqrt_p * gains.los)]
    expected += [sqrt_p * gains.ris[r] * model.xbar(r, sc.aods()[r]) for r in range(sc.n_ris)]
    err = max(np.max(np.abs(rows[i] - e)) / np.max(np.abs(e)) for i, e in enumerate(expected))
    wall = time.perf_counter() - start
    ok = err <= 1e-12 and wall < 1.0
    assert report(1, ok, f"max rel err {err:.2e}, {wall:.2f} s"), err


def _position_fd_fim(model, nu, gains, los, ue):
    """FIM from central differences of the signal over (gains, nu, position)."""
    sc = model.scenario
    alpha = gains.vector(los)
    k = len(alpha)

    def z(eta):
        a = eta[:2 * k:2] + 1j * eta[1:2 * k:2]
        g = PathGains(ris=a[int(los):], los=a[0] if los else None)
        return model.noise_free(eta[2 * k], sc.aods(eta[2 * k + 1:]), g, los)

    eta = np.concatenate([np.column_stack([alpha.real, alpha.imag]).ravel(), [nu], ue])
    steps = np.concatenate([np.abs(alpha).repeat(2) * 1e-6, [1e-3], np.full(3, 1e-6)])
    cols = []
    for i, h in enumerate(steps):
        e = np.zeros_like(eta)
        e[i] = h
        cols.append((z(eta + e) - z(eta - e)) / (2 * h))
    D = np.stack(cols, axis=1)
    return 2 / model.noise_power * np.real(D.conj().T @ D)


def test_2_fim_correctness(report):
    start = time.perf_counter()
    gen = np.random.default_rng(2024)
    worst_ch = worst_pos = worst_sandwich = 0.0
    for i in range(10):
        ue = (gen.uniform(-4, 14), gen.uniform(-6, 6), gen.uniform(-2, 2))
        sc = Scenario(ue=ue, power_dbm=gen.uniform(10, 40))
        rng = np.random.default_rng([i, 0])
        model = SignalModel(sc, make_schedule(sc, rng))
        gains = fspl_gains(sc, rng)
        nu = gen.uniform(-45e3, 45e3)
        for los in (True, False):
            F = fim_channel(model, nu, sc.aods(), gains, los)
            D = numeric_derivatives(model, nu, sc.aods(), gains, los)
            F_fd = 2 / model.noise_power * np.real(D.conj().T @ D)
            worst_ch = max(worst_ch, np.linalg.norm(F - F_fd) / np.linalg.norm(F_fd))
            J = jacobian_channel_to_position(sc, los)
            Fp = fim_position(F, J)
            explicit = J @ F @ J.T
            worst_sandwich = max(worst_sandwich,
                                 np.linalg.norm(Fp - explicit) / np.linalg.norm(explicit))
            Fp_fd = _position_fd_fim(model, nu, gains, los, np.array(ue))
            worst_pos = max(worst_pos, np.linalg.norm(Fp - Fp_fd) / np.linalg.norm(Fp_fd))
    wall = time.perf_counter() - start
    ok = worst_ch <= 1e-4 and worst_pos <= 1e-4 and worst_sandwich <= 1e-14 and wall < 30
    detail = (f"channel FIM rel err {worst_ch:.1e}, position FIM rel err {worst_pos:.1e}, "
              f"sandwich {worst_sandwich:.1e}, {wall:.1f} s")
    assert report(2, ok, detail)


def _table1(trials, powers, **run):
    return ScenarioConfig().replace(run={"trials": trials, "powers_dbm": powers, **run})


def test_3_los_bound_attainment(report):
    start = time.perf_counter()
    res = run_sweep(_table1(50, (20.0, 30.0, 40.0)), "los_power")
    ok = True
    parts = []
    for p in res.points:
        cfo = p.rmse_cfo_hz / p.crb_cfo_hz
        pos = p.rmse_pos_m / p.crb_pos_m
        aod = np.max(p.rmse_aod_deg / p.crb_aod_deg)
        ok &= cfo <= 3
        if p.value >= 30:
            ok &= pos <= 3 and aod <= 3
        if p.value == 40:
            ok &= p.rmse_pos_m < 0.01
        parts.append(f"{p.value:g} dBm cfo {cfo:.2f}x pos {pos:.2f}x aod {aod:.2f}x "
                     f"({p.rmse_pos_m * 100:.2f} cm)")
    wall = time.perf_counter() - start
    ok &= wall <= 600
    assert report(3, ok, "; ".join(parts) + f"; {wall:.0f} s")


def test_4_nlos_estimator_ordering(report):
    start = time.perf_counter()
    config = _table1(50, (10.0, 20.0, 40.0))
    ml = {p.value: p for p in run_sweep(config, "nlos_power_ml").points}
    lc = {p.value: p for p in run_sweep(config, "nlos_power_lc").points}
    ratio = {p: (ml[p].rmse_pos_m / ml[p].crb_pos_m, lc[p].rmse_pos_m / lc[p].crb_pos_m,
                 lc[p].rmse_pos_m / ml[p].rmse_pos_m) for p in ml}
    mid = [p for p in (10.0, 20.0) if ratio[p][0] <= 3 and ratio[p][2] >= 1.5]
    high = ratio[40.0][0] <= 3 and ratio[40.0][1] <= 3
    wall = time.perf_counter() - start
    ok = bool(mid) and high and wall <= 1800
    parts = [f"{p:g} dBm ML {r[0]:.2f}x LC {r[1]:.2f}x LC/ML {r[2]:.2f}" for p, r in ratio.items()]
    assert report(4, ok, "; ".join(parts) + f"; {wall:.0f} s")


def test_5_detector(report):
    start = time.perf_counter()
    config = ScenarioConfig()
    grid, base = config.grid, config.scenario
    cal = calibrate_threshold(base.with_power(30.0), grid, 200, 1.0, seed=0)
    trials = 100
    pfa = {}
    for p in (10.0, 20.0, 30.0, 40.0):
        sc = base.with_power(p)
        stats = {"ml": [], "lc": []}
        for t in range(trials):
            rng = np.random.default_rng([1, t])
            schedule = make_schedule(sc, rng)
            model = SignalModel(sc, schedule)
            obs = synthesize(sc, schedule, -40e3, False, rng, model=model)
            for k, v in glrt_statistics(obs.y, model, grid).items():
                stats[k].append(v)
        pfa[p] = {k: np.array(v) for k, v in stats.items()}

    def rates(threshold):
        return {p: {k: float(np.mean(s > threshold)) for k, s in d.items()} for p, d in pfa.items()}

    nominal = rates(cal.threshold)
    ml_ok = all(r["ml"] <= 0.02 for r in nominal.values())
    lc_worse = any(r["lc"] > r["ml"] for r in nominal.values())
    wall = time.perf_counter() - start
    ok = cal.reachable and cal.detection_rate == 1.0 and ml_ok and lc_worse and wall <= 1200
    parts = [f"{p:g} dBm ML {r['ml']:.2f} LC {r['lc']:.2f}" for p, r in nominal.items()]
    # how much the ordering depends on the threshold choice (informational)
    for scale in (0.5, 1.5):
        r = rates(cal.threshold * scale)
        parts.append(f"x{scale}: ML max {max(v['ml'] for v in r.values()):.2f} "
                     f"LC max {max(v['lc'] for v in r.values()):.2f}")
    detail = f"threshold {cal.threshold:.3e} (Pd {cal.detection_rate:.2f}); " + "; ".join(parts)
    assert report(5, ok, detail + f"; {wall:.0f} s")


def test_6_multipath(report):
    start = time.perf_counter()
    config = ScenarioConfig().replace(run={"trials": 50}, sweep={"kappas": (10.0, 100.0),
                                                                 "kappa_power_dbm": 35.0})
    pts = {p.value: p for p in run_sweep(config, "kappa").points}
    wall = time.perf_counter() - start
    k100 = pts[100.0].rmse_pos_m / pts[100.0].crb_pos_m
    ok = pts[10.0].rmse_pos_m < 0.1 and k100 <= 3 and wall <= 600
    detail = (f"kappa 10 RMSE {pts[10.0].rmse_pos_m:.4f} m; kappa 100 {k100:.2f}x CRB; "
              f"{wall:.0f} s")
    assert report(6, ok, detail)


def test_7_cfo_sensitivity(report):
    start = time.perf_counter()
    config = ScenarioConfig().replace(run={"trials": 30}, sweep={
        "cfos_hz": (0.0, 50.0, 100.0, 200.0, -40e3), "cfo_power_dbm": 35.0})
    res = run_sweep(config, "cfo_sensitivity")
    est = {p.value: p.rmse_pos_m / p.crb_pos_m for p in res.points if p.sweep_var == "cfo_hz"}
    off = {p.value: p.rmse_pos_m / p.crb_pos_m for p in res.points if p.sweep_var == "cfo_hz_nocfo"}
    wall = time.perf_counter() - start
    ok = off[200.0] > 10 and all(r <= 3 for r in est.values()) and wall <= 600
    parts = [f"{v:g} Hz {r:.2f}x" for v, r in est.items()]
    detail = f"no CFO estimation at 200 Hz {off[200.0]:.0f}x CRB; estimated: " + ", ".join(parts)
    assert report(7, ok, detail + f"; {wall:.0f} s")


def test_8_property_suites(report):
    start = time.perf_counter()
    node_ids = [
        "tests/test_geometry.py::test_steering_unit_modulus",
        "tests/test_ris_coding.py::test_codes_orthogonal",
        "tests/test_estimation.py::test_gain_residual_orthogonality",
        "tests/test_localization.py::test_rigid_motion_equivariance",
        "tests/test_detection.py::test_nested_statistic_nonnegative",
        "tests/test_harness.py::test_byte_identical_reruns",
    ]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *node_ids], cwd=ROOT, capture_output=True, text=True)
    wall = time.perf_counter() - start
    ok = proc.returncode == 0 and wall < 120
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    assert report(8, ok, f"{summary}; {wall:.0f} s"), proc.stdout


def test_9_identifiability_guard(report):
    start = time.perf_counter()
    sc = Scenario(ris_positions=((10.0, -10.0, 0.0),), ris_rot_z_deg=(0.0,))
    rng = np.random.default_rng([0, 0])
    model = SignalModel(sc, make_schedule(sc, rng))
    gains = fspl_gains(sc, rng)
    with pytest.raises(IdentifiabilityError) as info:
        compute_bounds(model, -40e3, gains, False)
    # the direct path adds no range information, so LoS alone does not rescue R = 1
    with pytest.raises(IdentifiabilityError):
        compute_bounds(model, -40e3, gains, True)
    with pytest.raises(ConfigError):
        run_sweep(ScenarioConfig(scenario=sc), "nlos_power_ml")
    wall = time.perf_counter() - start
    assert report(9, wall < 1.0, f"R=1 NLoS raises {type(info.value).__name__}: {info.value}; "
                                 f"LoS with R=1 also singular; {wall:.2f} s")
