import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frugal_ris.channel import SignalModel, make_schedule, synthesize
from frugal_ris.config import GridSpec
from frugal_ris.estimation import (AodSearch, _ml_cfo_scan, build_searches, compressed_residual,
                                   conditional_gains, estimate_cfo_los, estimate_cfo_unstructured,
                                   estimate_los, estimate_nlos_lc, estimate_nlos_ml, refine_local,
                                   unstructured_cfo_objective)
from frugal_ris.ris_coding import RisSchedule, decode_all, reshape_observations

from conftest import draw

NU = -40e3 + 123.4  # deliberately off the CFO grid


def observe(scenario, los, seed=0, nu=NU):
    model, gains, rng = draw(scenario, seed)
    obs = synthesize(scenario, model.schedule, nu, los, rng, gains, model)
    return model, obs


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_refine_local_quadratic_bowl(start):
    target = np.array([0.5, -1.0, 2.0])
    H = np.diag([1.0, 4.0, 0.5])

    def f(x):
        d = x - target
        return d @ H @ d

    x = refine_local(f, start, tol=1e-10)
    np.testing.assert_allclose(x, target, atol=1e-5)


def test_refine_local_never_worse_and_checks_start():
    def f(x):
        return float(np.sin(5 * x[0]) + x[0] ** 2)

    for x0 in np.linspace(-3, 3, 13):
        assert f(refine_local(f, [x0])) <= f([x0])
    with pytest.raises(ValueError):
        refine_local(lambda x: np.nan, [0.0])


def test_refine_local_stays_at_truth(quiet_scenario):
    model, obs = observe(quiet_scenario, False)
    x0 = np.array([NU])

    def f(x):
        return compressed_residual(obs.y, model, x[0], obs.aods, False) / np.vdot(obs.y, obs.y).real

    assert abs(refine_local(f, x0, 10.0)[0] - NU) < 1e-6


def test_cfo_refinement_beats_grid():
    ts, n = 1e-5, 256
    nu = 1234.5
    y = 0.7j * np.exp(2j * np.pi * ts * nu * np.arange(n))
    grid = GridSpec()
    nu_hat, coarse = estimate_cfo_los(y, ts, grid)
    # dense-grid oracle around the coarse point
    dense = np.arange(coarse - 200, coarse + 200, 0.01)
    values = np.abs(np.exp(-2j * np.pi * ts * np.outer(dense, np.arange(n))) @ y)
    oracle = dense[np.argmax(values)]
    assert abs(coarse - nu) > 10
    assert abs(nu_hat - oracle) < 1.0
    assert abs(nu_hat - nu) < 1e-3


@settings(max_examples=15, deadline=None)
@given(st.floats(-20e3, 20e3), st.floats(-5e3, 5e3))
def test_cfo_shift_equivariance(nu, delta):
    ts, m = 1e-5, np.arange(256)
    grid = GridSpec()
    a = estimate_cfo_los(np.exp(2j * np.pi * ts * nu * m), ts, grid)[0]
    b = estimate_cfo_los(np.exp(2j * np.pi * ts * (nu + delta) * m), ts, grid)[0]
    assert b - a == pytest.approx(delta, abs=1e-3)


@pytest.mark.parametrize("los", [True, False])
def test_noise_free_recovery(quiet_scenario, grid, los):
    model, obs = observe(quiet_scenario, los)
    searches = build_searches(model, grid)
    estimators = [estimate_los] if los else [estimate_nlos_ml, estimate_nlos_lc]
    for estimator in estimators:
        est = estimator(obs.y, model, grid, searches)
        assert est.hypothesis == ("los" if los else "nlos")
        assert abs(est.nu - NU) < 1e-3
        np.testing.assert_allclose(est.angles, obs.aods, atol=1e-7)
        np.testing.assert_allclose(est.gains, obs.gains.ris, rtol=1e-5)
        if los:
            assert est.los_gain == pytest.approx(obs.gains.los, rel=1e-5)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_monotone_improvement_and_ml_optimality(scenario, grid, seed):
    model, obs = observe(scenario.with_power(15.0), False, seed)
    searches = build_searches(model, grid)
    for estimator in (estimate_nlos_ml, estimate_nlos_lc):
        est = estimator(obs.y, model, grid, searches)
        assert est.residual <= est.coarse_residual
    ml = estimate_nlos_ml(obs.y, model, grid, searches)
    truth = compressed_residual(obs.y, model, NU, obs.aods, False)
    assert ml.residual <= truth * (1 + 1e-9)
    los_model, los_obs = observe(scenario, True, seed)
    est = estimate_los(los_obs.y, los_model, grid)
    assert est.residual <= est.coarse_residual


def test_gain_residual_orthogonality(scenario):
    model, obs = observe(scenario, True)
    A = model.design(NU + 3.0, obs.aods + 1e-3, True)
    alpha = conditional_gains(obs.y, model, NU + 3.0, obs.aods + 1e-3, True)
    r = obs.y - A @ alpha
    assert np.linalg.norm(A.conj().T @ r) <= 1e-9 * np.linalg.norm(A) * np.linalg.norm(obs.y)


def test_rank_deficient_gains(scenario):
    model, obs = observe(scenario, False)
    base = model.schedule.base.copy()
    base[1] = 0.0  # switched-off panel: its response column vanishes
    dead = SignalModel(scenario, RisSchedule(model.schedule.codes, base))
    with pytest.raises(np.linalg.LinAlgError):
        conditional_gains(obs.y, dead, NU, obs.aods, False)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100), st.floats(-np.pi, np.pi))
def test_aod_argmax_scale_invariant(table1_draw, grid, mag, phase):
    model, _, _ = table1_draw
    search = AodSearch(model, 0, 64)
    y = model.xbar(0, model.scenario.aods()[0]) + 0.3 * np.exp(np.arange(64) * 1j)
    assert search.coarse(mag * np.exp(1j * phase) * y) == search.coarse(y)


def test_folded_grid_matches_direct_evaluation(table1_draw):
    model, _, _ = table1_draw
    search = AodSearch(model, 1, 40)  # fewer points than panel rows: aliasing fold
    for idx in (0, 17, len(search.u) - 1):
        direct = model.xbar_cosines(1, search.u[idx], search.v[idx])
        ratio = search.table[idx] / direct
        np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)


def test_unstructured_model_identity(table1_draw):
    model, _, _ = table1_draw
    C = model.schedule.codes
    for nu in np.random.default_rng(0).uniform(-5e4, 5e4, 5):
        D = np.diag(np.exp(2j * np.pi * model.ts * nu * np.arange(C.shape[1])))
        E = D @ C.T
        np.testing.assert_allclose(E.conj().T @ E, C.shape[1] * np.eye(len(C)), atol=1e-12)


def test_lc_grid_argmax_exhaustive(quiet_scenario):
    grid = GridSpec(cfo_points=256, refine=False)
    nus = grid.cfo_grid(quiet_scenario.ts)
    model, obs = observe(quiet_scenario, False, nu=nus[25])
    Y = reshape_observations(obs.y, 4)
    C = model.schedule.codes[1:]
    brute = []
    for nu in nus:
        Dh = np.diag(np.exp(-2j * np.pi * model.ts * nu * np.arange(4)))
        brute.append(np.linalg.norm(C @ Dh @ Y) ** 2)
    np.testing.assert_allclose(unstructured_cfo_objective(obs.y, model.schedule, nus, model.ts),
                               brute, rtol=1e-10, atol=1e-12 * max(brute))
    nu_hat, _ = estimate_cfo_unstructured(obs.y, model.schedule, model.ts, grid)
    assert nu_hat == nus[int(np.argmax(brute))]
    assert nu_hat == nus[25]


def test_ml_scan_reduces_to_per_ris_search(quiet_scenario, grid):
    model, obs = observe(quiet_scenario, False)
    searches = build_searches(model, grid)
    _, best = _ml_cfo_scan(obs.y, model, searches, np.array([NU]))
    decoded = decode_all(obs.y * model.cfo(-NU), model.schedule)
    assert [s.coarse(decoded[r + 1]) for r, s in enumerate(searches)] == list(best[0])


def test_known_cfo_is_respected(scenario, grid):
    model, obs = observe(scenario, True)
    est = estimate_los(obs.y, model, grid, cfo=NU)
    assert est.nu == NU
    model, obs = observe(scenario, False)
    assert estimate_nlos_ml(obs.y, model, grid, cfo=0.0).nu == 0.0
    assert estimate_nlos_lc(obs.y, model, grid, cfo=0.0).nu == 0.0


def test_zero_observation_is_degenerate(scenario, grid):
    model, _ = observe(scenario, True)
    for estimator in (estimate_los, estimate_nlos_ml, estimate_nlos_lc):
        est = estimator(np.zeros(256, complex), model, grid)
        assert est.degenerate
        assert est.residual == 0.0
