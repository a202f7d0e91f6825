"""Channel-parameter estimators: CFO, per-RIS angles of departure, path gains.

Three estimators share the primitives here:

* `estimate_los` -- dominant direct path: CFO from the direct path alone,
  then CFO removal, Hadamard decoding and one 2-D AoD search per RIS.
* `estimate_nlos_ml` -- direct path blocked: 1-D CFO grid with per-RIS AoD
  searches inside, choosing the CFO with the smallest full-model residual,
  followed by joint CFO/AoD refinement.
* `estimate_nlos_lc` -- direct path blocked, low complexity: CFO from the
  unstructured block model, then the same decoding and AoD stage as LoS.

The coarse AoD search works on a grid that is uniform in the two in-plane
direction cosines of the panel. For a uniform planar array that grid is a
zero-padded 2-D FFT of the uncoded RIS weights, so the whole search costs one
matrix-vector product per RIS.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .channel import PathGains, SignalModel
from .ris_coding import decode_all, reshape_observations


@dataclass
class ChannelEstimate:
    nu: float
    angles: np.ndarray
    gains: np.ndarray
    hypothesis: str
    residual: float
    coarse_residual: float = float("nan")
    los_gain: complex | None = None
    cosines: np.ndarray | None = None
    degenerate: bool = False

    def __post_init__(self):
        if (self.los_gain is not None) != (self.hypothesis == "los"):
            raise ValueError("direct-path gain must be present iff hypothesis is 'los'")

    @property
    def path_gains(self) -> PathGains:
        return PathGains(ris=np.asarray(self.gains), los=self.los_gain)


def refine_local(objective, x0, scale=None, tol: float = 1e-10, max_iters: int = 200):
    """Quasi-Newton (BFGS) polish of ``objective`` around ``x0``.

    ``scale`` sets the unit step per coordinate; the objective should be O(1)
    over a unit step. The returned point is never worse than ``x0``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    scale = np.ones_like(x0) if scale is None else np.broadcast_to(np.asarray(scale, float), x0.shape)
    f0 = objective(x0)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")

    def scaled(z):
        value = objective(x0 + scale * z)
        return value if np.isfinite(value) else np.inf

    res = optimize.minimize(scaled, np.zeros_like(x0), method="BFGS", jac="3-point",
                            options={"gtol": tol, "maxiter": max_iters})
    x = x0 + scale * res.x
    return x if objective(x) <= f0 else x0


def conditional_gains(y, model: SignalModel, nu: float, angles, los: bool) -> np.ndarray:
    """Least-squares path gains for fixed CFO and AoDs.

    Raises `numpy.linalg.LinAlgError` if the model columns are rank deficient.
    """
    A = model.design(nu, angles, los)
    return _solve_gains(A, np.asarray(y))


def _solve_gains(A, y) -> np.ndarray:
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise np.linalg.LinAlgError("rank-deficient model: path responses are collinear")
    return np.linalg.lstsq(A, y, rcond=None)[0]


def _residual(A, y) -> float:
    alpha = np.linalg.lstsq(A, y, rcond=None)[0]
    r = y - A @ alpha
    return float(np.vdot(r, r).real)


def compressed_residual(y, model: SignalModel, nu: float, angles, los: bool) -> float:
    """Residual ``||y - A a_hat||^2`` with the gains profiled out."""
    return _residual(model.design(nu, angles, los), np.asarray(y))


def _design_from_xbars(model: SignalModel, nu: float, xbars, los: bool) -> np.ndarray:
    b = model.cfo(nu)
    cols = [b] if los else []
    cols += [model.expand(r, xb) * b for r, xb in enumerate(xbars)]
    return np.sqrt(model.power) * np.stack(cols, axis=1)


class AodSearch:
    """Coarse and refined AoD estimation for one RIS.

    Parameters
    ----------
    model : SignalModel
    r : int
        RIS index.
    points : int
        Grid points per in-plane direction-cosine axis.
    """

    def __init__(self, model: SignalModel, r: int, points: int = 128):
        layout = model.layout
        self.model, self.r, self.points = model, r, points
        self.layout = layout
        weights = model.weights[r].reshape(layout.rows, layout.cols, -1)
        weights = _fold(_fold(weights, points, 0), points, 1)
        spectrum = np.fft.ifft2(weights, s=(points, points), axes=(0, 1)) * points ** 2
        freqs = np.fft.fftfreq(points) * model.wavelength / layout.spacing
        v, u = np.meshgrid(freqs, freqs, indexing="ij")
        valid = u ** 2 + v ** 2 <= 1.0
        self.u, self.v = u[valid], v[valid]
        self.step = model.wavelength / layout.spacing / points
        self.table = np.ascontiguousarray(spectrum[valid])
        self.energy = np.sum(np.abs(self.table) ** 2, axis=1)
        self.energy[self.energy == 0] = np.inf

    def scores(self, ytilde) -> np.ndarray:
        """Normalised matched-filter output on the grid (batched over leading axes)."""
        ytilde = np.asarray(ytilde)
        corr = np.conj(ytilde) @ self.table.T
        return np.abs(corr) ** 2 / self.energy

    def coarse(self, ytilde) -> int:
        return int(np.argmax(self.scores(ytilde)))

    def objective(self, ytilde):
        ytilde = np.asarray(ytilde)
        norm = np.vdot(ytilde, ytilde).real

        def f(x):
            xb = self.model.xbar_cosines(self.r, x[0], x[1])
            return 1.0 - abs(np.vdot(ytilde, xb)) ** 2 / (np.vdot(xb, xb).real * norm)

        return f

    def estimate(self, ytilde, refine: bool = True, tol: float = 1e-10, max_iters: int = 200):
        """Return ``(cosines, angle, gain, degenerate)`` for a decoded signal."""
        ytilde = np.asarray(ytilde)
        degenerate = not np.any(ytilde)
        idx = 0 if degenerate else self.coarse(ytilde)
        x = np.array([self.u[idx], self.v[idx]])
        if refine and not degenerate:
            x = refine_local(self.objective(ytilde), x, self.step, tol, max_iters)
        x = _clip_disk(x)
        angle = np.array(self.layout.angle_from_in_plane(*x))
        xb = self.model.xbar_cosines(self.r, *x)
        gain = np.vdot(xb, ytilde) / (np.sqrt(self.model.power) * np.vdot(xb, xb).real)
        return x, angle, gain, degenerate


def _fold(a, n, axis):
    """Alias-sum an axis down to length ``n`` (no-op when already short enough)."""
    size = a.shape[axis]
    if size <= n:
        return a
    pad = (-size) % n
    widths = [(0, 0)] * a.ndim
    widths[axis] = (0, pad)
    a = np.pad(a, widths)
    shape = a.shape[:axis] + (-1, n) + a.shape[axis + 1:]
    return a.reshape(shape).sum(axis=axis)


def _clip_disk(x):
    rho = np.hypot(*x)
    return x / rho if rho > 1.0 else x


def build_searches(model: SignalModel, grid) -> list[AodSearch]:
    return [AodSearch(model, r, grid.aod_points) for r in range(model.n_ris)]


def _cfo_steering(nus, n, ts):
    return np.exp(-2j * np.pi * ts * np.outer(nus, np.arange(n)))


def estimate_cfo_los(y, ts: float, grid) -> tuple[float, float]:
    """CFO maximising ``|b(nu)^H y|^2``: coarse grid then local refinement.

    Returns ``(refined, coarse)``.
    """
    y = np.asarray(y)
    nus = grid.cfo_grid(ts)
    values = np.abs(_cfo_steering(nus, y.size, ts) @ y) ** 2
    coarse = float(nus[np.argmax(values)])
    norm = y.size * np.vdot(y, y).real
    if not grid.refine or norm == 0:
        return coarse, coarse
    ramp = -2j * np.pi * ts * np.arange(y.size)

    def f(x):
        return 1.0 - abs(np.exp(ramp * x[0]) @ y) ** 2 / norm

    step = nus[1] - nus[0] if nus.size > 1 else 1.0 / (y.size * ts)
    nu = refine_local(f, [coarse], step, grid.tol, grid.max_iters)[0]
    return float(nu), coarse


def unstructured_cfo_objective(y, schedule, nus, ts: float) -> np.ndarray:
    """``||C^H D^H(nu) Y||_F^2`` for each candidate CFO (NLoS code rows only)."""
    L = schedule.code_length
    Y = reshape_observations(y, L)
    C = schedule.codes[1:]
    D = np.exp(-2j * np.pi * ts * np.outer(np.atleast_1d(nus), np.arange(L)))
    T = np.einsum("rl,gl,lk->grk", C, D, Y)
    return np.sum(np.abs(T) ** 2, axis=(1, 2))


def estimate_cfo_unstructured(y, schedule, ts: float, grid) -> tuple[float, float]:
    y = np.asarray(y)
    nus = grid.cfo_grid(ts)
    values = unstructured_cfo_objective(y, schedule, nus, ts)
    coarse = float(nus[np.argmax(values)])
    norm = schedule.code_length * np.vdot(y, y).real
    if not grid.refine or norm == 0:
        return coarse, coarse

    def f(x):
        return 1.0 - unstructured_cfo_objective(y, schedule, x[:1], ts)[0] / norm

    step = nus[1] - nus[0] if nus.size > 1 else 1.0 / (y.size * ts)
    nu = refine_local(f, [coarse], step, grid.tol, grid.max_iters)[0]
    return float(nu), coarse


def estimate_aod_per_ris(ytilde, search: AodSearch, grid):
    """AoD and gain of one RIS from its CFO-free decoded signal."""
    return search.estimate(ytilde, grid.refine, grid.tol, grid.max_iters)


def _per_ris_stage(y, model, searches, nu, grid):
    ytil = decode_all(np.asarray(y) * model.cfo(-nu), model.schedule)
    cosines, angles, degenerate = [], [], False
    for r, search in enumerate(searches):
        x, angle, _, deg = search.estimate(ytil[r + 1], grid.refine, grid.tol, grid.max_iters)
        cosines.append(x)
        angles.append(angle)
        degenerate |= deg
    return np.array(cosines), np.array(angles), degenerate


def _coarse_cosines(y, searches, model, nu):
    ytil = decode_all(np.asarray(y) * model.cfo(-nu), model.schedule)
    return np.array([[s.u[s.coarse(ytil[r + 1])], s.v[s.coarse(ytil[r + 1])]]
                     for r, s in enumerate(searches)])


def _angles_from_cosines(layout, cosines):
    return np.array([layout.angle_from_in_plane(*_clip_disk(np.asarray(c))) for c in cosines])


def _finish(y, model, nu, cosines, los, coarse_residual, degenerate, hypothesis):
    angles = _angles_from_cosines(model.layout, cosines)
    A = model.design(nu, angles, los)
    alpha = _solve_gains(A, y)
    residual = _residual(A, y)
    return ChannelEstimate(
        nu=float(nu), angles=angles, gains=alpha[int(los):], hypothesis=hypothesis,
        residual=residual, coarse_residual=coarse_residual,
        los_gain=complex(alpha[0]) if los else None,
        cosines=np.array([_clip_disk(np.asarray(c)) for c in cosines]), degenerate=degenerate)


def estimate_los(y, model: SignalModel, grid, searches=None, cfo: float | None = None) -> ChannelEstimate:
    """Direct path present: CFO, decode, per-RIS AoD, joint gains.

    ``cfo`` fixes the CFO instead of estimating it.
    """
    y = np.asarray(y)
    searches = build_searches(model, grid) if searches is None else searches
    if cfo is None:
        nu, nu_coarse = estimate_cfo_los(y, model.ts, grid)
    else:
        nu = nu_coarse = float(cfo)
    coarse_cos = _coarse_cosines(y, searches, model, nu_coarse)
    coarse_res = compressed_residual(y, model, nu_coarse,
                                     _angles_from_cosines(model.layout, coarse_cos), True)
    cosines, _, degenerate = _per_ris_stage(y, model, searches, nu, grid)
    est = _finish(y, model, nu, cosines, True, coarse_res, degenerate, "los")
    if est.residual > coarse_res:
        est = _finish(y, model, nu_coarse, coarse_cos, True, coarse_res, degenerate, "los")
    return est


def _joint_refine(y, model, nu, cosines, los, grid, step_nu, fix_nu=False):
    """Polish (nu, cosines) on the compressed full-signal objective."""
    y = np.asarray(y)
    norm = np.vdot(y, y).real
    if norm == 0:
        return nu, cosines
    n = model.n_ris

    def unpack(x):
        if fix_nu:
            return nu, x.reshape(n, 2)
        return x[0], x[1:].reshape(n, 2)

    def f(x):
        nu_x, cos_x = unpack(x)
        xbars = [model.xbar_cosines(r, *cos_x[r]) for r in range(n)]
        return _residual(_design_from_xbars(model, nu_x, xbars, los), y) / norm

    step_cos = model.wavelength / model.layout.spacing / grid.aod_points
    x0 = np.ravel(cosines) if fix_nu else np.concatenate([[nu], np.ravel(cosines)])
    scale = np.full(x0.shape, step_cos)
    if not fix_nu:
        scale[0] = step_nu
    x = refine_local(f, x0, scale, grid.tol, grid.max_iters)
    nu_x, cos_x = unpack(x)
    return float(nu_x), cos_x


def _ml_cfo_scan(y, model, searches, nus, chunk: int = 64):
    """Per-CFO coarse AoDs and full-model residuals for the NLoS ML search."""
    y = np.asarray(y)
    schedule = model.schedule
    L, K, n = schedule.code_length, schedule.n_blocks, model.n_ris
    residuals = np.empty(len(nus))
    best = np.empty((len(nus), n), dtype=int)
    codes = schedule.codes[1:]
    for start in range(0, len(nus), chunk):
        part = nus[start:start + chunk]
        ytil = y[None, :] * _cfo_steering(part, y.size, model.ts)
        decoded = ytil.reshape(len(part), K, L) @ codes.T / L
        for r, search in enumerate(searches):
            best[start:start + len(part), r] = np.argmax(search.scores(decoded[:, :, r]), axis=1)
        for g in range(len(part)):
            idx = best[start + g]
            cols = [np.outer(searches[r].table[idx[r]], schedule.code(r)).ravel() for r in range(n)]
            residuals[start + g] = _residual(np.stack(cols, axis=1), ytil[g])
    return residuals, best


def estimate_nlos_ml(y, model: SignalModel, grid, searches=None, cfo: float | None = None) -> ChannelEstimate:
    """Direct path blocked: CFO grid with nested per-RIS AoD searches.

    For every candidate CFO the signal is de-rotated and decoded, each RIS
    gets its coarse AoD, and the candidate with the smallest full-model
    residual wins. A joint refinement of (CFO, AoDs) follows.
    """
    y = np.asarray(y)
    searches = build_searches(model, grid) if searches is None else searches
    nus = grid.cfo_grid(model.ts, ml=True) if cfo is None else np.array([float(cfo)])
    residuals, best = _ml_cfo_scan(y, model, searches, nus)
    g = int(np.argmin(residuals))
    nu = float(nus[g])
    cosines = np.array([[searches[r].u[i], searches[r].v[i]] for r, i in enumerate(best[g])])
    coarse_res = compressed_residual(y, model, nu, _angles_from_cosines(model.layout, cosines), False)
    degenerate = not np.any(y)
    if grid.refine and not degenerate:
        step_nu = nus[1] - nus[0] if nus.size > 1 else 1.0 / (y.size * model.ts)
        nu_r, cos_r = _joint_refine(y, model, nu, cosines, False, grid, step_nu, fix_nu=cfo is not None)
    else:
        nu_r, cos_r = nu, cosines
    est = _finish(y, model, nu_r, cos_r, False, coarse_res, degenerate, "nlos")
    if est.residual > coarse_res:
        est = _finish(y, model, nu, cosines, False, coarse_res, degenerate, "nlos")
    return est


def estimate_nlos_lc(y, model: SignalModel, grid, searches=None, cfo: float | None = None,
                     joint_refine: bool = True) -> ChannelEstimate:
    """Direct path blocked, low complexity: unstructured CFO search first."""
    y = np.asarray(y)
    searches = build_searches(model, grid) if searches is None else searches
    if cfo is None:
        nu, nu_coarse = estimate_cfo_unstructured(y, model.schedule, model.ts, grid)
    else:
        nu = nu_coarse = float(cfo)
    coarse_cos = _coarse_cosines(y, searches, model, nu_coarse)
    coarse_res = compressed_residual(y, model, nu_coarse,
                                     _angles_from_cosines(model.layout, coarse_cos), False)
    cosines, _, degenerate = _per_ris_stage(y, model, searches, nu, grid)
    if joint_refine and grid.refine and not degenerate:
        nus = grid.cfo_grid(model.ts)
        step_nu = nus[1] - nus[0] if nus.size > 1 else 1.0 / (y.size * model.ts)
        nu, cosines = _joint_refine(y, model, nu, cosines, False, grid, step_nu, fix_nu=cfo is not None)
    est = _finish(y, model, nu, cosines, False, coarse_res, degenerate, "nlos")
    if est.residual > coarse_res:
        est = _finish(y, model, nu_coarse, coarse_cos, False, coarse_res, degenerate, "nlos")
    return est


ESTIMATORS = {
    "los": estimate_los,
    "ml": estimate_nlos_ml,
    "lc": estimate_nlos_lc,
}
