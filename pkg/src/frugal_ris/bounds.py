"""Fisher information, Cramer-Rao bounds and the position error bound.

Parameter orderings
-------------------
channel domain : [Re a0, Im a0, ..., Re aR, Im aR, nu, az_1, el_1, ..., az_R, el_R]
position domain: [Re a0, Im a0, ..., Re aR, Im aR, nu, px, py, pz]

The direct-path pair is dropped under NLoS. The Jacobian returned by
`jacobian_channel_to_position` has one row per position-domain parameter, so
``F_pos = J @ F_ch @ J.T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .geometry import GeometryError, aod_jacobian


class IdentifiabilityError(np.linalg.LinAlgError):
    """The Fisher information matrix is singular for the requested parameters."""


def _n_gains(n_ris: int, los: bool) -> int:
    return 2 * (n_ris + int(los))


def channel_derivatives(model, nu: float, angles, gains, los: bool) -> np.ndarray:
    """Columns dz/d(eta_ch) of the noise-free signal, shape (M, 4R + 1 [+ 2])."""
    angles = np.asarray(angles, dtype=float)
    b = model.cfo(nu)
    sqrt_p = np.sqrt(model.power)
    alpha = gains.vector(los)
    paths = ([b] if los else []) + [model.response(r, angles[r]) * b for r in range(model.n_ris)]
    cols = []
    for path in paths:
        cols += [sqrt_p * path, 1j * sqrt_p * path]
    z = sqrt_p * np.stack(paths, axis=1) @ alpha
    cols.append(2j * np.pi * model.ts * np.arange(model.n_tx) * z)
    for r in range(model.n_ris):
        grad = model.xbar_grad(r, angles[r])
        for i in range(2):
            cols.append(sqrt_p * gains.ris[r] * model.expand(r, grad[:, i]) * b)
    return np.stack(cols, axis=1)


def fim_channel(model, nu: float, angles, gains, los: bool) -> np.ndarray:
    """Channel-domain FIM ``(2 / sigma^2) Re{D^H D}``."""
    D = channel_derivatives(model, nu, angles, gains, los)
    F = 2.0 / model.noise_power * np.real(D.conj().T @ D)
    return (F + F.T) / 2


def jacobian_channel_to_position(scenario, los: bool, ue=None) -> np.ndarray:
    """d(eta_ch)/d(eta) arranged as (dim eta) x (dim eta_ch)."""
    ue = scenario.ue if ue is None else ue
    n_ris = scenario.n_ris
    g = _n_gains(n_ris, los)
    n_ch = g + 1 + 2 * n_ris
    n_pos = g + 1 + 3
    J = np.zeros((n_pos, n_ch))
    J[: g + 1, : g + 1] = np.eye(g + 1)
    for r, (p_r, rot) in enumerate(zip(scenario.ris_positions, scenario.rotations)):
        try:
            d_theta = aod_jacobian(ue, p_r, rot)
        except GeometryError as exc:
            raise IdentifiabilityError(f"RIS {r}: {exc}") from None
        J[g + 1:, g + 1 + 2 * r: g + 3 + 2 * r] = d_theta.T
    return J


def fim_position(F_ch: np.ndarray, J: np.ndarray) -> np.ndarray:
    F = J @ F_ch @ J.T
    return (F + F.T) / 2


def safe_inverse(F: np.ndarray, rcond: float = 1e-12) -> tuple[np.ndarray, float]:
    """Inverse of a symmetric PSD matrix after diagonal equilibration.

    Returns the inverse and the condition number of the equilibrated matrix;
    raises `IdentifiabilityError` if that condition number exceeds 1/rcond.
    """
    d = np.sqrt(np.diag(F))
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise IdentifiabilityError("FIM has a zero or invalid diagonal entry")
    Fn = F / np.outer(d, d)
    eig = np.linalg.eigvalsh(Fn)
    cond = eig[-1] / eig[0] if eig[0] > 0 else np.inf
    if eig[0] <= rcond * eig[-1]:
        raise IdentifiabilityError(f"singular FIM (equilibrated condition number {cond:.3g})")
    inv = linalg.cho_solve(linalg.cho_factor(Fn), np.eye(len(F)))
    return inv / np.outer(d, d), float(cond)


@dataclass
class BoundsReport:
    hypothesis: str
    peb: float
    cfo: float
    aod: np.ndarray | None = None
    condition: float = float("nan")
    condition_channel: float = float("nan")


def bounds_report(F_pos: np.ndarray, hypothesis: str, F_ch: np.ndarray | None = None) -> BoundsReport:
    """PEB and CFO bound from the positional FIM; AoD bounds from ``F_ch`` if given."""
    los = hypothesis.lower() == "los"
    if hypothesis.lower() not in ("los", "nlos"):
        raise ValueError("hypothesis must be 'los' or 'nlos'")
    n_gain_pos = F_pos.shape[0] - 4
    inv, cond = safe_inverse(F_pos)
    peb = float(np.sqrt(np.trace(inv[-3:, -3:])))
    cfo = float(np.sqrt(inv[n_gain_pos, n_gain_pos]))
    aod, cond_ch = None, float("nan")
    if F_ch is not None:
        inv_ch, cond_ch = safe_inverse(F_ch)
        start = n_gain_pos + 1
        aod = np.sqrt(np.diag(inv_ch)[start:]).reshape(-1, 2)
    return BoundsReport(hypothesis="los" if los else "nlos", peb=peb, cfo=cfo, aod=aod,
                        condition=cond, condition_channel=cond_ch)


def compute_bounds(model, nu: float, gains, los: bool) -> BoundsReport:
    """Bounds at the scenario's true UE position for one schedule and gain draw."""
    scenario = model.scenario
    F_ch = fim_channel(model, nu, scenario.aods(), gains, los)
    J = jacobian_channel_to_position(scenario, los)
    return bounds_report(fim_position(F_ch, J), "los" if los else "nlos", F_ch)
